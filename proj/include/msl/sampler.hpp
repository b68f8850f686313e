#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msl/core.hpp"
#include "msl/likelihood.hpp"
#include "msl/priors.hpp"
#include "msl/rng.hpp"

namespace msl {

// Deterministic fork-join helper. Work items are split into contiguous
// index ranges; all randomness comes from per-site streams, so results do
// not depend on the number of workers.
class WorkerPool {
 public:
  explicit WorkerPool(int n_workers = 0);  // 0 -> hardware concurrency
  int size() const { return size_; }
  void parallel_for(std::int64_t n,
                    const std::function<void(std::int64_t, std::int64_t)>& body) const;

 private:
  int size_ = 1;
};

struct SamplerCheckpoint;

struct SamplerConfig {
  int n_mc = 5000;
  int n_bi = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
  int workers = 0;

  bool tv_prior_enabled = true;      // TV depth prior vs independent uniform
  bool anomalies_enabled = true;     // sparse-anomaly term on/off (nominal LMM when off)
  bool depth_updates_enabled = true; // frozen depths (integrated-waveform mode)
  bool adapt_hyper = true;           // SAPG adaptation during burn-in
  bool store_samples = true;         // keep raw thinned samples besides accumulators
  std::optional<double> fixed_abar;  // fixed prior mean instead of the gamma-MRF

  int hmc_leapfrog = 10;             // admissible range [5, 20] (0 allowed in tests)
  double hmc_step0 = 0.02;
  double hmc_target_accept = 0.8;
  double hmc_accept_lo = 0.6, hmc_accept_hi = 0.9;

  double sapg_delta0 = 1.0;          // delta_u = delta0 * u^-decay
  double sapg_decay = 0.8;
  double sapg_max_rel_step = 0.05;   // per-sweep relative cap on theta moves

  FixedHyper fixed;
  AdaptedHyper theta0;               // c is sized to R when left empty
  HyperBox box;

  int checkpoint_every = 0;
  std::function<void(const SamplerCheckpoint&)> on_checkpoint;
  int progress_every = 0;
  std::function<void(int, double, const AdaptedHyper&)> progress;

  std::vector<std::string> violations() const;
};

// Running sums sufficient for every estimator; they respect thinning so
// sample-based and accumulator-based estimates coincide.
struct ChainAccum {
  int n_samples = 0;
  int width = 0;  // depth support width
  std::vector<std::uint32_t> depth_hist;   // n_pix * width
  std::vector<double> a_sum;               // n_pix * R
  std::vector<std::uint32_t> z_count;      // n_sites
  std::vector<double> x_sum_z1;            // n_sites, sum of x where z=1
  std::vector<std::uint32_t> x_count_z1;   // n_sites

  void init(int n_pix, int n_endmember, int n_sites, int support_width);
  void add(const SceneState& s, const DepthSupport& sup);
};

struct SweepTrace {
  double log_lik = 0.0;
  std::int64_t tv_ordered = 0;  // tv_potential of the depth field
  IsingStats ising;
  AdaptedHyper theta;
  double hmc_accept_rate = 0.0;
};

struct SampleRecord {
  std::vector<int> t;
  std::vector<double> a;
  std::vector<std::uint8_t> z;
  std::vector<double> x;
};

struct ChainOutput {
  GridDims dims;
  DepthSupport support;
  int n_endmember = 0;
  ChainAccum accum;
  std::vector<SampleRecord> samples;
  std::vector<SweepTrace> trace;    // one entry per sweep
  AdaptedHyper theta_hat;
  SceneState final_state;
};

// ---- individual update kernels ---------------------------------------------
// All kernels draw from streams addressed by (seed, sweep, stage, site) and
// are bit-reproducible for any worker count.

// Checkerboard Gibbs scan of the depth field (both colours); with the TV
// prior disabled all pixels are refreshed in a single parallel pass.
void update_depths(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                   double eps, bool tv_enabled, std::uint64_t seed, std::uint32_t sweep,
                   const WorkerPool& pool);

// Two-colour Gibbs scan of the anomaly labels; the (i+j+l) parity colouring
// separates both spatial and spectral neighbours.
void update_labels(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                   const AdaptedHyper& theta, std::uint64_t seed, std::uint32_t sweep,
                   const WorkerPool& pool);

// Constrained HMC refresh of every pixel's abundance vector (reflection at
// zero). Returns the number of accepted pixels.
int update_abundances(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                      const AdaptedHyper& theta, std::optional<double> fixed_abar,
                      double hmc_step, int leapfrog, std::uint64_t seed, std::uint32_t sweep,
                      const WorkerPool& pool);

// Metropolis-Hastings with the gamma prior as proposal; sites with z=0
// accept automatically.
void update_anomaly_values(SceneState& state, const SuffStats& stats,
                           const EndmemberLibrary& lib, const FixedHyper& fixed,
                           std::uint64_t seed, std::uint32_t sweep, const WorkerPool& pool);

// Exact inverse-gamma refresh of the gamma-MRF auxiliaries (all parallel).
void update_gamma_aux(SceneState& state, const AdaptedHyper& theta, std::uint64_t seed,
                      std::uint32_t sweep, const WorkerPool& pool);

// ---- prior-only kernels for the SAPG auxiliary chains -----------------------

void update_depths_prior_only(std::vector<int>& t, int n_row, int n_col,
                              const DepthSupport& sup, double eps, bool tv_enabled,
                              std::uint64_t seed, std::uint32_t sweep, const WorkerPool& pool);

void update_labels_prior_only(std::vector<std::uint8_t>& z, int n_row, int n_col, int n_band,
                              const AdaptedHyper& theta, std::uint64_t seed, std::uint32_t sweep,
                              const WorkerPool& pool);

void update_gmrf_prior(std::vector<double>& a_r, std::vector<double>& gamma_r, int n_row,
                       int n_col, double c, int r, std::uint64_t seed, std::uint32_t sweep,
                       const WorkerPool& pool);

// ---- SAPG hyperparameter adaptation -------------------------------------------

// Sufficient statistics entering the marginal-likelihood gradient.
struct SapgStats {
  double tv_edges = 0.0;            // per-edge depth TV statistic
  IsingStats ising;                 // ordered-pair label statistics
  std::vector<double> gmrf_score;   // d/dc of the gamma-MRF exponent, per endmember
};

SapgStats collect_sapg_stats(std::span<const int> t, std::span<const std::uint8_t> z,
                             std::span<const double> a, std::size_t a_stride,
                             std::span<const double> gamma, int n_row, int n_col, int n_band,
                             int n_endmember);

// Per-parameter gradient normalizers (statistic term counts).
struct SapgNormalizers {
  double depth_edges = 1.0;
  double spatial_edges = 1.0;
  double spectral_edges = 1.0;
  double sites = 1.0;
  double gmrf_terms = 1.0;
  static SapgNormalizers for_grid(const GridDims& dims);
};

// One projected stochastic-gradient step on log f(Y|theta): for each
// adapted parameter the gradient is the posterior-minus-prior (main minus
// aux) expectation of its statistic, with the sign flipped for eps whose
// potential enters the exponent negatively. Steps are capped at a relative
// max_rel_step and projected onto the box.
AdaptedHyper sapg_update_hyperparams(const AdaptedHyper& theta, const SapgStats& main_stats,
                                     const SapgStats& aux_stats, double delta_u,
                                     double max_rel_step, const SapgNormalizers& norm,
                                     const HyperBox& box, bool adapt_eps, bool adapt_beta,
                                     bool adapt_c);

// ---- full chain --------------------------------------------------------------

struct SamplerCheckpoint {
  std::uint32_t sweeps_done = 0;
  AdaptedHyper theta;
  double hmc_step = 0.0;
  SceneState state;
  std::vector<int> aux_t;
  std::vector<std::uint8_t> aux_z;
  std::vector<std::vector<double>> aux_a;      // per endmember
  std::vector<std::vector<double>> aux_gamma;  // per endmember
  ChainAccum accum;
  std::vector<SampleRecord> samples;
  std::vector<SweepTrace> trace;
};

SceneState initial_state(const ProblemInstance& inst, const SuffStats& stats,
                         const SamplerConfig& cfg);

ChainOutput run_chain(const ProblemInstance& inst, const SamplerConfig& cfg);

// Continue an interrupted run; reproduces the uninterrupted chain bit for bit.
ChainOutput resume_chain(const ProblemInstance& inst, const SamplerConfig& cfg,
                         const SamplerCheckpoint& ckpt);

}  // namespace msl

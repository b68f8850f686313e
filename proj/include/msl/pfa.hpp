#pragma once

#include <span>
#include <vector>

#include "msl/likelihood.hpp"
#include "msl/sampler.hpp"

namespace msl {

struct ReductionCheck {
  bool valid = false;
  double max_rel_variation = 0.0;
};

// The reduction holds when the integrated response is depth-independent
// over the whole support, i.e. no kernel truncation occurs.
ReductionCheck check_reduction_validity(const SuffStats& stats, double tol = 1e-6);

// Integrated-waveform observation: an L x (n_row n_col) count matrix whose
// Poisson mean is the spectrum scaled by the per-band constant g~.
struct ReducedObservation {
  int n_band = 0;
  int n_pix = 0;
  std::vector<double> y_tilde;       // [l * n_pix + p]
  std::vector<double> g_tilde;       // per band constants
  std::vector<double> m_tilde;       // endmember columns scaled by g~, L x R
  ReductionCheck check;
};

ReducedObservation integrate_cube(const PhotonCube& cube, const SuffStats& stats,
                                  const EndmemberLibrary* lib = nullptr);

// Log-likelihood of one pixel under the reduced model (log y! dropped).
double reduced_pixel_log_lik(const ReducedObservation& red, int pix,
                             std::span<const double> lambda);

// Depth-free unmixing: the same abundance/label/anomaly/gamma kernels run
// with depth updates disabled and g~ treated as per-band constants.
ChainOutput pfa_unmix(const ProblemInstance& inst, const SamplerConfig& cfg, bool force = false);

}  // namespace msl

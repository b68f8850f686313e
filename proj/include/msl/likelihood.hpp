#pragma once

#include <span>
#include <vector>

#include "msl/core.hpp"

namespace msl {

// log f_P(k; lambda) with the conventions log f(0;0) = 0, log f(k>0;0) = -inf.
double poisson_log_pmf(std::int64_t k, double lambda);

// Precomputed tables that make every sampler update O(L) or O(T') per site:
//   g_tilde:    sum_t g_l(t - t0 - d) per (band, delay, t0), the integrated
//               response seen from depth bin t0
//   depth_data: sum_l sum_t y log g_l(t - t0 - d) per (pixel, t0), the
//               depth-dependent data term of the log-likelihood
// Both are pure functions of (Y, g, DepthSupport). The per-band data term
// is not materialized; log_g_dot_y recomputes it on demand from the sparse
// cube (only diagnostics and tests need it).
struct SuffStats {
  GridDims dims;
  DepthSupport support;
  std::vector<double> y_tilde;       // per (pixel, band) integrated counts
  std::vector<int> delays;           // distinct per-pixel delays, sorted
  std::vector<int> pixel_delay_idx;  // per pixel, index into delays
  std::vector<double> g_tilde;       // [(l*n_delays + d)*width + (t0-t_min)]
  std::vector<double> depth_data;    // [pix*width + (t0-t_min)]

  int width() const { return support.width(); }
  int n_delays() const { return static_cast<int>(delays.size()); }

  double y_tilde_at(int pix, int l) const {
    return y_tilde[static_cast<std::size_t>(pix) * dims.n_band + l];
  }

  double g_tilde_at(int l, int delay_idx, int t0) const {
    return g_tilde[(static_cast<std::size_t>(l) * delays.size() + delay_idx) * width() +
                   (t0 - support.t_min)];
  }
  double g_tilde_for_pixel(int l, int pix, int t0) const {
    return g_tilde_at(l, pixel_delay_idx[pix], t0);
  }
  double depth_data_at(int pix, int t0) const {
    return depth_data[static_cast<std::size_t>(pix) * width() + (t0 - support.t_min)];
  }
  // Largest relative variation of g_tilde over the support, per band,
  // maximized over bands and delays. Zero when no truncation occurs.
  double max_g_tilde_rel_variation() const;
};

SuffStats build_suff_stats(const PhotonCube& cube, const ImpulseResponseSet& irf,
                           const DepthSupport& sup);

// sum_t y[i,j,l,t] * log g_l(t - t0 - d_pixel); -inf when a photon sits
// outside the kernel reach of t0.
double log_g_dot_y(const PhotonCube& cube, const ImpulseResponseSet& irf, int i, int j, int l,
                   int t0);

// Reduced per-pixel log-likelihood
//   sum_l [ y~_l log lambda_l - lambda_l g~_l(t0) + D_l(t0) ]
// evaluated from the tables. The sum_l,t log y! constant is dropped unless
// with_log_factorial is set; every sampler ratio is invariant to it.
double pixel_log_lik(const SuffStats& stats, const PhotonCube& cube, int i, int j,
                     std::span<const double> lambda, int t0, bool with_log_factorial = false);

// Same reduction from raw per-band arrays (lambda-dependent part only,
// i.e. without the depth data term and constants).
double pixel_log_lik_terms(std::span<const double> y_tilde, std::span<const double> g_tilde,
                           std::span<const double> lambda);

// sum over pixels of pixel_log_lik at the state's depths and spectra.
double joint_log_lik(const SuffStats& stats, const PhotonCube& cube, const EndmemberLibrary& lib,
                     const SceneState& state, bool with_log_factorial = false);

// d/da_q of the reduced log-likelihood: sum_l M_lq (y~_l / lambda_l - g~_l),
// lambda = M a + r. Requires lambda_l > 0 wherever y~_l > 0.
void grad_log_lik_abundance(std::span<const double> y_tilde, std::span<const double> g_tilde,
                            const EndmemberLibrary& lib, std::span<const double> abundance,
                            std::span<const double> anomaly, std::span<double> grad_out);

// d/dx_l of the reduced log-likelihood: z_l (y~_l / lambda_l - g~_l).
double grad_log_lik_anomaly_value(double y_tilde, double g_tilde, double lambda, bool z);

// sum_l sum_t log y[i,j,l,t]! for one pixel.
double pixel_log_factorial(const PhotonCube& cube, int i, int j);

}  // namespace msl

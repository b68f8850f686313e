#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "msl/core.hpp"

namespace msl {

// Pseudo-abundance used outside the image when forming gamma-MRF
// boundary neighbourhoods.
inline constexpr double kGmrfBoundaryAbundance = 0.01;

// ---- total-variation depth MRF --------------------------------------------

// phi(T) = sum_{i,j} sum_{(i',j') in V(i,j)} |t_ij - t_i'j'| over the
// 4-connected neighbourhood; ordered pairs, so every edge counts twice.
std::int64_t tv_potential(std::span<const int> t, int n_row, int n_col);

// Same potential counted once per unordered edge; this is the coupling
// the sampling density exp(-eps * edge_sum) and the SAPG statistics use,
// so local conditionals carry one term per neighbour.
std::int64_t tv_edge_sum(std::span<const int> t, int n_row, int n_col);

// -eps * sum_neighbours |t - t'| (site-local terms, partition dropped).
double depth_conditional_log_prior(int t, std::span<const int> neighbour_vals, double eps);

// ---- hidden gamma-MRF abundance prior --------------------------------------

// Harmonic prior-mean parameter from the four gamma corners of a cell.
double gmrf_abar(double g00, double g01, double g10, double g11);

// Arithmetic inverse-gamma scale driver from the four abundance corners.
double gmrf_beta(double a00, double a01, double a10, double a11);

// abar for abundance (i,j) from the gamma field of one endmember,
// gamma laid out (n_row+1) x (n_col+1).
double gmrf_abar_at(std::span<const double> gamma_r, int n_row, int n_col, int i, int j);

// beta for gamma site (u,v) from a strided abundance field; abundances
// outside the image are the fixed boundary pseudo-value.
double gmrf_beta_at(const double* a, int n_row, int n_col, std::size_t stride, int u, int v);

// Unnormalized log-density of (A_r, Gamma_r):
//   (c-1) sum log a - (c+1) sum log gamma - sum_E c a/(4 gamma).
// With include_boundary the edge sum also covers the fixed boundary
// pseudo-abundance slots; that variant is the density the conditional pair
// (gamma | A with the boundary rule, a | Gamma) leaves invariant. Without
// it only edges between real sites count. log G(c) is omitted.
double gmrf_joint_log_density(const double* a, std::size_t a_stride,
                              std::span<const double> gamma_r, int n_row, int n_col, double c,
                              bool include_boundary = true);

// d/dc of the unnormalized exponent at (A_r, Gamma_r):
//   sum log a - sum log gamma - sum_E a/(4 gamma).
double gmrf_c_score(const double* a, std::size_t a_stride, std::span<const double> gamma_r,
                    int n_row, int n_col);

// ---- Ising anomaly-label model ---------------------------------------------

struct IsingStats {
  std::int64_t phi_l = 0;   // spectral-neighbour agreements, ordered pairs
  std::int64_t phi_n = 0;   // spatial-neighbour agreements, ordered pairs
  std::int64_t n_zero = 0;
  std::int64_t n_one = 0;
};

IsingStats ising_suff_stats(std::span<const std::uint8_t> z, int n_row, int n_col, int n_band);

// Site-local log-weights (w0, w1) for z=0/1:
//   w_k = beta_n * (spatial agreements if z=k) + beta_l * (spectral ditto)
//       + (beta0 if k=0 else 1-beta0)
std::pair<double, double> ising_local_log_odds(std::span<const std::uint8_t> z, int n_row,
                                               int n_col, int n_band, int i, int j, int l,
                                               double beta_n, double beta_l, double beta0);

// Unnormalized log-density with per-edge coupling (ordered counts halved),
// consistent with the local conditionals above.
double ising_log_density(const IsingStats& s, double beta_n, double beta_l, double beta0);

// ---- anomaly value prior ----------------------------------------------------

// Gamma(shape alpha, scale nu) log-density; -inf for x <= 0.
double anomaly_value_log_prior(double x, double alpha, double nu);

}  // namespace msl

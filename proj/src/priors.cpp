#include "msl/priors.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

namespace msl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::int64_t tv_edge_sum(std::span<const int> t, int n_row, int n_col) {
  std::int64_t s = 0;
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j) {
      const int v = t[i * n_col + j];
      if (j + 1 < n_col) s += std::abs(v - t[i * n_col + j + 1]);
      if (i + 1 < n_row) s += std::abs(v - t[(i + 1) * n_col + j]);
    }
  return s;
}

std::int64_t tv_potential(std::span<const int> t, int n_row, int n_col) {
  return 2 * tv_edge_sum(t, n_row, n_col);
}

double depth_conditional_log_prior(int t, std::span<const int> neighbour_vals, double eps) {
  std::int64_t s = 0;
  for (int n : neighbour_vals) s += std::abs(t - n);
  return -eps * static_cast<double>(s);
}

double gmrf_abar(double g00, double g01, double g10, double g11) {
  if (!(g00 > 0.0 && g01 > 0.0 && g10 > 0.0 && g11 > 0.0))
    throw ValidationError("gmrf_abar: gamma values must be positive");
  return 4.0 / (1.0 / g00 + 1.0 / g01 + 1.0 / g10 + 1.0 / g11);
}

double gmrf_beta(double a00, double a01, double a10, double a11) {
  return (a00 + a01 + a10 + a11) / 4.0;
}

double gmrf_abar_at(std::span<const double> gamma_r, int n_row, int n_col, int i, int j) {
  const int cols = n_col + 1;
  (void)n_row;
  return gmrf_abar(gamma_r[i * cols + j], gamma_r[(i + 1) * cols + j],
                   gamma_r[i * cols + j + 1], gamma_r[(i + 1) * cols + j + 1]);
}

double gmrf_beta_at(const double* a, int n_row, int n_col, std::size_t stride, int u, int v) {
  auto slot = [&](int i, int j) {
    if (i < 0 || i >= n_row || j < 0 || j >= n_col) return kGmrfBoundaryAbundance;
    return a[(static_cast<std::size_t>(i) * n_col + j) * stride];
  };
  return gmrf_beta(slot(u - 1, v - 1), slot(u, v - 1), slot(u - 1, v), slot(u, v));
}

double gmrf_joint_log_density(const double* a, std::size_t a_stride,
                              std::span<const double> gamma_r, int n_row, int n_col, double c,
                              bool include_boundary) {
  if (!(c > 1.0)) throw ValidationError("gmrf_joint_log_density: c must exceed 1");
  double s = 0.0;
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j) {
      const double av = a[(static_cast<std::size_t>(i) * n_col + j) * a_stride];
      if (!(av >= 0.0)) throw ValidationError("gmrf_joint_log_density: negative abundance");
      s += (c - 1.0) * std::log(av);
    }
  const int cols = n_col + 1;
  auto slot = [&](int i, int j) -> double {
    if (i < 0 || i >= n_row || j < 0 || j >= n_col)
      return include_boundary ? kGmrfBoundaryAbundance : 0.0;
    return a[(static_cast<std::size_t>(i) * n_col + j) * a_stride];
  };
  for (int u = 0; u <= n_row; ++u)
    for (int v = 0; v <= n_col; ++v) {
      const double g = gamma_r[u * cols + v];
      if (!(g > 0.0)) throw ValidationError("gmrf_joint_log_density: nonpositive gamma");
      const double edge =
          slot(u - 1, v - 1) + slot(u, v - 1) + slot(u - 1, v) + slot(u, v);
      s += -(c + 1.0) * std::log(g) - c * edge / (4.0 * g);
    }
  return s;
}

double gmrf_c_score(const double* a, std::size_t a_stride, std::span<const double> gamma_r,
                    int n_row, int n_col) {
  double s = 0.0;
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j)
      s += std::log(a[(static_cast<std::size_t>(i) * n_col + j) * a_stride]);
  const int cols = n_col + 1;
  for (int u = 0; u <= n_row; ++u)
    for (int v = 0; v <= n_col; ++v) {
      const double g = gamma_r[u * cols + v];
      s += -std::log(g) - gmrf_beta_at(a, n_row, n_col, a_stride, u, v) / g;
    }
  return s;
}

IsingStats ising_suff_stats(std::span<const std::uint8_t> z, int n_row, int n_col, int n_band) {
  IsingStats st;
  auto at = [&](int i, int j, int l) { return z[(i * n_col + j) * n_band + l]; };
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j)
      for (int l = 0; l < n_band; ++l) {
        const std::uint8_t v = at(i, j, l);
        if (v)
          ++st.n_one;
        else
          ++st.n_zero;
        // unordered edges, doubled below
        if (i + 1 < n_row && at(i + 1, j, l) == v) ++st.phi_n;
        if (j + 1 < n_col && at(i, j + 1, l) == v) ++st.phi_n;
        if (l + 1 < n_band && at(i, j, l + 1) == v) ++st.phi_l;
      }
  st.phi_n *= 2;
  st.phi_l *= 2;
  return st;
}

std::pair<double, double> ising_local_log_odds(std::span<const std::uint8_t> z, int n_row,
                                               int n_col, int n_band, int i, int j, int l,
                                               double beta_n, double beta_l, double beta0) {
  auto at = [&](int ii, int jj, int ll) { return z[(ii * n_col + jj) * n_band + ll]; };
  int spatial_ones = 0, spatial_deg = 0, spectral_ones = 0, spectral_deg = 0;
  if (i > 0) { ++spatial_deg; spatial_ones += at(i - 1, j, l); }
  if (i + 1 < n_row) { ++spatial_deg; spatial_ones += at(i + 1, j, l); }
  if (j > 0) { ++spatial_deg; spatial_ones += at(i, j - 1, l); }
  if (j + 1 < n_col) { ++spatial_deg; spatial_ones += at(i, j + 1, l); }
  if (l > 0) { ++spectral_deg; spectral_ones += at(i, j, l - 1); }
  if (l + 1 < n_band) { ++spectral_deg; spectral_ones += at(i, j, l + 1); }
  const double w0 = beta_n * (spatial_deg - spatial_ones) +
                    beta_l * (spectral_deg - spectral_ones) + beta0;
  const double w1 = beta_n * spatial_ones + beta_l * spectral_ones + (1.0 - beta0);
  return {w0, w1};
}

double ising_log_density(const IsingStats& s, double beta_n, double beta_l, double beta0) {
  return beta_n * (static_cast<double>(s.phi_n) / 2.0) +
         beta_l * (static_cast<double>(s.phi_l) / 2.0) +
         beta0 * static_cast<double>(s.n_zero) + (1.0 - beta0) * static_cast<double>(s.n_one);
}

double anomaly_value_log_prior(double x, double alpha, double nu) {
  if (!(alpha > 0.0) || !(nu > 0.0))
    throw ValidationError("anomaly_value_log_prior: alpha and nu must be positive");
  if (!(x > 0.0)) return -kInf;
  return (alpha - 1.0) * std::log(x) - x / nu - alpha * std::log(nu) - std::lgamma(alpha);
}

}  // namespace msl

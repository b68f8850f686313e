#include "msl/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace msl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double poisson_log_pmf(std::int64_t k, double lambda) {
  if (k < 0) throw ValidationError("poisson_log_pmf: negative count");
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw ValidationError("poisson_log_pmf: negative or non-finite mean");
  if (lambda == 0.0) return k == 0 ? 0.0 : -kInf;
  return static_cast<double>(k) * std::log(lambda) - lambda -
         std::lgamma(static_cast<double>(k) + 1.0);
}

double SuffStats::max_g_tilde_rel_variation() const {
  double worst = 0.0;
  const int w = width();
  for (int l = 0; l < dims.n_band; ++l)
    for (int d = 0; d < n_delays(); ++d) {
      const double* row = g_tilde.data() + (static_cast<std::size_t>(l) * delays.size() + d) * w;
      double lo = row[0], hi = row[0];
      for (int k = 1; k < w; ++k) {
        lo = std::min(lo, row[k]);
        hi = std::max(hi, row[k]);
      }
      if (hi > 0.0) worst = std::max(worst, (hi - lo) / hi);
    }
  return worst;
}

SuffStats build_suff_stats(const PhotonCube& cube, const ImpulseResponseSet& irf,
                           const DepthSupport& sup) {
  const GridDims& dims = cube.dims();
  SuffStats stats;
  stats.dims = dims;
  stats.support = sup;

  stats.y_tilde.resize(static_cast<std::size_t>(dims.n_sites()));
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j)
      for (int l = 0; l < dims.n_band; ++l)
        stats.y_tilde[dims.cell_index(i, j, l)] = static_cast<double>(cube.y_tilde(i, j, l));

  // distinct delays
  std::set<int> dset;
  if (irf.has_pixel_delays())
    for (int d : irf.pixel_delays()) dset.insert(d);
  else
    dset.insert(0);
  stats.delays.assign(dset.begin(), dset.end());
  stats.pixel_delay_idx.resize(dims.n_pixels());
  for (int p = 0; p < dims.n_pixels(); ++p) {
    int d = irf.pixel_delay(p);
    stats.pixel_delay_idx[p] = static_cast<int>(
        std::lower_bound(stats.delays.begin(), stats.delays.end(), d) - stats.delays.begin());
  }

  const int w = sup.width();
  stats.g_tilde.resize(static_cast<std::size_t>(dims.n_band) * stats.delays.size() * w);
  for (int l = 0; l < dims.n_band; ++l) {
    // prefix sums over the kernel support for O(1) window sums
    const int lo = irf.support_lo(l), hi = irf.support_hi(l);
    std::vector<double> prefix(hi - lo + 2, 0.0);
    for (int tau = lo; tau <= hi; ++tau) prefix[tau - lo + 1] = prefix[tau - lo] + irf.g(l, tau);
    auto window_sum = [&](int a, int b) {  // sum of g over offsets [a, b]
      a = std::max(a, lo);
      b = std::min(b, hi);
      if (a > b) return 0.0;
      return prefix[b - lo + 1] - prefix[a - lo];
    };
    for (std::size_t di = 0; di < stats.delays.size(); ++di) {
      const int d = stats.delays[di];
      double* row = stats.g_tilde.data() + (static_cast<std::size_t>(l) * stats.delays.size() + di) * w;
      for (int t0 = sup.t_min; t0 <= sup.t_max; ++t0) {
        const int s = t0 + d;
        row[t0 - sup.t_min] = window_sum(-s, dims.n_bin - 1 - s);
      }
    }
  }

  stats.depth_data.assign(static_cast<std::size_t>(dims.n_pixels()) * w, 0.0);
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      const int d = stats.delays[stats.pixel_delay_idx[pix]];
      double* row = stats.depth_data.data() + static_cast<std::size_t>(pix) * w;
      for (int l = 0; l < dims.n_band; ++l) {
        for (const BinCount& bc : cube.cell(i, j, l)) {
          for (int t0 = sup.t_min; t0 <= sup.t_max; ++t0)
            row[t0 - sup.t_min] += bc.count * irf.log_g(l, bc.bin - t0 - d);
        }
      }
    }
  return stats;
}

double log_g_dot_y(const PhotonCube& cube, const ImpulseResponseSet& irf, int i, int j, int l,
                   int t0) {
  const int d = irf.pixel_delay(cube.dims().pixel_index(i, j));
  double s = 0.0;
  for (const BinCount& bc : cube.cell(i, j, l)) s += bc.count * irf.log_g(l, bc.bin - t0 - d);
  return s;
}

double pixel_log_lik_terms(std::span<const double> y_tilde, std::span<const double> g_tilde,
                           std::span<const double> lambda) {
  double s = 0.0;
  for (std::size_t l = 0; l < lambda.size(); ++l) {
    if (y_tilde[l] > 0.0) {
      if (lambda[l] <= 0.0) return -kInf;
      s += y_tilde[l] * std::log(lambda[l]);
    }
    s -= lambda[l] * g_tilde[l];
  }
  return s;
}

double pixel_log_lik(const SuffStats& stats, const PhotonCube& cube, int i, int j,
                     std::span<const double> lambda, int t0, bool with_log_factorial) {
  const GridDims& dims = cube.dims();
  const int pix = dims.pixel_index(i, j);
  double s = stats.depth_data_at(pix, t0);
  for (int l = 0; l < dims.n_band; ++l) {
    const double yt = static_cast<double>(cube.y_tilde(i, j, l));
    if (yt > 0.0) {
      if (lambda[l] <= 0.0) return -kInf;
      s += yt * std::log(lambda[l]);
    }
    s -= lambda[l] * stats.g_tilde_for_pixel(l, pix, t0);
  }
  if (with_log_factorial) s -= pixel_log_factorial(cube, i, j);
  return s;
}

double joint_log_lik(const SuffStats& stats, const PhotonCube& cube, const EndmemberLibrary& lib,
                     const SceneState& state, bool with_log_factorial) {
  const GridDims& dims = cube.dims();
  std::vector<double> lambda(dims.n_band);
  double total = 0.0;
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      state.spectrum(lib, pix, lambda);
      total += pixel_log_lik(stats, cube, i, j, lambda, state.t[pix], with_log_factorial);
    }
  return total;
}

void grad_log_lik_abundance(std::span<const double> y_tilde, std::span<const double> g_tilde,
                            const EndmemberLibrary& lib, std::span<const double> abundance,
                            std::span<const double> anomaly, std::span<double> grad_out) {
  const int L = lib.n_band, R = lib.n_endmember;
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  for (int l = 0; l < L; ++l) {
    double lambda = anomaly.empty() ? 0.0 : anomaly[l];
    const double* row = lib.m.data() + static_cast<std::size_t>(l) * R;
    for (int r = 0; r < R; ++r) lambda += row[r] * abundance[r];
    double w = -g_tilde[l];
    if (y_tilde[l] > 0.0) {
      if (lambda <= 0.0) throw ValidationError("grad_log_lik_abundance: zero rate with photons");
      w += y_tilde[l] / lambda;
    }
    for (int r = 0; r < R; ++r) grad_out[r] += row[r] * w;
  }
}

double grad_log_lik_anomaly_value(double y_tilde, double g_tilde, double lambda, bool z) {
  if (!z) return 0.0;
  double g = -g_tilde;
  if (y_tilde > 0.0) {
    if (lambda <= 0.0) throw ValidationError("grad_log_lik_anomaly_value: zero rate with photons");
    g += y_tilde / lambda;
  }
  return g;
}

double pixel_log_factorial(const PhotonCube& cube, int i, int j) {
  double s = 0.0;
  for (int l = 0; l < cube.dims().n_band; ++l)
    for (const BinCount& bc : cube.cell(i, j, l))
      s += std::lgamma(static_cast<double>(bc.count) + 1.0);
  return s;
}

}  // namespace msl

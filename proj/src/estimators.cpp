#include "msl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msl {

std::vector<double> mmse_abundances(const ChainOutput& chain) {
  if (chain.accum.n_samples < 1) throw ValidationError("mmse_abundances: empty chain");
  std::vector<double> out(chain.accum.a_sum.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = chain.accum.a_sum[k] / chain.accum.n_samples;
  return out;
}

std::vector<std::uint8_t> mmap_labels(const ChainOutput& chain) {
  if (chain.accum.n_samples < 1) throw ValidationError("mmap_labels: empty chain");
  std::vector<std::uint8_t> out(chain.accum.z_count.size());
  const double half = 0.5 * chain.accum.n_samples;
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = chain.accum.z_count[k] > half ? 1 : 0;  // ties favour the nominal model
  return out;
}

std::vector<double> mmse_anomaly_values(const ChainOutput& chain,
                                        std::span<const std::uint8_t> labels) {
  std::vector<double> out(chain.accum.x_sum_z1.size(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (labels[k] && chain.accum.x_count_z1[k] > 0)
      out[k] = chain.accum.x_sum_z1[k] / chain.accum.x_count_z1[k];
  }
  return out;
}

void mmap_depth_and_confidence(const ChainOutput& chain, std::vector<int>& depth_out,
                               std::vector<double>& confidence_out) {
  if (chain.accum.n_samples < 1) throw ValidationError("mmap_depth: empty chain");
  const int n_pix = chain.dims.n_pixels();
  const int w = chain.accum.width;
  depth_out.resize(n_pix);
  confidence_out.resize(n_pix);
  for (int p = 0; p < n_pix; ++p) {
    const std::uint32_t* row = chain.accum.depth_hist.data() + static_cast<std::size_t>(p) * w;
    int best = 0;
    for (int k = 1; k < w; ++k)
      if (row[k] > row[best]) best = k;  // strict: smallest bin wins ties
    depth_out[p] = chain.support.t_min + best;
    confidence_out[p] = static_cast<double>(row[best]) / chain.accum.n_samples;
  }
}

std::vector<double> anomaly_log_intensity(std::span<const double> anomaly_values, int n_band) {
  const int n_pix = static_cast<int>(anomaly_values.size()) / n_band;
  std::vector<double> out(n_pix);
  for (int p = 0; p < n_pix; ++p) {
    double s = 0.0;
    for (int l = 0; l < n_band; ++l) {
      const double r = anomaly_values[static_cast<std::size_t>(p) * n_band + l];
      s += r * r;
    }
    out[p] = s > 0.0 ? std::max(kAnomalyLogFloor, std::log(s / n_band)) : kAnomalyLogFloor;
  }
  return out;
}

EstimateBundle make_estimates(const ChainOutput& chain, int ref_bin) {
  EstimateBundle b;
  b.n_row = chain.dims.n_row;
  b.n_col = chain.dims.n_col;
  b.n_band = chain.dims.n_band;
  b.n_endmember = chain.n_endmember;
  b.ref_bin = ref_bin;
  b.mm_per_bin = chain.dims.depth_per_bin_mm();
  mmap_depth_and_confidence(chain, b.depth_bins, b.confidence);
  b.depth_mm.resize(b.depth_bins.size());
  for (std::size_t p = 0; p < b.depth_bins.size(); ++p)
    b.depth_mm[p] = (b.depth_bins[p] - ref_bin) * b.mm_per_bin;
  b.abundance = mmse_abundances(chain);
  b.labels = mmap_labels(chain);
  b.anomaly_values = mmse_anomaly_values(chain, b.labels);
  b.anomaly_log_intensity = anomaly_log_intensity(b.anomaly_values, b.n_band);
  return b;
}

std::vector<int> ml_depth_baseline(const PhotonCube& cube, const ImpulseResponseSet& irf,
                                   const SuffStats& stats, MlDepthMode mode, int band) {
  const GridDims& dims = cube.dims();
  const DepthSupport& sup = stats.support;
  const int w = sup.width();
  if (mode == MlDepthMode::kSingleBand && (band < 0 || band >= dims.n_band))
    throw ValidationError("ml_depth_baseline: band index out of range");

  std::vector<int> depth(dims.n_pixels(), -1);
  std::vector<double> score(w);
  bool any = false;
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      const int l_lo = mode == MlDepthMode::kSingleBand ? band : 0;
      const int l_hi = mode == MlDepthMode::kSingleBand ? band + 1 : dims.n_band;
      double ysum = 0.0;
      for (int l = l_lo; l < l_hi; ++l) ysum += stats.y_tilde_at(pix, l);
      if (ysum == 0.0) continue;  // filled later
      std::fill(score.begin(), score.end(), 0.0);
      const int di = stats.pixel_delay_idx[pix];
      const int delay = stats.delays[di];
      for (int l = l_lo; l < l_hi; ++l) {
        const double yv = stats.y_tilde_at(pix, l);
        if (yv == 0.0) continue;  // amplitude profiles to zero, no contribution
        const double* gt_row =
            stats.g_tilde.data() + (static_cast<std::size_t>(l) * stats.delays.size() + di) * w;
        for (int k = 0; k < w; ++k)
          score[k] += yv * (std::log(yv) - std::log(gt_row[k])) - yv;
      }
      if (mode == MlDepthMode::kJoint) {
        const double* data_row = stats.depth_data.data() + static_cast<std::size_t>(pix) * w;
        for (int k = 0; k < w; ++k) score[k] += data_row[k];
      } else {
        for (const BinCount& bc : cube.cell(i, j, band))
          for (int k = 0; k < w; ++k)
            score[k] += bc.count * irf.log_g(band, bc.bin - (sup.t_min + k) - delay);
      }
      int best = 0;
      for (int k = 1; k < w; ++k)
        if (score[k] > score[best]) best = k;
      depth[pix] = sup.t_min + best;
      any = true;
    }
  if (!any) throw ValidationError("ml_depth_baseline: every pixel is empty");
  return nearest_neighbour_fill(depth, dims.n_row, dims.n_col);
}

// Exact Euclidean nearest-neighbour fill of entries marked -1, with a
// deterministic tie-break on distance then row-major order.
std::vector<int> nearest_neighbour_fill(std::span<const int> depth, int n_row, int n_col) {
  std::vector<int> filled(depth.begin(), depth.end());
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j) {
      const int pix = i * n_col + j;
      if (depth[pix] >= 0) continue;
      long best_d2 = std::numeric_limits<long>::max();
      int best_pix = -1;
      for (int ii = 0; ii < n_row; ++ii)
        for (int jj = 0; jj < n_col; ++jj) {
          const int q = ii * n_col + jj;
          if (depth[q] < 0) continue;
          const long d2 = static_cast<long>(ii - i) * (ii - i) +
                          static_cast<long>(jj - j) * (jj - j);
          if (d2 < best_d2) {
            best_d2 = d2;
            best_pix = q;
          }
        }
      if (best_pix < 0) throw ValidationError("nearest_neighbour_fill: no filled pixels");
      filled[pix] = depth[best_pix];
    }
  return filled;
}

std::vector<int> plugin_depth_reopt(const SuffStats& stats, const EndmemberLibrary& lib,
                                    const EstimateBundle& est) {
  const int n_pix = est.n_row * est.n_col;
  const int L = est.n_band;
  const int w = stats.support.width();
  std::vector<int> out(n_pix);
  std::vector<double> lambda(L), score(w);
  for (int pix = 0; pix < n_pix; ++pix) {
    double ysum = 0.0;
    for (int l = 0; l < L; ++l) ysum += stats.y_tilde_at(pix, l);
    if (ysum == 0.0) {
      out[pix] = -1;  // flat conditional, filled below
      continue;
    }
    lib.mix({est.abundance.data() + static_cast<std::size_t>(pix) * est.n_endmember,
             static_cast<std::size_t>(est.n_endmember)},
            lambda);
    for (int l = 0; l < L; ++l)
      if (est.labels[static_cast<std::size_t>(pix) * L + l])
        lambda[l] += est.anomaly_values[static_cast<std::size_t>(pix) * L + l];
    const double* data_row = stats.depth_data.data() + static_cast<std::size_t>(pix) * w;
    const int di = stats.pixel_delay_idx[pix];
    std::copy(data_row, data_row + w, score.begin());
    for (int l = 0; l < L; ++l) {
      if (lambda[l] == 0.0) continue;
      const double* gt_row =
          stats.g_tilde.data() + (static_cast<std::size_t>(l) * stats.delays.size() + di) * w;
      for (int k = 0; k < w; ++k) score[k] -= lambda[l] * gt_row[k];
    }
    int best = 0;
    for (int k = 1; k < w; ++k)
      if (score[k] > score[best]) best = k;
    out[pix] = stats.support.t_min + best;
  }
  return nearest_neighbour_fill(out, est.n_row, est.n_col);
}

std::vector<double> confidence_at(const ChainOutput& chain, std::span<const int> depth) {
  if (chain.accum.n_samples < 1) throw ValidationError("confidence_at: empty chain");
  const int n_pix = chain.dims.n_pixels();
  const int w = chain.accum.width;
  std::vector<double> out(n_pix);
  for (int p = 0; p < n_pix; ++p)
    out[p] = static_cast<double>(
                 chain.accum.depth_hist[static_cast<std::size_t>(p) * w +
                                        (depth[p] - chain.support.t_min)]) /
             chain.accum.n_samples;
  return out;
}

double rmse_mm(std::span<const int> est, std::span<const int> ref, double mm_per_bin) {
  if (est.size() != ref.size()) throw ValidationError("rmse: shape mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double d = static_cast<double>(est[k]) - static_cast<double>(ref[k]);
    s += d * d;
  }
  return mm_per_bin * std::sqrt(s / static_cast<double>(est.size()));
}

double label_f1(std::span<const std::uint8_t> est, std::span<const std::uint8_t> ref) {
  if (est.size() != ref.size()) throw ValidationError("label_f1: shape mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (est[k] && ref[k]) ++tp;
    if (est[k] && !ref[k]) ++fp;
    if (!est[k] && ref[k]) ++fn;
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom > 0.0 ? 2.0 * tp / denom : 1.0;
}

}  // namespace msl

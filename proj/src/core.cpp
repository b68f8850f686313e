#include "msl/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace msl {

std::vector<std::string> GridDims::violations() const {
  std::vector<std::string> v;
  if (n_row < 1) v.push_back("n_row must be >= 1");
  if (n_col < 1) v.push_back("n_col must be >= 1");
  if (n_band < 1) v.push_back("n_band must be >= 1");
  if (n_bin < 1) v.push_back("n_bin must be >= 1");
  if (!(bin_ps > 0.0)) v.push_back("bin_ps must be > 0");
  return v;
}

void GridDims::validate() const {
  auto v = violations();
  if (!v.empty()) {
    std::string msg = "invalid grid dims:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ValidationError(msg);
  }
}

double depth_bins_to_mm(int t, const GridDims& dims, int ref_bin) {
  if (t < 0 || t >= dims.n_bin) {
    std::ostringstream os;
    os << "depth bin " << t << " outside [0, " << dims.n_bin - 1 << "]";
    throw ValidationError(os.str());
  }
  return (t - ref_bin) * dims.depth_per_bin_mm();
}

PhotonCube::PhotonCube(const GridDims& dims) : dims_(dims) {
  dims_.validate();
  cells_.resize(static_cast<std::size_t>(dims_.n_sites()));
  y_tilde_.assign(static_cast<std::size_t>(dims_.n_sites()), 0);
}

void PhotonCube::add_count(int i, int j, int l, int t, std::uint32_t count) {
  if (i < 0 || i >= dims_.n_row || j < 0 || j >= dims_.n_col || l < 0 || l >= dims_.n_band ||
      t < 0 || t >= dims_.n_bin) {
    throw ValidationError("photon count index outside grid");
  }
  if (count == 0) return;
  cells_[dims_.cell_index(i, j, l)].push_back({t, count});
  finalized_ = false;
}

void PhotonCube::finalize() {
  for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
    auto& c = cells_[ci];
    std::sort(c.begin(), c.end(),
              [](const BinCount& a, const BinCount& b) { return a.bin < b.bin; });
    // merge duplicate bins
    std::vector<BinCount> merged;
    merged.reserve(c.size());
    for (const BinCount& bc : c) {
      if (!merged.empty() && merged.back().bin == bc.bin)
        merged.back().count += bc.count;
      else
        merged.push_back(bc);
    }
    c = std::move(merged);
    std::uint64_t tot = 0;
    for (const BinCount& bc : c) tot += bc.count;
    y_tilde_[ci] = tot;
  }
  finalized_ = true;
}

std::uint32_t PhotonCube::count_at(int i, int j, int l, int t) const {
  const auto& c = cells_[dims_.cell_index(i, j, l)];
  auto it = std::lower_bound(c.begin(), c.end(), t,
                             [](const BinCount& a, int bin) { return a.bin < bin; });
  if (it != c.end() && it->bin == t) return it->count;
  return 0;
}

std::uint64_t PhotonCube::total_count() const {
  return std::accumulate(y_tilde_.begin(), y_tilde_.end(), std::uint64_t{0});
}

std::vector<std::uint32_t> PhotonCube::to_dense() const {
  std::vector<std::uint32_t> dense(static_cast<std::size_t>(dims_.n_sites()) * dims_.n_bin, 0);
  for (int ci = 0; ci < dims_.n_sites(); ++ci) {
    for (const BinCount& bc : cells_[ci]) {
      dense[static_cast<std::size_t>(ci) * dims_.n_bin + bc.bin] = bc.count;
    }
  }
  return dense;
}

PhotonCube PhotonCube::from_dense(const GridDims& dims, std::span<const std::uint32_t> values) {
  if (values.size() != static_cast<std::size_t>(dims.n_sites()) * dims.n_bin)
    throw ValidationError("from_dense: value count does not match dims");
  PhotonCube cube(dims);
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j)
      for (int l = 0; l < dims.n_band; ++l) {
        std::size_t base = static_cast<std::size_t>(dims.cell_index(i, j, l)) * dims.n_bin;
        for (int t = 0; t < dims.n_bin; ++t) {
          std::uint32_t c = values[base + t];
          if (c) cube.add_count(i, j, l, t, c);
        }
      }
  cube.finalize();
  return cube;
}

void EndmemberLibrary::mix(std::span<const double> abundance, std::span<double> out) const {
  for (int l = 0; l < n_band; ++l) {
    double s = 0.0;
    const double* row = m.data() + static_cast<std::size_t>(l) * n_endmember;
    for (int r = 0; r < n_endmember; ++r) s += row[r] * abundance[r];
    out[l] = s;
  }
}

std::vector<std::string> EndmemberLibrary::violations() const {
  std::vector<std::string> v;
  if (n_band < 1) v.push_back("library: n_band must be >= 1");
  if (n_endmember < 1) v.push_back("library: n_endmember must be >= 1");
  if (m.size() != static_cast<std::size_t>(n_band) * n_endmember)
    v.push_back("library: matrix size does not match n_band x n_endmember");
  if (!names.empty() && names.size() != static_cast<std::size_t>(n_endmember))
    v.push_back("library: name count does not match n_endmember");
  if (!wavelengths_nm.empty() && wavelengths_nm.size() != static_cast<std::size_t>(n_band))
    v.push_back("library: wavelength count does not match n_band");
  for (double e : m)
    if (e < 0.0 || !std::isfinite(e)) {
      v.push_back("library: negative entry in endmember matrix");
      break;
    }
  if (m.size() == static_cast<std::size_t>(n_band) * n_endmember) {
    for (int r = 0; r < n_endmember; ++r) {
      bool any = false;
      for (int l = 0; l < n_band; ++l)
        if (at(l, r) > 0.0) {
          any = true;
          break;
        }
      if (!any) v.push_back("library: endmember column " + std::to_string(r) + " is all zero");
    }
  }
  return v;
}

ImpulseResponseSet ImpulseResponseSet::from_dense(int n_band, int length,
                                                  std::span<const double> values,
                                                  int first_offset) {
  if (n_band < 1 || length < 1) throw ValidationError("irf: empty shape");
  if (values.size() != static_cast<std::size_t>(n_band) * length)
    throw ValidationError("irf: value count does not match n_band x length");
  ImpulseResponseSet set;
  set.kernels_.resize(n_band);
  for (int l = 0; l < n_band; ++l) {
    Kernel& k = set.kernels_[l];
    k.first_offset = first_offset;
    k.values.assign(values.begin() + static_cast<std::ptrdiff_t>(l) * length,
                    values.begin() + static_cast<std::ptrdiff_t>(l + 1) * length);
    k.log_values.resize(k.values.size());
    for (std::size_t idx = 0; idx < k.values.size(); ++idx)
      k.log_values[idx] = k.values[idx] > 0.0 ? std::log(k.values[idx]) : -kInf;
  }
  return set;
}

ImpulseResponseSet ImpulseResponseSet::from_gaussian(
    const std::vector<GaussianIrfParams>& params) {
  if (params.empty()) throw ValidationError("irf: no bands");
  ImpulseResponseSet set;
  set.kernels_.resize(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    const GaussianIrfParams& p = params[l];
    if (!(p.eta > 0.0) || !(p.sigma_bins > 0.0))
      throw ValidationError("irf: gaussian parameters must have eta > 0 and sigma > 0");
    const double centre = p.mu_bins + p.delay_bins;
    const int lo = static_cast<int>(std::floor(centre - 6.0 * p.sigma_bins));
    const int hi = static_cast<int>(std::ceil(centre + 6.0 * p.sigma_bins));
    Kernel& k = set.kernels_[l];
    k.first_offset = lo;
    k.values.resize(hi - lo + 1);
    k.log_values.resize(k.values.size());
    for (int tau = lo; tau <= hi; ++tau) {
      double d = (tau - centre) / p.sigma_bins;
      double val = std::fabs(tau - centre) > 6.0 * p.sigma_bins ? 0.0
                                                                : p.eta * std::exp(-0.5 * d * d);
      k.values[tau - lo] = val;
      k.log_values[tau - lo] = val > 0.0 ? std::log(val) : -kInf;
    }
  }
  set.params_ = params;
  return set;
}

ImpulseResponseSet ImpulseResponseSet::scaled(double factor) const {
  if (!(factor > 0.0)) throw ValidationError("irf: scale factor must be > 0");
  ImpulseResponseSet out = *this;
  const double log_factor = std::log(factor);
  for (Kernel& k : out.kernels_) {
    for (double& v : k.values) v *= factor;
    for (double& v : k.log_values)
      if (v != -kInf) v += log_factor;
  }
  if (out.params_)
    for (GaussianIrfParams& p : *out.params_) p.eta *= factor;
  return out;
}

std::vector<std::string> ImpulseResponseSet::violations() const {
  std::vector<std::string> v;
  for (int l = 0; l < n_band(); ++l) {
    bool any = false;
    for (double g : kernels_[l].values) {
      if (g < 0.0 || !std::isfinite(g)) {
        v.push_back("irf: negative value in band " + std::to_string(l));
        break;
      }
      if (g > 0.0) any = true;
    }
    if (!any) v.push_back("irf: band " + std::to_string(l) + " has no positive bin");
  }
  return v;
}

std::vector<std::string> DepthSupport::violations(int n_bin) const {
  std::vector<std::string> v;
  if (t_min < 0 || t_max >= n_bin || t_min > t_max)
    v.push_back("empty depth support: need 0 <= t_min <= t_max < n_bin, got [" +
                std::to_string(t_min) + ", " + std::to_string(t_max) + "] with n_bin " +
                std::to_string(n_bin));
  return v;
}

DepthSupport default_depth_support(int n_bin) {
  int margin = static_cast<int>(std::lround(n_bin * 0.1));
  margin = std::min(margin, (n_bin - 1) / 2);
  return {margin, n_bin - 1 - margin};
}

DepthSupport depth_support_for_irf(int n_bin, const ImpulseResponseSet& irf) {
  int lo = 0, hi = 0;
  for (int l = 0; l < irf.n_band(); ++l) {
    lo = std::min(lo, irf.support_lo(l));
    hi = std::max(hi, irf.support_hi(l));
  }
  int max_delay = 0;
  for (int d : irf.pixel_delays()) max_delay = std::max(max_delay, std::abs(d));
  int t_min = std::max(0, hi + max_delay);
  int t_max = std::min(n_bin - 1, n_bin - 1 + lo - max_delay);
  if (t_min > t_max) throw ValidationError("impulse responses wider than the histogram");
  return {t_min, t_max};
}

SceneState SceneState::zeros(int n_row, int n_col, int n_band, int n_endmember) {
  SceneState s;
  s.n_row = n_row;
  s.n_col = n_col;
  s.n_band = n_band;
  s.n_endmember = n_endmember;
  s.t.assign(static_cast<std::size_t>(n_row) * n_col, 0);
  s.a.assign(static_cast<std::size_t>(n_row) * n_col * n_endmember, 0.0);
  s.z.assign(static_cast<std::size_t>(n_row) * n_col * n_band, 0);
  s.x.assign(static_cast<std::size_t>(n_row) * n_col * n_band, 1.0);
  s.gamma.assign(static_cast<std::size_t>(n_endmember) * (n_row + 1) * (n_col + 1), 1.0);
  return s;
}

void SceneState::spectrum(const EndmemberLibrary& lib, int pix, std::span<double> out) const {
  lib.mix({abundance(pix), static_cast<std::size_t>(n_endmember)}, out);
  const std::size_t base = static_cast<std::size_t>(pix) * n_band;
  for (int l = 0; l < n_band; ++l)
    if (z[base + l]) out[l] += x[base + l];
}

AdaptedHyper AdaptedHyper::defaults(int n_endmember) {
  AdaptedHyper h;
  h.beta_n = 0.4;  // mild starting couplings; adapted during burn-in
  h.beta_l = 0.4;
  h.c.assign(n_endmember, 2.0);
  return h;
}

void HyperBox::project(AdaptedHyper& h) const {
  h.eps = std::clamp(h.eps, 0.0, eps_max);
  h.beta_n = std::clamp(h.beta_n, beta_min, beta_max);
  h.beta_l = std::clamp(h.beta_l, beta_min, beta_max);
  h.beta0 = std::clamp(h.beta0, 0.0, 1.0);
  for (double& c : h.c) c = std::clamp(c, c_min, c_max);
}

std::vector<std::string> validate_inputs(const PhotonCube& cube, const EndmemberLibrary& lib,
                                         const ImpulseResponseSet& irf, const DepthSupport& sup) {
  std::vector<std::string> v = cube.dims().violations();
  for (auto& s : lib.violations()) v.push_back(s);
  for (auto& s : irf.violations()) v.push_back(s);
  for (auto& s : sup.violations(cube.dims().n_bin)) v.push_back(s);
  if (lib.n_band != cube.dims().n_band)
    v.push_back("band-count mismatch: library has " + std::to_string(lib.n_band) +
                " bands, cube has " + std::to_string(cube.dims().n_band));
  if (irf.n_band() != cube.dims().n_band)
    v.push_back("band-count mismatch: irf has " + std::to_string(irf.n_band()) +
                " bands, cube has " + std::to_string(cube.dims().n_band));
  if (irf.has_pixel_delays() &&
      irf.pixel_delays().size() != static_cast<std::size_t>(cube.dims().n_pixels()))
    v.push_back("pixel delay map size does not match the grid");
  return v;
}

ProblemInstance make_instance(const PhotonCube& cube, const EndmemberLibrary& lib,
                              const ImpulseResponseSet& irf, const DepthSupport& sup) {
  auto v = validate_inputs(cube, lib, irf, sup);
  if (!v.empty()) {
    std::string msg = "invalid inputs:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
  return {&cube, &lib, &irf, sup};
}

}  // namespace msl

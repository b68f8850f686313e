#include "msl/scene_sim.hpp"

#include <algorithm>
#include <cmath>

#include "msl/rng.hpp"

namespace msl {

namespace {
constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
}

EndmemberLibrary make_endmember_library(int n_band, int n_endmember, double collinear_corr,
                                        std::uint64_t seed) {
  EndmemberLibrary lib;
  lib.n_band = n_band;
  lib.n_endmember = n_endmember;
  lib.m.assign(static_cast<std::size_t>(n_band) * n_endmember, 0.0);
  lib.wavelengths_nm.resize(n_band);
  for (int l = 0; l < n_band; ++l)
    lib.wavelengths_nm[l] = 500.0 + (n_band > 1 ? 320.0 * l / (n_band - 1) : 0.0);
  RngStream stream({seed, 0, RngStage::kSceneGen, 1});
  // smooth bumps at staggered centres plus a small positive floor; every
  // centre sits below the top bands, which keeps a dark spectral window
  // there that no nonnegative mixture can brighten on its own
  for (int r = 0; r < n_endmember; ++r) {
    const double centre = n_endmember > 1
                              ? 0.15 + 0.47 * r / (n_endmember - 1) + 0.04 * stream.next_double()
                              : 0.5;
    const double width = 0.18 + 0.08 * stream.next_double();
    const double floor = 0.03 + 0.03 * stream.next_double();
    for (int l = 0; l < n_band; ++l) {
      const double u = n_band > 1 ? static_cast<double>(l) / (n_band - 1) : 0.5;
      const double d = (u - centre) / width;
      lib.m[static_cast<std::size_t>(l) * n_endmember + r] = floor + std::exp(-0.5 * d * d);
    }
    lib.names.push_back("material_" + std::to_string(r + 1));
  }
  if (n_endmember >= 2 && collinear_corr > 0.0) {
    // make the last column a blend of its neighbour to reach the requested
    // cosine similarity
    const int ra = n_endmember - 2, rb = n_endmember - 1;
    const double t = std::clamp(collinear_corr, 0.0, 0.999);
    for (int l = 0; l < n_band; ++l) {
      double& vb = lib.m[static_cast<std::size_t>(l) * n_endmember + rb];
      const double va = lib.m[static_cast<std::size_t>(l) * n_endmember + ra];
      vb = t * va + (1.0 - t) * vb;
    }
  }
  return lib;
}

ImpulseResponseSet make_irf_set(int n_band, double fwhm_lo_ps, double fwhm_hi_ps, double bin_ps,
                                double amp_lo, double amp_hi, int max_delay_bins,
                                std::uint64_t seed) {
  if (!(fwhm_lo_ps > 0.0) || fwhm_hi_ps < fwhm_lo_ps)
    throw ValidationError("make_irf_set: bad fwhm range");
  RngStream stream({seed, 0, RngStage::kSceneGen, 2});
  std::vector<GaussianIrfParams> params(n_band);
  for (int l = 0; l < n_band; ++l) {
    const double u = n_band > 1 ? static_cast<double>(l) / (n_band - 1) : 0.5;
    const double fwhm = fwhm_lo_ps + (fwhm_hi_ps - fwhm_lo_ps) * u;
    params[l].sigma_bins = fwhm / (bin_ps * kFwhmToSigma);
    params[l].eta = amp_lo + (amp_hi - amp_lo) * stream.next_double();
    params[l].mu_bins = 0.0;
    params[l].delay_bins =
        max_delay_bins > 0
            ? static_cast<int>(stream.next_double() * (2 * max_delay_bins + 1)) - max_delay_bins
            : 0;
  }
  return ImpulseResponseSet::from_gaussian(params);
}

SyntheticScene make_scene(const SceneSpec& spec) {
  GridDims dims{spec.n_row, spec.n_col, spec.n_band, spec.n_bin, spec.bin_ps};
  dims.validate();
  SyntheticScene scene;
  scene.dims = dims;
  scene.support = default_depth_support(spec.n_bin);
  scene.lib = make_endmember_library(spec.n_band, spec.n_endmember, spec.collinear_corr,
                                     spec.seed);
  scene.irf = make_irf_set(spec.n_band, spec.fwhm_lo_ps, spec.fwhm_hi_ps, spec.bin_ps,
                           spec.amp_lo, spec.amp_hi, spec.max_delay_bins, spec.seed);

  const int n_pix = dims.n_pixels();
  const int R = spec.n_endmember;
  scene.region_map.assign(n_pix, 0);
  scene.true_depth.assign(n_pix, scene.support.t_min + spec.board_depth_from_tmin);
  scene.true_abundance.assign(static_cast<std::size_t>(n_pix) * R, 0.0);
  scene.true_z.assign(dims.n_sites(), 0);
  scene.true_x.assign(dims.n_sites(), 0.0);
  scene.strip_map.assign(dims.n_sites(), -1);

  RngStream stream({spec.seed, 0, RngStage::kSceneGen, 3});

  // shapes on a jittered grid so every material keeps a solid footprint
  struct Shape {
    bool disc;
    int ci, cj, half;
    int depth;
    int material;
  };
  std::vector<Shape> shapes;
  const int cells = std::max(1, static_cast<int>(std::ceil(std::sqrt(
                                    static_cast<double>(std::max(1, spec.n_shapes))))));
  const int board = scene.support.t_min + spec.board_depth_from_tmin;
  const int depth_lo = std::min(board + spec.object_relief_lo, scene.support.t_max - 1);
  const int depth_hi = std::min(board + spec.object_relief_hi, scene.support.t_max - 1);
  for (int k = 0; k < spec.n_shapes; ++k) {
    Shape s;
    s.disc = (k % 2) == 1;
    const int gi = k / cells, gj = k % cells;
    const double jit_i = 0.25 + 0.5 * stream.next_double();
    const double jit_j = 0.25 + 0.5 * stream.next_double();
    s.ci = static_cast<int>((gi + jit_i) / cells * spec.n_row);
    s.cj = static_cast<int>((gj + jit_j) / cells * spec.n_col);
    s.half = std::max(3, static_cast<int>((0.10 + 0.06 * stream.next_double()) *
                                          std::min(spec.n_row, spec.n_col)));
    s.depth = depth_lo +
              static_cast<int>(stream.next_double() * std::max(1, depth_hi - depth_lo + 1));
    s.depth = std::min(s.depth, depth_hi);
    s.material = R > 1 ? 1 + (k % (R - 1)) : 0;
    shapes.push_back(s);
  }
  for (int i = 0; i < spec.n_row; ++i)
    for (int j = 0; j < spec.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        const Shape& s = shapes[k];
        const bool inside = s.disc
                                ? (static_cast<long>(i - s.ci) * (i - s.ci) +
                                   static_cast<long>(j - s.cj) * (j - s.cj)) <=
                                      static_cast<long>(s.half) * s.half
                                : std::abs(i - s.ci) <= s.half && std::abs(j - s.cj) <= s.half;
        if (inside) {
          scene.region_map[pix] = static_cast<int>(k) + 1;
          scene.true_depth[pix] = s.depth;
        }
      }
    }

  // abundances: dominant endmember per region, optional mixing bands
  for (int i = 0; i < spec.n_row; ++i)
    for (int j = 0; j < spec.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      const int reg = scene.region_map[pix];
      const int mat = reg == 0 ? 0 : shapes[reg - 1].material;
      const double level = reg == 0 ? spec.board_level : spec.object_level;
      scene.true_abundance[static_cast<std::size_t>(pix) * R + mat] = level;
    }
  if (spec.mixing_band_px > 0) {
    // box blur of the abundance field around region borders
    std::vector<double> blurred = scene.true_abundance;
    const int h = spec.mixing_band_px;
    for (int i = 0; i < spec.n_row; ++i)
      for (int j = 0; j < spec.n_col; ++j) {
        bool border = false;
        for (int di = -1; di <= 1 && !border; ++di)
          for (int dj = -1; dj <= 1 && !border; ++dj) {
            const int ii = std::clamp(i + di, 0, spec.n_row - 1);
            const int jj = std::clamp(j + dj, 0, spec.n_col - 1);
            border = scene.region_map[dims.pixel_index(ii, jj)] !=
                     scene.region_map[dims.pixel_index(i, j)];
          }
        if (!border) continue;
        for (int r = 0; r < R; ++r) {
          double s = 0.0;
          int n = 0;
          for (int di = -h; di <= h; ++di)
            for (int dj = -h; dj <= h; ++dj) {
              const int ii = std::clamp(i + di, 0, spec.n_row - 1);
              const int jj = std::clamp(j + dj, 0, spec.n_col - 1);
              s += scene.true_abundance[static_cast<std::size_t>(dims.pixel_index(ii, jj)) * R +
                                        r];
              ++n;
            }
          blurred[static_cast<std::size_t>(dims.pixel_index(i, j)) * R + r] = s / n;
        }
      }
    scene.true_abundance = std::move(blurred);
  }

  // contiguous anomaly strips on the backboard (strip 0 is the strongest)
  const int band_lo =
      std::clamp(static_cast<int>(spec.anomaly_band_lo_frac * spec.n_band), 0, spec.n_band - 1);
  for (int s = 0; s < spec.n_anomaly_strips; ++s) {
    const int row = static_cast<int>((0.2 + 0.6 * (spec.n_anomaly_strips > 1
                                                       ? static_cast<double>(s) /
                                                             (spec.n_anomaly_strips - 1)
                                                       : 0.5)) *
                                     spec.n_row);
    const int j0 = spec.n_col / 8, j1 = spec.n_col - spec.n_col / 8;
    const double amp = (s == 0 ? 1.4 : 1.0) * spec.anomaly_amplitude;
    for (int j = j0; j < j1; ++j) {
      const int pix = dims.pixel_index(row, j);
      for (int l = band_lo; l < spec.n_band; ++l) {
        const int cell = pix * spec.n_band + l;
        scene.true_z[cell] = 1;
        scene.true_x[cell] = stream.next_gamma(6.0, amp / 6.0);
        scene.strip_map[cell] = s;
      }
    }
  }
  return scene;
}

namespace {

// expected mean photons per pixel per band at unit gain
double expected_mean_per_cell(const SyntheticScene& scene) {
  const GridDims& dims = scene.dims;
  const int L = dims.n_band, R = scene.lib.n_endmember;
  double total = 0.0;
  std::vector<double> gsum(L, 0.0);
  // per-band kernel mass restricted to the histogram window at each depth;
  // computed directly, the scenes are small
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      const int t0 = scene.true_depth[pix];
      for (int l = 0; l < L; ++l) {
        double lam = 0.0;
        for (int r = 0; r < R; ++r)
          lam += scene.lib.at(l, r) *
                 scene.true_abundance[static_cast<std::size_t>(pix) * R + r];
        const int cell = pix * L + l;
        if (scene.true_z[cell]) lam += scene.true_x[cell];
        double gs = 0.0;
        for (int tau = scene.irf.support_lo(l); tau <= scene.irf.support_hi(l); ++tau) {
          const int bin = t0 + tau;
          if (bin >= 0 && bin < dims.n_bin) gs += scene.irf.g(l, tau);
        }
        total += lam * gs;
      }
    }
  return total / static_cast<double>(dims.n_sites());
}

}  // namespace

double calibrate_gain(const SyntheticScene& scene, double budget) {
  if (!(budget > 0.0)) throw ValidationError("calibrate_gain: budget must be > 0");
  const double unit = expected_mean_per_cell(scene);
  if (!(unit > 0.0)) throw ValidationError("calibrate_gain: scene has zero expected intensity");
  double lo = 0.0, hi = 1.0;
  while (hi * unit < budget) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double mean = mid * unit;
    if (std::fabs(mean - budget) <= 0.02 * budget) return mid;
    if (mean < budget)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

PhotonCube simulate_cube(const SyntheticScene& scene, double budget, std::uint64_t seed,
                         double* gain_out) {
  const double gain = calibrate_gain(scene, budget);
  if (gain_out) *gain_out = gain;
  return simulate_cube_at_gain(scene, gain, seed);
}

PhotonCube simulate_cube_at_gain(const SyntheticScene& scene, double gain, std::uint64_t seed) {
  const GridDims& dims = scene.dims;
  const int L = dims.n_band, R = scene.lib.n_endmember;
  PhotonCube cube(dims);
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      const int t0 = scene.true_depth[pix];
      for (int l = 0; l < L; ++l) {
        double lam = 0.0;
        for (int r = 0; r < R; ++r)
          lam += scene.lib.at(l, r) *
                 scene.true_abundance[static_cast<std::size_t>(pix) * R + r];
        const int cell = pix * L + l;
        if (scene.true_z[cell]) lam += scene.true_x[cell];
        if (lam <= 0.0) continue;
        RngStream stream({seed, 0, RngStage::kSimulate, static_cast<std::uint64_t>(cell)});
        for (int tau = scene.irf.support_lo(l); tau <= scene.irf.support_hi(l); ++tau) {
          const int bin = t0 + tau;
          if (bin < 0 || bin >= dims.n_bin) continue;
          const double mean = gain * lam * scene.irf.g(l, tau);
          if (mean <= 0.0) continue;
          const std::uint64_t y = stream.next_poisson(mean);
          if (y > 0) cube.add_count(i, j, l, bin, static_cast<std::uint32_t>(y));
        }
      }
    }
  cube.finalize();
  return cube;
}

PhotonCube binomial_thin(const PhotonCube& cube, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob >= 0.0 && keep_prob <= 1.0))
    throw ValidationError("binomial_thin: keep_prob outside [0,1]");
  const GridDims& dims = cube.dims();
  PhotonCube out(dims);
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j)
      for (int l = 0; l < dims.n_band; ++l) {
        const int cell = dims.cell_index(i, j, l);
        RngStream stream({seed, 0, RngStage::kThin, static_cast<std::uint64_t>(cell)});
        for (const BinCount& bc : cube.cell(i, j, l)) {
          std::uint32_t kept = 0;
          for (std::uint32_t k = 0; k < bc.count; ++k)
            if (stream.next_double() < keep_prob) ++kept;
          if (kept > 0) out.add_count(i, j, l, bc.bin, kept);
        }
      }
  out.finalize();
  return out;
}

double empty_cell_fraction(const PhotonCube& cube) {
  const GridDims& dims = cube.dims();
  std::int64_t empty = 0;
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j)
      for (int l = 0; l < dims.n_band; ++l)
        if (cube.y_tilde(i, j, l) == 0) ++empty;
  return static_cast<double>(empty) / dims.n_sites();
}

}  // namespace msl

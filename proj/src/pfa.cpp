#include "msl/pfa.hpp"

#include <cmath>

namespace msl {

ReductionCheck check_reduction_validity(const SuffStats& stats, double tol) {
  ReductionCheck c;
  c.max_rel_variation = stats.max_g_tilde_rel_variation();
  c.valid = c.max_rel_variation <= tol;
  return c;
}

ReducedObservation integrate_cube(const PhotonCube& cube, const SuffStats& stats,
                                  const EndmemberLibrary* lib) {
  const GridDims& dims = cube.dims();
  ReducedObservation red;
  red.n_band = dims.n_band;
  red.n_pix = dims.n_pixels();
  red.check = check_reduction_validity(stats);
  red.y_tilde.resize(static_cast<std::size_t>(dims.n_band) * red.n_pix);
  for (int p = 0; p < red.n_pix; ++p)
    for (int l = 0; l < dims.n_band; ++l)
      red.y_tilde[static_cast<std::size_t>(l) * red.n_pix + p] = stats.y_tilde_at(p, l);
  red.g_tilde.resize(dims.n_band);
  for (int l = 0; l < dims.n_band; ++l)
    red.g_tilde[l] = stats.g_tilde_at(l, 0, stats.support.t_min);
  if (lib) {
    red.m_tilde.resize(static_cast<std::size_t>(dims.n_band) * lib->n_endmember);
    for (int l = 0; l < dims.n_band; ++l)
      for (int r = 0; r < lib->n_endmember; ++r)
        red.m_tilde[static_cast<std::size_t>(l) * lib->n_endmember + r] =
            lib->at(l, r) * red.g_tilde[l];
  }
  return red;
}

double reduced_pixel_log_lik(const ReducedObservation& red, int pix,
                             std::span<const double> lambda) {
  double s = 0.0;
  for (int l = 0; l < red.n_band; ++l) {
    const double mean = lambda[l] * red.g_tilde[l];
    const double yv = red.y_tilde[static_cast<std::size_t>(l) * red.n_pix + pix];
    if (yv > 0.0) {
      if (mean <= 0.0) return -std::numeric_limits<double>::infinity();
      s += yv * std::log(mean);
    }
    s -= mean;
  }
  return s;
}

ChainOutput pfa_unmix(const ProblemInstance& inst, const SamplerConfig& cfg, bool force) {
  SuffStats stats = build_suff_stats(*inst.cube, *inst.irf, inst.support);
  const ReductionCheck check = check_reduction_validity(stats);
  if (!check.valid && !force) {
    throw ValidationError(
        "integrated-waveform reduction invalid: g~ varies by a relative " +
        std::to_string(check.max_rel_variation) + " over the support (use force to override)");
  }
  SamplerConfig pcfg = cfg;
  pcfg.depth_updates_enabled = false;
  pcfg.tv_prior_enabled = false;
  return run_chain(inst, pcfg);
}

}  // namespace msl

#include "msl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace msl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---- WorkerPool -------------------------------------------------------------

WorkerPool::WorkerPool(int n_workers) {
  if (n_workers <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    size_ = hw == 0 ? 1 : static_cast<int>(hw);
  } else {
    size_ = n_workers;
  }
}

void WorkerPool::parallel_for(std::int64_t n,
                              const std::function<void(std::int64_t, std::int64_t)>& body) const {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<std::int64_t>(size_, n));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto guarded = [&](std::int64_t b, std::int64_t e) {
    try {
      body(b, e);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  for (int w = 1; w < workers; ++w) {
    std::int64_t b = w * chunk, e = std::min<std::int64_t>(n, b + chunk);
    if (b >= e) break;
    threads.emplace_back(guarded, b, e);
  }
  guarded(0, std::min<std::int64_t>(n, chunk));
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---- config / accumulators ----------------------------------------------------

std::vector<std::string> SamplerConfig::violations() const {
  std::vector<std::string> v;
  if (!(n_bi > 0 && n_bi < n_mc)) v.push_back("need 0 < n_bi < n_mc");
  if (thin < 1) v.push_back("thin must be >= 1");
  if (hmc_leapfrog < 5 || hmc_leapfrog > 20) v.push_back("hmc_leapfrog must lie in [5, 20]");
  if (!(hmc_step0 > 0.0)) v.push_back("hmc_step0 must be > 0");
  if (!(sapg_delta0 > 0.0)) v.push_back("sapg_delta0 must be > 0");
  if (fixed_abar && !(*fixed_abar > 0.0)) v.push_back("fixed_abar must be > 0");
  if (!(fixed.alpha > 0.0) || !(fixed.nu > 0.0)) v.push_back("alpha and nu must be > 0");
  return v;
}

void ChainAccum::init(int n_pix, int n_endmember, int n_sites, int support_width) {
  n_samples = 0;
  width = support_width;
  depth_hist.assign(static_cast<std::size_t>(n_pix) * support_width, 0);
  a_sum.assign(static_cast<std::size_t>(n_pix) * n_endmember, 0.0);
  z_count.assign(n_sites, 0);
  x_sum_z1.assign(n_sites, 0.0);
  x_count_z1.assign(n_sites, 0);
}

void ChainAccum::add(const SceneState& s, const DepthSupport& sup) {
  ++n_samples;
  const int n_pix = s.n_row * s.n_col;
  for (int p = 0; p < n_pix; ++p)
    ++depth_hist[static_cast<std::size_t>(p) * width + (s.t[p] - sup.t_min)];
  for (std::size_t k = 0; k < a_sum.size(); ++k) a_sum[k] += s.a[k];
  for (std::size_t k = 0; k < z_count.size(); ++k) {
    if (s.z[k]) {
      ++z_count[k];
      x_sum_z1[k] += s.x[k];
      ++x_count_z1[k];
    }
  }
}

// ---- shared helpers ------------------------------------------------------------

namespace {

// Inverse-CDF draw from log-weights; ascending index order is the stable
// tie-break.
int sample_categorical(std::span<const double> log_w, RngStream& stream) {
  double m = -kInf;
  for (double w : log_w) m = std::max(m, w);
  if (m == -kInf) return -1;
  double total = 0.0;
  for (double w : log_w) total += std::exp(w - m);
  const double u = stream.next_double() * total;
  double cum = 0.0;
  int last_finite = 0;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    if (log_w[k] == -kInf) continue;
    cum += std::exp(log_w[k] - m);
    last_finite = static_cast<int>(k);
    if (cum > u) return static_cast<int>(k);
  }
  return last_finite;
}

inline double bernoulli_p1(double w0, double w1) {
  if (w0 == -kInf) return 1.0;
  if (w1 == -kInf) return 0.0;
  const double d = w0 - w1;
  return d > 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
}

}  // namespace

// ---- depth updates ----------------------------------------------------------------

void update_depths(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                   double eps, bool tv_enabled, std::uint64_t seed, std::uint32_t sweep,
                   const WorkerPool& pool) {
  const GridDims& dims = stats.dims;
  const DepthSupport& sup = stats.support;
  const int w = sup.width();
  const int n_pix = dims.n_pixels();

  auto body = [&](std::int64_t b, std::int64_t e, int colour) {
    std::vector<double> lambda(dims.n_band), log_w(w);
    for (std::int64_t p = b; p < e; ++p) {
      const int pix = static_cast<int>(p);
      const int i = pix / dims.n_col, j = pix % dims.n_col;
      if (colour >= 0 && ((i + j) & 1) != colour) continue;
      RngStream stream({seed, sweep, RngStage::kDepth, static_cast<std::uint64_t>(pix)});
      state.spectrum(lib, pix, lambda);
      const double* data_row = stats.depth_data.data() + static_cast<std::size_t>(pix) * w;
      std::copy(data_row, data_row + w, log_w.begin());
      const int di = stats.pixel_delay_idx[pix];
      for (int l = 0; l < dims.n_band; ++l) {
        const double lam = lambda[l];
        if (lam == 0.0) continue;
        const double* gt_row =
            stats.g_tilde.data() + (static_cast<std::size_t>(l) * stats.delays.size() + di) * w;
        for (int k = 0; k < w; ++k) log_w[k] -= lam * gt_row[k];
      }
      if (tv_enabled && eps != 0.0) {
        int nb[4];
        int deg = 0;
        if (i > 0) nb[deg++] = state.t[pix - dims.n_col];
        if (i + 1 < dims.n_row) nb[deg++] = state.t[pix + dims.n_col];
        if (j > 0) nb[deg++] = state.t[pix - 1];
        if (j + 1 < dims.n_col) nb[deg++] = state.t[pix + 1];
        for (int k = 0; k < w; ++k) {
          const int t0 = sup.t_min + k;
          std::int64_t s = 0;
          for (int q = 0; q < deg; ++q) s += std::abs(t0 - nb[q]);
          log_w[k] -= eps * static_cast<double>(s);
        }
      }
      const int pick = sample_categorical(log_w, stream);
      if (pick < 0) {
        std::ostringstream os;
        os << "depth update: no admissible bin at sweep " << sweep << ", pixel (" << i << ", "
           << j << ")";
        throw std::runtime_error(os.str());
      }
      state.t[pix] = sup.t_min + pick;
    }
  };

  if (!tv_enabled) {
    // with the uniform prior all pixels are conditionally independent
    pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) { body(b, e, -1); });
    return;
  }
  for (int colour = 0; colour < 2; ++colour)
    pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) { body(b, e, colour); });
}

void update_depths_prior_only(std::vector<int>& t, int n_row, int n_col, const DepthSupport& sup,
                              double eps, bool tv_enabled, std::uint64_t seed,
                              std::uint32_t sweep, const WorkerPool& pool) {
  const int w = sup.width();
  const int n_pix = n_row * n_col;
  auto body = [&](std::int64_t b, std::int64_t e, int colour) {
    std::vector<double> log_w(w);
    for (std::int64_t p = b; p < e; ++p) {
      const int pix = static_cast<int>(p);
      const int i = pix / n_col, j = pix % n_col;
      if (colour >= 0 && ((i + j) & 1) != colour) continue;
      RngStream stream({seed, sweep, RngStage::kAuxDepth, static_cast<std::uint64_t>(pix)});
      if (!tv_enabled || eps == 0.0) {
        int k = static_cast<int>(stream.next_double() * w);
        t[pix] = sup.t_min + std::min(k, w - 1);
        continue;
      }
      int nb[4];
      int deg = 0;
      if (i > 0) nb[deg++] = t[pix - n_col];
      if (i + 1 < n_row) nb[deg++] = t[pix + n_col];
      if (j > 0) nb[deg++] = t[pix - 1];
      if (j + 1 < n_col) nb[deg++] = t[pix + 1];
      for (int k = 0; k < w; ++k) {
        const int t0 = sup.t_min + k;
        std::int64_t s = 0;
        for (int q = 0; q < deg; ++q) s += std::abs(t0 - nb[q]);
        log_w[k] = -eps * static_cast<double>(s);
      }
      t[pix] = sup.t_min + sample_categorical(log_w, stream);
    }
  };
  if (!tv_enabled) {
    pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) { body(b, e, -1); });
    return;
  }
  for (int colour = 0; colour < 2; ++colour)
    pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) { body(b, e, colour); });
}

// ---- label updates -----------------------------------------------------------------

void update_labels(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                   const AdaptedHyper& theta, std::uint64_t seed, std::uint32_t sweep,
                   const WorkerPool& pool) {
  const GridDims& dims = stats.dims;
  const int L = dims.n_band, R = lib.n_endmember;
  const int n_sites = dims.n_sites();

  // (i+j+l) parity separates spatial and spectral neighbours alike
  for (int colour = 0; colour < 2; ++colour) {
    pool.parallel_for(n_sites, [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t c = b; c < e; ++c) {
        const int cell = static_cast<int>(c);
        const int l = cell % L;
        const int pix = cell / L;
        const int i = pix / dims.n_col, j = pix % dims.n_col;
        if (((i + j + l) & 1) != colour) continue;
        RngStream stream({seed, sweep, RngStage::kLabel, static_cast<std::uint64_t>(cell)});
        double m = 0.0;
        const double* row = lib.m.data() + static_cast<std::size_t>(l) * R;
        const double* av = state.abundance(pix);
        for (int r = 0; r < R; ++r) m += row[r] * av[r];
        const double x = state.x[cell];
        const double yv = stats.y_tilde_at(pix, l);
        const double gt = stats.g_tilde_for_pixel(l, pix, state.t[pix]);
        auto [w0, w1] = ising_local_log_odds(state.z, dims.n_row, dims.n_col, L, i, j, l,
                                             theta.beta_n, theta.beta_l, theta.beta0);
        double lik0 = -m * gt;
        if (yv > 0.0) lik0 = m > 0.0 ? lik0 + yv * std::log(m) : -kInf;
        double lik1 = -(m + x) * gt;
        if (yv > 0.0) lik1 += yv * std::log(m + x);
        state.z[cell] = stream.next_double() < bernoulli_p1(w0 + lik0, w1 + lik1) ? 1 : 0;
      }
    });
  }
}

void update_labels_prior_only(std::vector<std::uint8_t>& z, int n_row, int n_col, int n_band,
                              const AdaptedHyper& theta, std::uint64_t seed, std::uint32_t sweep,
                              const WorkerPool& pool) {
  const int n_sites = n_row * n_col * n_band;
  for (int colour = 0; colour < 2; ++colour) {
    pool.parallel_for(n_sites, [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t c = b; c < e; ++c) {
        const int l = static_cast<int>(c) % n_band;
        const int pix = static_cast<int>(c) / n_band;
        const int i = pix / n_col, j = pix % n_col;
        if (((i + j + l) & 1) != colour) continue;
        RngStream stream({seed, sweep, RngStage::kAuxLabel, static_cast<std::uint64_t>(c)});
        auto [w0, w1] = ising_local_log_odds(z, n_row, n_col, n_band, i, j, l, theta.beta_n,
                                             theta.beta_l, theta.beta0);
        z[c] = stream.next_double() < bernoulli_p1(w0, w1) ? 1 : 0;
      }
    });
  }
}

// ---- abundance HMC -------------------------------------------------------------------

int update_abundances(SceneState& state, const SuffStats& stats, const EndmemberLibrary& lib,
                      const AdaptedHyper& theta, std::optional<double> fixed_abar,
                      double hmc_step, int leapfrog, std::uint64_t seed, std::uint32_t sweep,
                      const WorkerPool& pool) {
  const GridDims& dims = stats.dims;
  const int R = lib.n_endmember, L = dims.n_band;
  const int n_pix = dims.n_pixels();
  const int n_gamma = (dims.n_row + 1) * (dims.n_col + 1);
  std::vector<std::uint8_t> accepted(n_pix, 0);

  pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) {
    std::vector<double> y_tilde(L), g_tilde(L), anomaly(L), abar(R);
    std::vector<double> a(R), p(R), grad(R);
    for (std::int64_t pp = b; pp < e; ++pp) {
      const int pix = static_cast<int>(pp);
      const int i = pix / dims.n_col, j = pix % dims.n_col;
      RngStream stream({seed, sweep, RngStage::kAbundance, static_cast<std::uint64_t>(pix)});
      const std::size_t cbase = static_cast<std::size_t>(pix) * L;
      for (int l = 0; l < L; ++l) {
        y_tilde[l] = stats.y_tilde_at(pix, l);
        g_tilde[l] = stats.g_tilde_for_pixel(l, pix, state.t[pix]);
        anomaly[l] = state.z[cbase + l] ? state.x[cbase + l] : 0.0;
      }
      for (int r = 0; r < R; ++r) {
        if (fixed_abar) {
          abar[r] = *fixed_abar;
        } else {
          abar[r] = gmrf_abar_at({state.gamma.data() + static_cast<std::size_t>(r) * n_gamma,
                                  static_cast<std::size_t>(n_gamma)},
                                 dims.n_row, dims.n_col, i, j);
        }
      }

      auto potential = [&](const std::vector<double>& av) {
        double u = 0.0;
        for (int l = 0; l < L; ++l) {
          double lam = anomaly[l];
          const double* row = lib.m.data() + static_cast<std::size_t>(l) * R;
          for (int r = 0; r < R; ++r) lam += row[r] * av[r];
          if (y_tilde[l] > 0.0) {
            if (lam <= 0.0) return kInf;
            u -= y_tilde[l] * std::log(lam);
          }
          u += lam * g_tilde[l];
        }
        for (int r = 0; r < R; ++r) {
          if (!(av[r] > 0.0)) return kInf;
          u -= (theta.c[r] - 1.0) * std::log(av[r]) - theta.c[r] * av[r] / abar[r];
        }
        return u;
      };
      auto gradient = [&](const std::vector<double>& av, std::vector<double>& g) -> bool {
        std::fill(g.begin(), g.end(), 0.0);
        for (int l = 0; l < L; ++l) {
          double lam = anomaly[l];
          const double* row = lib.m.data() + static_cast<std::size_t>(l) * R;
          for (int r = 0; r < R; ++r) lam += row[r] * av[r];
          double wgt = g_tilde[l];
          if (y_tilde[l] > 0.0) {
            if (lam <= 0.0) return false;
            wgt -= y_tilde[l] / lam;
          }
          for (int r = 0; r < R; ++r) g[r] += row[r] * wgt;
        }
        for (int r = 0; r < R; ++r) {
          if (!(av[r] > 0.0)) return false;
          g[r] += -(theta.c[r] - 1.0) / av[r] + theta.c[r] / abar[r];
          if (!std::isfinite(g[r])) return false;
        }
        return true;
      };

      const double* a_cur = state.abundance(pix);
      std::copy(a_cur, a_cur + R, a.begin());
      double kinetic0 = 0.0;
      for (int r = 0; r < R; ++r) {
        p[r] = stream.next_normal();
        kinetic0 += 0.5 * p[r] * p[r];
      }
      if (leapfrog == 0) {  // identity proposal
        accepted[pix] = 1;
        continue;
      }
      const double h0 = potential(a) + kinetic0;
      bool ok = std::isfinite(h0) && gradient(a, grad);
      for (int step = 0; ok && step < leapfrog; ++step) {
        for (int r = 0; r < R; ++r) p[r] -= 0.5 * hmc_step * grad[r];
        for (int r = 0; r < R; ++r) {
          a[r] += hmc_step * p[r];
          while (a[r] < 0.0) {  // reflect at the positivity wall
            a[r] = -a[r];
            p[r] = -p[r];
          }
        }
        ok = gradient(a, grad);
        if (!ok) break;
        for (int r = 0; r < R; ++r) p[r] -= 0.5 * hmc_step * grad[r];
      }
      const double log_u = std::log(stream.next_open());
      if (!ok) continue;  // non-finite trajectory: reject this pixel
      double kinetic1 = 0.0;
      for (int r = 0; r < R; ++r) kinetic1 += 0.5 * p[r] * p[r];
      const double h1 = potential(a) + kinetic1;
      if (!std::isfinite(h1)) continue;
      if (log_u < h0 - h1) {
        std::copy(a.begin(), a.end(), state.abundance(pix));
        accepted[pix] = 1;
      }
    }
  });

  int n_accepted = 0;
  for (std::uint8_t f : accepted) n_accepted += f;
  return n_accepted;
}

// ---- anomaly values --------------------------------------------------------------------

void update_anomaly_values(SceneState& state, const SuffStats& stats,
                           const EndmemberLibrary& lib, const FixedHyper& fixed,
                           std::uint64_t seed, std::uint32_t sweep, const WorkerPool& pool) {
  const GridDims& dims = stats.dims;
  const int L = dims.n_band, R = lib.n_endmember;
  pool.parallel_for(dims.n_sites(), [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t c = b; c < e; ++c) {
      const int cell = static_cast<int>(c);
      const int l = cell % L;
      const int pix = cell / L;
      RngStream stream({seed, sweep, RngStage::kAnomaly, static_cast<std::uint64_t>(cell)});
      const double x_prop = stream.next_gamma(fixed.alpha, fixed.nu);
      if (!state.z[cell]) {
        // likelihood does not involve x here; prior proposals always accepted
        state.x[cell] = x_prop;
        continue;
      }
      double m = 0.0;
      const double* row = lib.m.data() + static_cast<std::size_t>(l) * R;
      const double* av = state.abundance(pix);
      for (int r = 0; r < R; ++r) m += row[r] * av[r];
      const double gt = stats.g_tilde_for_pixel(l, pix, state.t[pix]);
      const double yv = stats.y_tilde_at(pix, l);
      const double lam = m + state.x[cell], lam_prop = m + x_prop;
      double delta = -(lam_prop - lam) * gt;
      if (yv > 0.0) delta += yv * (std::log(lam_prop) - std::log(lam));
      if (std::log(stream.next_open()) < delta) state.x[cell] = x_prop;
    }
  });
}

// ---- gamma auxiliaries --------------------------------------------------------------

void update_gamma_aux(SceneState& state, const AdaptedHyper& theta, std::uint64_t seed,
                      std::uint32_t sweep, const WorkerPool& pool) {
  const int n_row = state.n_row, n_col = state.n_col, R = state.n_endmember;
  const int n_gamma = (n_row + 1) * (n_col + 1);
  pool.parallel_for(static_cast<std::int64_t>(R) * n_gamma, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t s = b; s < e; ++s) {
      const int r = static_cast<int>(s / n_gamma);
      const int idx = static_cast<int>(s % n_gamma);
      const int u = idx / (n_col + 1), v = idx % (n_col + 1);
      RngStream stream({seed, sweep, RngStage::kGammaAux, static_cast<std::uint64_t>(s)});
      const double beta =
          gmrf_beta_at(state.a.data() + r, n_row, n_col, static_cast<std::size_t>(R), u, v);
      state.gamma[static_cast<std::size_t>(r) * n_gamma + idx] =
          stream.next_inverse_gamma(theta.c[r], theta.c[r] * beta);
    }
  });
}

void update_gmrf_prior(std::vector<double>& a_r, std::vector<double>& gamma_r, int n_row,
                       int n_col, double c, int r, std::uint64_t seed, std::uint32_t sweep,
                       const WorkerPool& pool) {
  const int n_pix = n_row * n_col;
  const int n_gamma = (n_row + 1) * (n_col + 1);
  pool.parallel_for(n_pix, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t p = b; p < e; ++p) {
      const int i = static_cast<int>(p) / n_col, j = static_cast<int>(p) % n_col;
      RngStream stream({seed, sweep, RngStage::kAuxAbundance,
                        static_cast<std::uint64_t>(r) * n_pix + static_cast<std::uint64_t>(p)});
      const double abar = gmrf_abar_at(gamma_r, n_row, n_col, i, j);
      a_r[p] = stream.next_gamma(c, abar / c);
    }
  });
  pool.parallel_for(n_gamma, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t g = b; g < e; ++g) {
      const int u = static_cast<int>(g) / (n_col + 1), v = static_cast<int>(g) % (n_col + 1);
      RngStream stream({seed, sweep, RngStage::kAuxGamma,
                        static_cast<std::uint64_t>(r) * n_gamma + static_cast<std::uint64_t>(g)});
      const double beta = gmrf_beta_at(a_r.data(), n_row, n_col, 1, u, v);
      gamma_r[g] = stream.next_inverse_gamma(c, c * beta);
    }
  });
}

// ---- SAPG ----------------------------------------------------------------------------

SapgStats collect_sapg_stats(std::span<const int> t, std::span<const std::uint8_t> z,
                             std::span<const double> a, std::size_t a_stride,
                             std::span<const double> gamma, int n_row, int n_col, int n_band,
                             int n_endmember) {
  SapgStats s;
  if (!t.empty()) s.tv_edges = static_cast<double>(tv_edge_sum(t, n_row, n_col));
  if (!z.empty()) s.ising = ising_suff_stats(z, n_row, n_col, n_band);
  const int n_gamma = (n_row + 1) * (n_col + 1);
  for (int r = 0; r < n_endmember; ++r)
    s.gmrf_score.push_back(gmrf_c_score(a.data() + r, a_stride,
                                        {gamma.data() + static_cast<std::size_t>(r) * n_gamma,
                                         static_cast<std::size_t>(n_gamma)},
                                        n_row, n_col));
  return s;
}

SapgNormalizers SapgNormalizers::for_grid(const GridDims& dims) {
  SapgNormalizers n;
  const double ne = static_cast<double>(dims.n_row) * (dims.n_col - 1) +
                    static_cast<double>(dims.n_col) * (dims.n_row - 1);
  n.depth_edges = std::max(1.0, ne);
  n.spatial_edges = std::max(1.0, ne * dims.n_band);
  n.spectral_edges = std::max(1.0, static_cast<double>(dims.n_pixels()) * (dims.n_band - 1));
  n.sites = std::max(1.0, static_cast<double>(dims.n_sites()));
  n.gmrf_terms =
      std::max(1.0, static_cast<double>(dims.n_pixels() + (dims.n_row + 1) * (dims.n_col + 1)));
  return n;
}

AdaptedHyper sapg_update_hyperparams(const AdaptedHyper& theta, const SapgStats& main_stats,
                                     const SapgStats& aux_stats, double delta_u,
                                     double max_rel_step, const SapgNormalizers& norm,
                                     const HyperBox& box, bool adapt_eps, bool adapt_beta,
                                     bool adapt_c) {
  AdaptedHyper out = theta;
  auto clip = [&](double step, double scale) {
    const double cap = max_rel_step * scale;
    return std::clamp(step, -cap, cap);
  };
  if (adapt_eps) {
    // exponent carries -eps * tv_edges, so the gradient is prior minus posterior
    const double grad = (aux_stats.tv_edges - main_stats.tv_edges) / norm.depth_edges;
    out.eps += clip(delta_u * grad, std::max(out.eps, 0.2));
  }
  if (adapt_beta) {
    const double gn = (static_cast<double>(main_stats.ising.phi_n - aux_stats.ising.phi_n) / 2.0) /
                      norm.spatial_edges;
    const double gl = (static_cast<double>(main_stats.ising.phi_l - aux_stats.ising.phi_l) / 2.0) /
                      norm.spectral_edges;
    const double g0 = static_cast<double>((main_stats.ising.n_zero - main_stats.ising.n_one) -
                                          (aux_stats.ising.n_zero - aux_stats.ising.n_one)) /
                      norm.sites;
    out.beta_n += clip(delta_u * gn, std::max(out.beta_n, 0.2));
    out.beta_l += clip(delta_u * gl, std::max(out.beta_l, 0.2));
    out.beta0 += clip(delta_u * g0, 1.0);
  }
  if (adapt_c) {
    for (std::size_t r = 0; r < out.c.size(); ++r) {
      const double grad = (main_stats.gmrf_score[r] - aux_stats.gmrf_score[r]) / norm.gmrf_terms;
      out.c[r] += clip(delta_u * grad, std::max(out.c[r] - 1.0, 0.2));
    }
  }
  box.project(out);
  return out;
}

// ---- initial state --------------------------------------------------------------------

SceneState initial_state(const ProblemInstance& inst, const SuffStats& stats,
                         const SamplerConfig& cfg) {
  const GridDims& dims = inst.cube->dims();
  const int R = inst.lib->n_endmember, L = dims.n_band;
  SceneState s = SceneState::zeros(dims.n_row, dims.n_col, L, R);
  const int w = stats.support.width();
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j) {
      const int pix = dims.pixel_index(i, j);
      double ysum = 0.0;
      for (int l = 0; l < L; ++l) ysum += stats.y_tilde_at(pix, l);
      if (ysum == 0.0) {
        s.t[pix] = (stats.support.t_min + stats.support.t_max) / 2;
      } else {
        // matched-filter warm start
        const double* row = stats.depth_data.data() + static_cast<std::size_t>(pix) * w;
        int best = 0;
        for (int k = 1; k < w; ++k)
          if (row[k] > row[best]) best = k;
        s.t[pix] = stats.support.t_min + best;
      }
      for (int r = 0; r < R; ++r) {
        double denom = 0.0;
        for (int l = 0; l < L; ++l)
          denom += inst.lib->at(l, r) * stats.g_tilde_for_pixel(l, pix, s.t[pix]);
        s.abundance(pix)[r] = std::max(0.01, ysum / (R * std::max(denom, 1e-12)));
      }
    }
  std::fill(s.x.begin(), s.x.end(), cfg.fixed.alpha * cfg.fixed.nu);
  const int n_gamma = (dims.n_row + 1) * (dims.n_col + 1);
  for (int r = 0; r < R; ++r)
    for (int u = 0; u <= dims.n_row; ++u)
      for (int v = 0; v <= dims.n_col; ++v)
        s.gamma[static_cast<std::size_t>(r) * n_gamma + u * (dims.n_col + 1) + v] =
            std::max(kGmrfBoundaryAbundance,
                     gmrf_beta_at(s.a.data() + r, dims.n_row, dims.n_col,
                                  static_cast<std::size_t>(R), u, v));
  return s;
}

// ---- chain runner ------------------------------------------------------------------------

namespace {

struct ChainRunner {
  const ProblemInstance& inst;
  SamplerConfig cfg;
  SuffStats stats;
  WorkerPool pool;
  SceneState state;
  AdaptedHyper theta;
  double hmc_step;
  std::vector<int> aux_t;
  std::vector<std::uint8_t> aux_z;
  std::vector<std::vector<double>> aux_a;
  std::vector<std::vector<double>> aux_gamma;
  ChainOutput out;
  SapgNormalizers norm;

  ChainRunner(const ProblemInstance& inst_, const SamplerConfig& cfg_)
      : inst(inst_),
        cfg(cfg_),
        stats(build_suff_stats(*inst_.cube, *inst_.irf, inst_.support)),
        pool(cfg_.workers),
        theta(cfg_.theta0),
        hmc_step(cfg_.hmc_step0) {
    const GridDims& dims = inst.cube->dims();
    const int R = inst.lib->n_endmember;
    if (theta.c.empty()) theta.c.assign(R, 2.0);
    if (static_cast<int>(theta.c.size()) != R)
      throw ValidationError("theta0.c size does not match the endmember count");
    cfg.box.project(theta);
    state = initial_state(inst, stats, cfg);
    aux_t.assign(dims.n_pixels(), (inst.support.t_min + inst.support.t_max) / 2);
    aux_z.assign(dims.n_sites(), 0);
    aux_a.assign(R, std::vector<double>(dims.n_pixels(), 1.0));
    aux_gamma.assign(R, std::vector<double>((dims.n_row + 1) * (dims.n_col + 1), 1.0));
    out.dims = dims;
    out.support = inst.support;
    out.n_endmember = R;
    out.accum.init(dims.n_pixels(), R, dims.n_sites(), inst.support.width());
    norm = SapgNormalizers::for_grid(dims);
  }

  void apply_checkpoint(const SamplerCheckpoint& c) {
    const GridDims& dims = inst.cube->dims();
    const std::size_t n_pix = static_cast<std::size_t>(dims.n_pixels());
    const int R = inst.lib->n_endmember;
    if (c.state.t.size() != n_pix || c.state.a.size() != n_pix * R ||
        c.state.z.size() != static_cast<std::size_t>(dims.n_sites()) ||
        c.aux_t.size() != n_pix || static_cast<int>(c.aux_a.size()) != R ||
        c.accum.width != inst.support.width() ||
        static_cast<int>(c.theta.c.size()) != R)
      throw ValidationError("checkpoint does not match the problem instance");
    if (c.sweeps_done >= static_cast<std::uint32_t>(cfg.n_mc))
      throw ValidationError("checkpoint is already past the final sweep");
    theta = c.theta;
    hmc_step = c.hmc_step;
    state = c.state;
    aux_t = c.aux_t;
    aux_z = c.aux_z;
    aux_a = c.aux_a;
    aux_gamma = c.aux_gamma;
    out.accum = c.accum;
    out.samples = c.samples;
    out.trace = c.trace;
  }

  SamplerCheckpoint snapshot(std::uint32_t sweeps_done) const {
    SamplerCheckpoint c;
    c.sweeps_done = sweeps_done;
    c.theta = theta;
    c.hmc_step = hmc_step;
    c.state = state;
    c.aux_t = aux_t;
    c.aux_z = aux_z;
    c.aux_a = aux_a;
    c.aux_gamma = aux_gamma;
    c.accum = out.accum;
    c.samples = out.samples;
    c.trace = out.trace;
    return c;
  }

  // Advance the companion prior chains one sweep and take a projected
  // stochastic-gradient step on log f(Y|theta).
  void sapg_step(std::uint32_t u) {
    const GridDims& dims = inst.cube->dims();
    const int R = inst.lib->n_endmember;
    const bool adapt_eps = cfg.tv_prior_enabled && cfg.depth_updates_enabled;
    const bool adapt_beta = cfg.anomalies_enabled;
    const bool adapt_c = !cfg.fixed_abar;

    SapgStats main_stats, aux_stats;
    if (adapt_eps) {
      update_depths_prior_only(aux_t, dims.n_row, dims.n_col, inst.support, theta.eps, true,
                               cfg.seed, u, pool);
      main_stats.tv_edges = static_cast<double>(tv_edge_sum(state.t, dims.n_row, dims.n_col));
      aux_stats.tv_edges = static_cast<double>(tv_edge_sum(aux_t, dims.n_row, dims.n_col));
    }
    if (adapt_beta) {
      update_labels_prior_only(aux_z, dims.n_row, dims.n_col, dims.n_band, theta, cfg.seed, u,
                               pool);
      main_stats.ising = ising_suff_stats(state.z, dims.n_row, dims.n_col, dims.n_band);
      aux_stats.ising = ising_suff_stats(aux_z, dims.n_row, dims.n_col, dims.n_band);
    }
    if (adapt_c) {
      const int n_gamma = (dims.n_row + 1) * (dims.n_col + 1);
      for (int r = 0; r < R; ++r) {
        update_gmrf_prior(aux_a[r], aux_gamma[r], dims.n_row, dims.n_col, theta.c[r], r,
                          cfg.seed, u, pool);
        main_stats.gmrf_score.push_back(
            gmrf_c_score(state.a.data() + r, static_cast<std::size_t>(R),
                         {state.gamma.data() + static_cast<std::size_t>(r) * n_gamma,
                          static_cast<std::size_t>(n_gamma)},
                         dims.n_row, dims.n_col));
        aux_stats.gmrf_score.push_back(
            gmrf_c_score(aux_a[r].data(), 1, aux_gamma[r], dims.n_row, dims.n_col));
      }
    }
    const double delta = cfg.sapg_delta0 * std::pow(static_cast<double>(u), -cfg.sapg_decay);
    theta = sapg_update_hyperparams(theta, main_stats, aux_stats, delta, cfg.sapg_max_rel_step,
                                    norm, cfg.box, adapt_eps, adapt_beta, adapt_c);
  }

  ChainOutput run(std::uint32_t first_sweep) {
    const GridDims& dims = inst.cube->dims();
    const int n_pix = dims.n_pixels();
    for (std::uint32_t u = first_sweep; u <= static_cast<std::uint32_t>(cfg.n_mc); ++u) {
      const int n_acc = update_abundances(state, stats, *inst.lib, theta, cfg.fixed_abar,
                                          hmc_step, cfg.hmc_leapfrog, cfg.seed, u, pool);
      const double acc_rate = static_cast<double>(n_acc) / n_pix;
      if (u <= static_cast<std::uint32_t>(cfg.n_bi)) {
        // stochastic approximation toward the target rate; the floored gain
        // keeps tracking while theta reshapes the conditionals, frozen after
        const double eta = std::max(0.02, 0.3 * std::pow(static_cast<double>(u), -0.5));
        hmc_step = std::clamp(hmc_step * std::exp(eta * (acc_rate - cfg.hmc_target_accept)),
                              1e-7, 10.0);
      }
      if (!cfg.fixed_abar) update_gamma_aux(state, theta, cfg.seed, u, pool);
      if (cfg.depth_updates_enabled)
        update_depths(state, stats, *inst.lib, theta.eps, cfg.tv_prior_enabled, cfg.seed, u,
                      pool);
      if (cfg.anomalies_enabled) {
        update_labels(state, stats, *inst.lib, theta, cfg.seed, u, pool);
        update_anomaly_values(state, stats, *inst.lib, cfg.fixed, cfg.seed, u, pool);
      }
      if (cfg.adapt_hyper && u <= static_cast<std::uint32_t>(cfg.n_bi)) sapg_step(u);

      SweepTrace tr;
      tr.log_lik = joint_log_lik(stats, *inst.cube, *inst.lib, state);
      tr.tv_ordered = tv_potential(state.t, dims.n_row, dims.n_col);
      tr.ising = ising_suff_stats(state.z, dims.n_row, dims.n_col, dims.n_band);
      tr.theta = theta;
      tr.hmc_accept_rate = acc_rate;
      out.trace.push_back(tr);

      if (u > static_cast<std::uint32_t>(cfg.n_bi) &&
          (u - cfg.n_bi - 1) % static_cast<std::uint32_t>(cfg.thin) == 0) {
        out.accum.add(state, inst.support);
        if (cfg.store_samples) out.samples.push_back({state.t, state.a, state.z, state.x});
      }
      if (cfg.progress && cfg.progress_every > 0 && u % cfg.progress_every == 0)
        cfg.progress(static_cast<int>(u), out.trace.back().log_lik, theta);
      if (cfg.on_checkpoint && cfg.checkpoint_every > 0 && u % cfg.checkpoint_every == 0 &&
          u < static_cast<std::uint32_t>(cfg.n_mc))
        cfg.on_checkpoint(snapshot(u));
    }
    out.theta_hat = theta;
    out.final_state = state;
    return std::move(out);
  }
};

}  // namespace

ChainOutput run_chain(const ProblemInstance& inst, const SamplerConfig& cfg) {
  auto v = cfg.violations();
  if (!v.empty()) {
    std::string msg = "invalid sampler config:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ValidationError(msg);
  }
  ChainRunner runner(inst, cfg);
  return runner.run(1);
}

ChainOutput resume_chain(const ProblemInstance& inst, const SamplerConfig& cfg,
                         const SamplerCheckpoint& ckpt) {
  auto v = cfg.violations();
  if (!v.empty()) {
    std::string msg = "invalid sampler config:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ValidationError(msg);
  }
  ChainRunner runner(inst, cfg);
  runner.apply_checkpoint(ckpt);
  return runner.run(ckpt.sweeps_done + 1);
}

}  // namespace msl

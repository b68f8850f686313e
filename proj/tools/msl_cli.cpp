// Command-line front end: scene simulation, unmixing, the pixel-wise ML
// baseline, integrated-waveform unmixing, evaluation and resume.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "msl/estimators.hpp"
#include "msl/io.hpp"
#include "msl/pfa.hpp"
#include "msl/sampler.hpp"
#include "msl/scene_sim.hpp"

namespace fs = std::filesystem;
using namespace msl;

namespace {

int env_workers() {
  const char* v = std::getenv("MSL_WORKERS");
  return v ? std::atoi(v) : 0;
}

struct UnmixArgs {
  std::string cube, endmembers, irf, out, config, checkpoint;
  bool tv = false, no_anomalies = false, no_adapt = false, force = false;
  int iters = 5000, burnin = 2000, thin = 1, workers = env_workers(), checkpoint_every = 0;
  std::uint64_t seed = 1;
  double alpha = 1.0, nu = 0.05;
  double eps0 = 0.3, beta_n0 = 1.0, beta_l0 = 1.0, beta00 = 0.8, c0 = 2.0;
  int support_min = 0, support_max = 0;  // 1-based; 0 means default rule
};

const std::set<std::string> kUnmixConfigKeys = {
    "cube",   "endmembers", "irf",     "out",     "tv",      "iters",      "burnin",
    "thin",   "workers",    "seed",    "alpha",   "nu",      "eps0",       "beta_n0",
    "beta_l0", "beta00",    "c0",      "anomalies", "adapt", "support_min", "support_max",
    "checkpoint_every", "checkpoint"};

void apply_config_file(UnmixArgs& a) {
  if (a.config.empty()) return;
  auto kv = read_key_values(a.config, kUnmixConfigKeys);
  auto get = [&](const char* k) -> std::optional<std::string> {
    auto it = kv.find(k);
    return it == kv.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  if (auto v = get("cube")) a.cube = *v;
  if (auto v = get("endmembers")) a.endmembers = *v;
  if (auto v = get("irf")) a.irf = *v;
  if (auto v = get("out")) a.out = *v;
  if (auto v = get("tv")) a.tv = *v == "1" || *v == "true";
  if (auto v = get("iters")) a.iters = std::stoi(*v);
  if (auto v = get("burnin")) a.burnin = std::stoi(*v);
  if (auto v = get("thin")) a.thin = std::stoi(*v);
  if (auto v = get("workers")) a.workers = std::stoi(*v);
  if (auto v = get("seed")) a.seed = std::stoull(*v);
  if (auto v = get("alpha")) a.alpha = std::stod(*v);
  if (auto v = get("nu")) a.nu = std::stod(*v);
  if (auto v = get("eps0")) a.eps0 = std::stod(*v);
  if (auto v = get("beta_n0")) a.beta_n0 = std::stod(*v);
  if (auto v = get("beta_l0")) a.beta_l0 = std::stod(*v);
  if (auto v = get("beta00")) a.beta00 = std::stod(*v);
  if (auto v = get("c0")) a.c0 = std::stod(*v);
  if (auto v = get("anomalies")) a.no_anomalies = !(*v == "1" || *v == "true");
  if (auto v = get("adapt")) a.no_adapt = !(*v == "1" || *v == "true");
  if (auto v = get("support_min")) a.support_min = std::stoi(*v);
  if (auto v = get("support_max")) a.support_max = std::stoi(*v);
  if (auto v = get("checkpoint_every")) a.checkpoint_every = std::stoi(*v);
  if (auto v = get("checkpoint")) a.checkpoint = *v;
}

std::vector<std::pair<std::string, std::string>> unmix_config_kv(const UnmixArgs& a) {
  return {{"cube", a.cube},
          {"endmembers", a.endmembers},
          {"irf", a.irf},
          {"out", a.out},
          {"tv", a.tv ? "1" : "0"},
          {"iters", std::to_string(a.iters)},
          {"burnin", std::to_string(a.burnin)},
          {"thin", std::to_string(a.thin)},
          {"workers", std::to_string(a.workers)},
          {"seed", std::to_string(a.seed)},
          {"alpha", format_double(a.alpha)},
          {"nu", format_double(a.nu)},
          {"eps0", format_double(a.eps0)},
          {"beta_n0", format_double(a.beta_n0)},
          {"beta_l0", format_double(a.beta_l0)},
          {"beta00", format_double(a.beta00)},
          {"c0", format_double(a.c0)},
          {"anomalies", a.no_anomalies ? "0" : "1"},
          {"adapt", a.no_adapt ? "0" : "1"},
          {"support_min", std::to_string(a.support_min)},
          {"support_max", std::to_string(a.support_max)},
          {"checkpoint_every", std::to_string(a.checkpoint_every)},
          {"checkpoint", a.checkpoint}};
}

DepthSupport resolve_support(const UnmixArgs& a, const GridDims& dims) {
  if (a.support_min > 0 && a.support_max > 0) return {a.support_min - 1, a.support_max - 1};
  return default_depth_support(dims.n_bin);
}

SamplerConfig make_sampler_config(const UnmixArgs& a, int n_endmember) {
  SamplerConfig cfg;
  cfg.n_mc = a.iters;
  cfg.n_bi = a.burnin;
  cfg.thin = a.thin;
  cfg.seed = a.seed;
  cfg.workers = a.workers;
  cfg.tv_prior_enabled = a.tv;
  cfg.anomalies_enabled = !a.no_anomalies;
  cfg.adapt_hyper = !a.no_adapt;
  cfg.store_samples = false;  // accumulators carry every estimator
  cfg.fixed.alpha = a.alpha;
  cfg.fixed.nu = a.nu;
  cfg.theta0.eps = a.eps0;
  cfg.theta0.beta_n = a.beta_n0;
  cfg.theta0.beta_l = a.beta_l0;
  cfg.theta0.beta0 = a.beta00;
  cfg.theta0.c.assign(n_endmember, a.c0);
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.progress_every = std::max(1, a.iters / 20);
  cfg.progress = [](int sweep, double ll, const AdaptedHyper& th) {
    std::cerr << "sweep " << sweep << "  loglik " << ll << "  eps " << th.eps << "  beta_n "
              << th.beta_n << "  beta0 " << th.beta0 << "\n";
  };
  return cfg;
}

void write_unmix_outputs(const ChainOutput& chain, const std::string& out_dir) {
  fs::create_directories(out_dir);
  EstimateBundle est = make_estimates(chain, chain.support.t_min);
  write_maps(est, out_dir);
  std::vector<std::pair<std::string, std::string>> theta_kv = {
      {"eps", format_double(chain.theta_hat.eps)},
      {"beta_n", format_double(chain.theta_hat.beta_n)},
      {"beta_l", format_double(chain.theta_hat.beta_l)},
      {"beta0", format_double(chain.theta_hat.beta0)}};
  for (std::size_t r = 0; r < chain.theta_hat.c.size(); ++r)
    theta_kv.push_back({"c" + std::to_string(r + 1), format_double(chain.theta_hat.c[r])});
  write_key_values(out_dir + "/theta.txt", theta_kv);
  std::ofstream trace(out_dir + "/trace.csv");
  trace << "sweep,log_lik,tv_potential,ising_phi_l,ising_phi_n,n_one,hmc_accept,eps,beta_n,"
           "beta_l,beta0\n";
  for (std::size_t u = 0; u < chain.trace.size(); ++u) {
    const SweepTrace& tr = chain.trace[u];
    trace << u + 1 << "," << format_double(tr.log_lik) << "," << tr.tv_ordered << ","
          << tr.ising.phi_l << "," << tr.ising.phi_n << "," << tr.ising.n_one << ","
          << format_double(tr.hmc_accept_rate) << "," << format_double(tr.theta.eps) << ","
          << format_double(tr.theta.beta_n) << "," << format_double(tr.theta.beta_l) << ","
          << format_double(tr.theta.beta0) << "\n";
  }
}

int run_unmix_like(const UnmixArgs& args_in, bool pfa_mode) {
  UnmixArgs a = args_in;
  apply_config_file(a);
  if (a.cube.empty() || a.endmembers.empty() || a.irf.empty() || a.out.empty())
    throw ValidationError("unmix: --cube, --endmembers, --irf and --out are required");
  if (a.checkpoint.empty()) a.checkpoint = a.out + "/checkpoint.txt";
  PhotonCube cube = read_cube(a.cube);
  EndmemberLibrary lib = read_endmembers(a.endmembers);
  ImpulseResponseSet irf = read_irf(a.irf);
  DepthSupport sup = resolve_support(a, cube.dims());
  ProblemInstance inst = make_instance(cube, lib, irf, sup);
  SamplerConfig cfg = make_sampler_config(a, lib.n_endmember);
  if (cfg.checkpoint_every > 0) {
    fs::create_directories(a.out);
    const auto run_kv = unmix_config_kv(a);
    const std::string ckpt_path = a.checkpoint;
    cfg.on_checkpoint = [run_kv, ckpt_path](const SamplerCheckpoint& c) {
      write_checkpoint(c, run_kv, ckpt_path);
    };
  }
  ChainOutput chain = pfa_mode ? pfa_unmix(inst, cfg, a.force) : run_chain(inst, cfg);
  write_unmix_outputs(chain, a.out);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust spectral unmixing and depth estimation for multispectral "
               "single-photon lidar histograms"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scene and photon cube");
  SceneSpec spec;
  std::string sim_out;
  double sim_budget = 1.0;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--budget", sim_budget, "mean photons per pixel per band");
  sim->add_option("--rows", spec.n_row);
  sim->add_option("--cols", spec.n_col);
  sim->add_option("--bands", spec.n_band);
  sim->add_option("--bins", spec.n_bin);
  sim->add_option("--bin-ps", spec.bin_ps);
  sim->add_option("--endmembers", spec.n_endmember);
  sim->add_option("--seed", spec.seed);
  sim->add_option("--shapes", spec.n_shapes);
  sim->add_option("--anomaly-strips", spec.n_anomaly_strips);
  sim->add_option("--anomaly-amplitude", spec.anomaly_amplitude);
  sim->add_option("--board-level", spec.board_level);
  sim->add_option("--object-level", spec.object_level);
  sim->add_option("--mixing-band", spec.mixing_band_px);
  sim->add_option("--fwhm-lo", spec.fwhm_lo_ps);
  sim->add_option("--fwhm-hi", spec.fwhm_hi_ps);
  sim->add_option("--max-delay", spec.max_delay_bins);
  sim->add_option("--board-depth", spec.board_depth_from_tmin);

  // ---- unmix / pfa ----
  UnmixArgs ua;
  auto add_unmix_opts = [&](CLI::App* cmd) {
    cmd->add_option("--cube", ua.cube);
    cmd->add_option("--endmembers", ua.endmembers);
    cmd->add_option("--irf", ua.irf);
    cmd->add_option("--out", ua.out);
    cmd->add_option("--config", ua.config, "key=value config file; flags override");
    cmd->add_option("--iters", ua.iters)->capture_default_str();
    cmd->add_option("--burnin", ua.burnin)->capture_default_str();
    cmd->add_option("--thin", ua.thin)->capture_default_str();
    cmd->add_option("--seed", ua.seed)->capture_default_str();
    cmd->add_option("--alpha", ua.alpha)->capture_default_str();
    cmd->add_option("--nu", ua.nu)->capture_default_str();
    cmd->add_option("--workers", ua.workers);
    cmd->add_option("--support-min", ua.support_min, "1-based; 0 uses the default margin rule");
    cmd->add_option("--support-max", ua.support_max);
    cmd->add_option("--checkpoint-every", ua.checkpoint_every);
    cmd->add_option("--checkpoint", ua.checkpoint);
    cmd->add_flag("--no-anomalies", ua.no_anomalies, "nominal linear mixing, no anomaly term");
    cmd->add_flag("--no-adapt", ua.no_adapt, "freeze the MRF hyperparameters");
    cmd->add_option("--eps0", ua.eps0);
    cmd->add_option("--beta-n0", ua.beta_n0);
    cmd->add_option("--beta-l0", ua.beta_l0);
    cmd->add_option("--beta00", ua.beta00);
    cmd->add_option("--c0", ua.c0);
  };
  auto* unmix = app.add_subcommand("unmix", "sample the posterior and write estimate maps");
  add_unmix_opts(unmix);
  unmix->add_flag("--tv", ua.tv, "enable the total-variation depth prior");
  auto* pfa = app.add_subcommand("pfa", "depth-free unmixing of the integrated waveforms");
  add_unmix_opts(pfa);
  pfa->add_flag("--force", ua.force, "run even if the reduction check fails");

  // ---- ml-depth ----
  auto* ml = app.add_subcommand("ml-depth", "pixel-wise maximum-likelihood depth baseline");
  std::string ml_cube, ml_irf, ml_out;
  int ml_band = -1, ml_support_min = 0, ml_support_max = 0;
  bool ml_joint = false;
  ml->add_option("--cube", ml_cube)->required();
  ml->add_option("--irf", ml_irf)->required();
  ml->add_option("--out", ml_out)->required();
  ml->add_option("--band", ml_band, "single wavelength index, 1-based");
  ml->add_flag("--joint", ml_joint, "use every wavelength");
  ml->add_option("--support-min", ml_support_min);
  ml->add_option("--support-max", ml_support_max);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "depth RMSE (mm) and label F1 against reference maps");
  std::string ev_est, ev_ref;
  ev->add_option("--est", ev_est)->required();
  ev->add_option("--ref", ev_ref)->required();

  // ---- resume ----
  auto* res = app.add_subcommand("resume", "continue an interrupted run from a checkpoint");
  std::string res_ckpt;
  res->add_option("--checkpoint", res_ckpt)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      SyntheticScene scene = make_scene(spec);
      double gain = 0.0;
      PhotonCube cube = simulate_cube(scene, sim_budget, spec.seed, &gain);
      fs::create_directories(sim_out);
      write_cube(cube, sim_out + "/cube.msl");
      write_endmembers(scene.lib, sim_out + "/endmembers.csv");
      // the written response carries the exposure, like a real calibration
      write_irf(scene.irf.scaled(gain), sim_out + "/irf.txt");
      TruthMaps truth;
      truth.dims = scene.dims;
      truth.support = scene.support;
      truth.n_endmember = scene.lib.n_endmember;
      truth.ref_bin = scene.support.t_min;
      truth.depth_bins = scene.true_depth;
      truth.abundance = scene.true_abundance;
      truth.labels = scene.true_z;
      truth.anomaly_values = scene.true_x;
      write_truth_maps(truth, sim_out + "/truth");
      write_key_values(sim_out + "/sim.txt",
                       {{"gain", format_double(gain)},
                        {"budget", format_double(sim_budget)},
                        {"seed", std::to_string(spec.seed)},
                        {"empty_cell_fraction", format_double(empty_cell_fraction(cube))}});
      std::cout << "wrote " << sim_out << " (gain " << gain << ")\n";
      return 0;
    }
    if (unmix->parsed()) return run_unmix_like(ua, false);
    if (pfa->parsed()) return run_unmix_like(ua, true);
    if (ml->parsed()) {
      if (ml_joint == (ml_band > 0))
        throw ValidationError("ml-depth: pass exactly one of --joint or --band");
      PhotonCube cube = read_cube(ml_cube);
      ImpulseResponseSet irf = read_irf(ml_irf);
      DepthSupport sup = ml_support_min > 0 && ml_support_max > 0
                             ? DepthSupport{ml_support_min - 1, ml_support_max - 1}
                             : default_depth_support(cube.dims().n_bin);
      auto viol = sup.violations(cube.dims().n_bin);
      if (!viol.empty()) throw ValidationError(viol.front());
      SuffStats stats = build_suff_stats(cube, irf, sup);
      std::vector<int> depth =
          ml_depth_baseline(cube, irf, stats, ml_joint ? MlDepthMode::kJoint
                                                       : MlDepthMode::kSingleBand,
                            ml_band - 1);
      fs::create_directories(ml_out);
      TruthMaps out_maps;
      out_maps.dims = cube.dims();
      out_maps.support = sup;
      out_maps.n_endmember = 0;
      out_maps.ref_bin = sup.t_min;
      out_maps.depth_bins = depth;
      out_maps.abundance = {};
      out_maps.labels.assign(cube.dims().n_sites(), 0);
      out_maps.anomaly_values.assign(cube.dims().n_sites(), 0.0);
      write_truth_maps(out_maps, ml_out);
      std::cout << "wrote " << ml_out << "\n";
      return 0;
    }
    if (ev->parsed()) {
      MapSet est = read_maps(ev_est);
      MapSet ref = read_maps(ev_ref);
      if (est.depth_bins.empty() || ref.depth_bins.empty())
        throw ValidationError("eval: both directories need depth_bins.csv");
      if (est.n_row != ref.n_row || est.n_col != ref.n_col)
        throw ValidationError("eval: estimate and reference shapes differ");
      const double mm_per_bin = GridDims{1, 1, 1, 1, est.bin_ps}.depth_per_bin_mm();
      std::cout << "rmse_mm=" << format_double(rmse_mm(est.depth_bins, ref.depth_bins,
                                                       mm_per_bin))
                << "\n";
      if (!est.labels.empty() && !ref.labels.empty() && est.labels.size() == ref.labels.size())
        std::cout << "f1=" << format_double(label_f1(est.labels, ref.labels)) << "\n";
      return 0;
    }
    if (res->parsed()) {
      std::map<std::string, std::string> kv;
      SamplerCheckpoint ckpt = read_checkpoint(res_ckpt, &kv);
      UnmixArgs a;
      a.cube = kv.at("cube");
      a.endmembers = kv.at("endmembers");
      a.irf = kv.at("irf");
      a.out = kv.at("out");
      a.tv = kv.at("tv") == "1";
      a.iters = std::stoi(kv.at("iters"));
      a.burnin = std::stoi(kv.at("burnin"));
      a.thin = std::stoi(kv.at("thin"));
      a.workers = std::stoi(kv.at("workers"));
      a.seed = std::stoull(kv.at("seed"));
      a.alpha = std::stod(kv.at("alpha"));
      a.nu = std::stod(kv.at("nu"));
      a.eps0 = std::stod(kv.at("eps0"));
      a.beta_n0 = std::stod(kv.at("beta_n0"));
      a.beta_l0 = std::stod(kv.at("beta_l0"));
      a.beta00 = std::stod(kv.at("beta00"));
      a.c0 = std::stod(kv.at("c0"));
      a.no_anomalies = kv.at("anomalies") == "0";
      a.no_adapt = kv.at("adapt") == "0";
      a.support_min = std::stoi(kv.at("support_min"));
      a.support_max = std::stoi(kv.at("support_max"));
      a.checkpoint_every = std::stoi(kv.at("checkpoint_every"));
      a.checkpoint = kv.at("checkpoint");
      PhotonCube cube = read_cube(a.cube);
      EndmemberLibrary lib = read_endmembers(a.endmembers);
      ImpulseResponseSet irf = read_irf(a.irf);
      ProblemInstance inst = make_instance(cube, lib, irf, resolve_support(a, cube.dims()));
      SamplerConfig cfg = make_sampler_config(a, lib.n_endmember);
      if (cfg.checkpoint_every > 0) {
        const auto run_kv = unmix_config_kv(a);
        const std::string ckpt_path = a.checkpoint;
        cfg.on_checkpoint = [run_kv, ckpt_path](const SamplerCheckpoint& c) {
          write_checkpoint(c, run_kv, ckpt_path);
        };
      }
      ChainOutput chain = resume_chain(inst, cfg, ckpt);
      write_unmix_outputs(chain, a.out);
      std::cout << "wrote " << a.out << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

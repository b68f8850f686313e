// Python bindings for the main operations: scene simulation, posterior
// unmixing, the ML depth baseline and the evaluation metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "msl/estimators.hpp"
#include "msl/io.hpp"
#include "msl/pfa.hpp"
#include "msl/sampler.hpp"
#include "msl/scene_sim.hpp"

namespace py = pybind11;
using namespace msl;

namespace {

PhotonCube cube_from_array(const py::array_t<std::uint32_t>& counts, double bin_ps) {
  if (counts.ndim() != 4) throw ValidationError("counts must be a 4-D array (rows, cols, bands, bins)");
  GridDims dims{static_cast<int>(counts.shape(0)), static_cast<int>(counts.shape(1)),
                static_cast<int>(counts.shape(2)), static_cast<int>(counts.shape(3)), bin_ps};
  auto r = counts.unchecked<4>();
  PhotonCube cube(dims);
  for (int i = 0; i < dims.n_row; ++i)
    for (int j = 0; j < dims.n_col; ++j)
      for (int l = 0; l < dims.n_band; ++l)
        for (int t = 0; t < dims.n_bin; ++t)
          if (r(i, j, l, t)) cube.add_count(i, j, l, t, r(i, j, l, t));
  cube.finalize();
  return cube;
}

py::array_t<std::uint32_t> cube_to_array(const PhotonCube& cube) {
  const GridDims& d = cube.dims();
  py::array_t<std::uint32_t> out({d.n_row, d.n_col, d.n_band, d.n_bin});
  auto w = out.mutable_unchecked<4>();
  for (int i = 0; i < d.n_row; ++i)
    for (int j = 0; j < d.n_col; ++j)
      for (int l = 0; l < d.n_band; ++l) {
        for (int t = 0; t < d.n_bin; ++t) w(i, j, l, t) = 0;
        for (const BinCount& bc : cube.cell(i, j, l)) w(i, j, l, bc.bin) = bc.count;
      }
  return out;
}

EndmemberLibrary lib_from_array(const py::array_t<double>& m) {
  if (m.ndim() != 2) throw ValidationError("endmember matrix must be 2-D (bands, endmembers)");
  EndmemberLibrary lib;
  lib.n_band = static_cast<int>(m.shape(0));
  lib.n_endmember = static_cast<int>(m.shape(1));
  auto r = m.unchecked<2>();
  lib.m.resize(static_cast<std::size_t>(lib.n_band) * lib.n_endmember);
  for (int l = 0; l < lib.n_band; ++l)
    for (int k = 0; k < lib.n_endmember; ++k)
      lib.m[static_cast<std::size_t>(l) * lib.n_endmember + k] = r(l, k);
  return lib;
}

ImpulseResponseSet irf_from_array(const py::array_t<double>& params) {
  if (params.ndim() != 2 || params.shape(1) != 4)
    throw ValidationError("irf parameters must be (bands, 4): eta, mu, sigma, delay");
  auto r = params.unchecked<2>();
  std::vector<GaussianIrfParams> ps(params.shape(0));
  for (py::ssize_t l = 0; l < params.shape(0); ++l) {
    ps[l].eta = r(l, 0);
    ps[l].mu_bins = r(l, 1);
    ps[l].sigma_bins = r(l, 2);
    ps[l].delay_bins = static_cast<int>(r(l, 3));
  }
  return ImpulseResponseSet::from_gaussian(ps);
}

template <typename T>
py::array_t<T> matrix(const std::vector<T>& v, int rows, int cols) {
  py::array_t<T> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> irf_params_to_array(const ImpulseResponseSet& irf) {
  const auto& ps = *irf.gaussian_params();
  py::array_t<double> out({static_cast<int>(ps.size()), 4});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t l = 0; l < ps.size(); ++l) {
    w(l, 0) = ps[l].eta;
    w(l, 1) = ps[l].mu_bins;
    w(l, 2) = ps[l].sigma_bins;
    w(l, 3) = ps[l].delay_bins;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(mslpy, m) {
  m.doc() = "Robust Poisson spectral unmixing and depth estimation for multispectral "
            "single-photon lidar histograms";

  m.def("poisson_log_pmf", &poisson_log_pmf, py::arg("k"), py::arg("mean"));

  m.def(
      "simulate",
      [](int rows, int cols, int bands, int bins, int endmembers, double budget,
         std::uint64_t seed, double bin_ps, int anomaly_strips) {
        SceneSpec spec;
        spec.n_row = rows;
        spec.n_col = cols;
        spec.n_band = bands;
        spec.n_bin = bins;
        spec.n_endmember = endmembers;
        spec.seed = seed;
        spec.bin_ps = bin_ps;
        spec.n_anomaly_strips = anomaly_strips;
        SyntheticScene scene = make_scene(spec);
        double gain = 0.0;
        PhotonCube cube = simulate_cube(scene, budget, seed, &gain);
        py::dict out;
        out["counts"] = cube_to_array(cube);
        out["true_depth"] = matrix(scene.true_depth, rows, cols);
        py::array_t<double> abund({rows, cols, endmembers});
        std::copy(scene.true_abundance.begin(), scene.true_abundance.end(),
                  abund.mutable_data());
        out["true_abundance"] = abund;
        py::array_t<std::uint8_t> labels({rows, cols, bands});
        std::copy(scene.true_z.begin(), scene.true_z.end(), labels.mutable_data());
        out["true_labels"] = labels;
        out["endmembers"] = matrix(scene.lib.m, bands, endmembers);
        // exposure-calibrated response, consistent with the drawn counts
        out["irf_params"] = irf_params_to_array(scene.irf.scaled(gain));
        out["gain"] = gain;
        out["t_min"] = scene.support.t_min;
        out["t_max"] = scene.support.t_max;
        out["bin_ps"] = bin_ps;
        return out;
      },
      py::arg("rows") = 16, py::arg("cols") = 16, py::arg("bands") = 4, py::arg("bins") = 64,
      py::arg("endmembers") = 3, py::arg("budget") = 3.0, py::arg("seed") = 1,
      py::arg("bin_ps") = 2.0, py::arg("anomaly_strips") = 1);

  m.def(
      "unmix",
      [](py::array_t<std::uint32_t> counts, py::array_t<double> endmembers,
         py::array_t<double> irf_params, double bin_ps, int iters, int burnin, bool tv,
         std::uint64_t seed, double alpha, double nu, int workers, int thin, bool anomalies) {
        PhotonCube cube = cube_from_array(counts, bin_ps);
        EndmemberLibrary lib = lib_from_array(endmembers);
        ImpulseResponseSet irf = irf_from_array(irf_params);
        DepthSupport sup = default_depth_support(cube.dims().n_bin);
        ProblemInstance inst = make_instance(cube, lib, irf, sup);
        SamplerConfig cfg;
        cfg.n_mc = iters;
        cfg.n_bi = burnin;
        cfg.tv_prior_enabled = tv;
        cfg.seed = seed;
        cfg.fixed.alpha = alpha;
        cfg.fixed.nu = nu;
        cfg.workers = workers;
        cfg.thin = thin;
        cfg.anomalies_enabled = anomalies;
        cfg.store_samples = false;
        ChainOutput chain;
        {
          py::gil_scoped_release release;
          chain = run_chain(inst, cfg);
        }
        EstimateBundle est = make_estimates(chain, sup.t_min);
        const int rows = est.n_row, cols = est.n_col;
        py::dict out;
        out["depth_bins"] = matrix(est.depth_bins, rows, cols);
        out["depth_mm"] = matrix(est.depth_mm, rows, cols);
        out["confidence"] = matrix(est.confidence, rows, cols);
        py::array_t<double> abund({rows, cols, est.n_endmember});
        std::copy(est.abundance.begin(), est.abundance.end(), abund.mutable_data());
        out["abundance"] = abund;
        py::array_t<std::uint8_t> labels({rows, cols, est.n_band});
        std::copy(est.labels.begin(), est.labels.end(), labels.mutable_data());
        out["labels"] = labels;
        py::array_t<double> rv({rows, cols, est.n_band});
        std::copy(est.anomaly_values.begin(), est.anomaly_values.end(), rv.mutable_data());
        out["anomaly_values"] = rv;
        py::dict theta;
        theta["eps"] = chain.theta_hat.eps;
        theta["beta_n"] = chain.theta_hat.beta_n;
        theta["beta_l"] = chain.theta_hat.beta_l;
        theta["beta0"] = chain.theta_hat.beta0;
        theta["c"] = chain.theta_hat.c;
        out["theta"] = theta;
        std::vector<double> ll;
        ll.reserve(chain.trace.size());
        for (const auto& tr : chain.trace) ll.push_back(tr.log_lik);
        out["log_lik_trace"] = py::cast(ll);
        return out;
      },
      py::arg("counts"), py::arg("endmembers"), py::arg("irf_params"), py::arg("bin_ps") = 2.0,
      py::arg("iters") = 200, py::arg("burnin") = 100, py::arg("tv") = true, py::arg("seed") = 1,
      py::arg("alpha") = 1.0, py::arg("nu") = 0.05, py::arg("workers") = 0, py::arg("thin") = 1,
      py::arg("anomalies") = true);

  m.def(
      "ml_depth",
      [](py::array_t<std::uint32_t> counts, py::array_t<double> irf_params, double bin_ps,
         int band) {
        PhotonCube cube = cube_from_array(counts, bin_ps);
        ImpulseResponseSet irf = irf_from_array(irf_params);
        DepthSupport sup = default_depth_support(cube.dims().n_bin);
        SuffStats stats = build_suff_stats(cube, irf, sup);
        std::vector<int> depth =
            ml_depth_baseline(cube, irf, stats,
                              band < 0 ? MlDepthMode::kJoint : MlDepthMode::kSingleBand, band);
        return matrix(depth, cube.dims().n_row, cube.dims().n_col);
      },
      py::arg("counts"), py::arg("irf_params"), py::arg("bin_ps") = 2.0, py::arg("band") = -1);

  m.def(
      "rmse_mm",
      [](py::array_t<int> est, py::array_t<int> ref, double bin_ps) {
        std::vector<int> a(est.data(), est.data() + est.size());
        std::vector<int> b(ref.data(), ref.data() + ref.size());
        return rmse_mm(a, b, GridDims{1, 1, 1, 1, bin_ps}.depth_per_bin_mm());
      },
      py::arg("est"), py::arg("ref"), py::arg("bin_ps") = 2.0);

  m.def("label_f1", [](py::array_t<std::uint8_t> est, py::array_t<std::uint8_t> ref) {
    std::vector<std::uint8_t> a(est.data(), est.data() + est.size());
    std::vector<std::uint8_t> b(ref.data(), ref.data() + ref.size());
    return label_f1(a, b);
  });
}

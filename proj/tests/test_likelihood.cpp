#include <doctest.h>

#include <cmath>
#include <limits>

#include "msl/likelihood.hpp"
#include "msl/rng.hpp"
#include "test_support.hpp"

using namespace msl;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Direct evaluation of the per-pixel likelihood as a triple sum over every
// band and bin, independent of the table-driven fast path.
double direct_pixel_log_lik(const PhotonCube& cube, const ImpulseResponseSet& irf, int i, int j,
                            std::span<const double> lambda, int t0) {
  const GridDims& dims = cube.dims();
  const int d = irf.pixel_delay(dims.pixel_index(i, j));
  double s = 0.0;
  for (int l = 0; l < dims.n_band; ++l)
    for (int t = 0; t < dims.n_bin; ++t)
      s += poisson_log_pmf(cube.count_at(i, j, l, t), lambda[l] * irf.g(l, t - t0 - d));
  return s;
}

// an all-ones response covering every offset the grid can produce
ImpulseResponseSet flat_irf(int n_band, int n_bin) {
  const int len = 2 * n_bin - 1;
  std::vector<double> v(static_cast<std::size_t>(n_band) * len, 1.0);
  return ImpulseResponseSet::from_dense(n_band, len, v, -(n_bin - 1));
}

}  // namespace

TEST_CASE("poisson log pmf closed forms and conventions") {
  CHECK(poisson_log_pmf(0, 0.0) == 0.0);
  CHECK(poisson_log_pmf(5, 0.0) == -kInf);
  CHECK(poisson_log_pmf(0, 2.0) == doctest::Approx(-2.0).epsilon(1e-14));
  // 3 log 2 - 2 - log 6
  CHECK(poisson_log_pmf(3, 2.0) == doctest::Approx(-1.7123179275482194).epsilon(1e-12));
  CHECK_THROWS_AS(poisson_log_pmf(-1, 1.0), ValidationError);
  CHECK_THROWS_AS(poisson_log_pmf(1, -0.5), ValidationError);
}

TEST_CASE("poisson pmf sums to one over its effective support") {
  for (double lambda : {0.1, 1.0, 7.3, 55.0}) {
    const std::int64_t k_max =
        static_cast<std::int64_t>(lambda + 40.0 * std::sqrt(lambda) + 25.0);
    double total = 0.0;
    for (std::int64_t k = 0; k <= k_max; ++k) total += std::exp(poisson_log_pmf(k, lambda));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("suff stats: integrated counts and response tables") {
  GridDims dims{1, 1, 1, 16, 2.0};
  PhotonCube cube(dims);
  cube.add_count(0, 0, 0, 2, 2);
  cube.add_count(0, 0, 0, 5, 1);
  cube.finalize();

  SUBCASE("y~ caches the per-cell sum") {
    auto irf = flat_irf(1, 16);
    SuffStats stats = build_suff_stats(cube, irf, {4, 11});
    CHECK(stats.y_tilde_at(0, 0) == 3.0);
  }
  SUBCASE("all-ones response gives a constant g~ equal to T") {
    auto irf = flat_irf(1, 16);
    SuffStats stats = build_suff_stats(cube, irf, {4, 11});
    for (int t0 = 4; t0 <= 11; ++t0) CHECK(stats.g_tilde_at(0, 0, t0) == doctest::Approx(16.0));
  }
  SUBCASE("interior gaussian response gives a depth-independent g~") {
    auto irf = ImpulseResponseSet::from_gaussian({{1.0, 0.0, 0.8, 0}});
    SuffStats stats = build_suff_stats(cube, irf, {6, 9});
    double direct6 = 0.0, direct9 = 0.0;
    for (int t = 0; t < 16; ++t) {
      direct6 += irf.g(0, t - 6);
      direct9 += irf.g(0, t - 9);
    }
    CHECK(stats.g_tilde_at(0, 0, 6) == doctest::Approx(direct6).epsilon(1e-12));
    CHECK(stats.g_tilde_at(0, 0, 9) == doctest::Approx(direct9).epsilon(1e-12));
    CHECK(std::fabs(direct6 - direct9) <= 1e-9 * direct6);
    CHECK(stats.max_g_tilde_rel_variation() <= 1e-9);
  }
  SUBCASE("truncated support is detected") {
    auto irf = ImpulseResponseSet::from_gaussian({{1.0, 0.0, 3.0, 0}});
    SuffStats stats = build_suff_stats(cube, irf, {1, 14});
    CHECK(stats.max_g_tilde_rel_variation() > 1e-3);
  }
}

TEST_CASE("pixel log lik: aligned single photon matches the direct sum") {
  GridDims dims{1, 1, 1, 4, 2.0};
  PhotonCube cube = oracle::cube_from_dense(dims, {1, 0, 0, 0});
  std::vector<double> g = {1.0, 0.0, 0.0, 0.0};
  auto irf = ImpulseResponseSet::from_dense(1, 4, g, 0);
  SuffStats stats = build_suff_stats(cube, irf, {0, 0});
  std::vector<double> lambda = {2.0};
  const double fast = pixel_log_lik(stats, cube, 0, 0, lambda, 0, true);
  const double direct = direct_pixel_log_lik(cube, irf, 0, 0, lambda, 0);
  CHECK(fast == doctest::Approx(direct).epsilon(1e-12));
  CHECK(fast == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-12));
}

TEST_CASE("pixel log lik equals the direct triple sum on random instances") {
  GridDims dims{1, 1, 3, 16, 2.0};
  RngStream rng({17, 0, RngStage::kGeneric, 0});
  for (int rep = 0; rep < 20; ++rep) {
    PhotonCube cube(dims);
    for (int l = 0; l < 3; ++l)
      for (int t = 0; t < 16; ++t) {
        const auto y = rng.next_poisson(0.6);
        if (y) cube.add_count(0, 0, l, t, static_cast<std::uint32_t>(y));
      }
    cube.finalize();
    auto irf = ImpulseResponseSet::from_gaussian(
        {{1.0, 0.0, 5.0, 0}, {0.7, 0.5, 6.0, 0}, {1.3, -0.4, 4.5, 0}});
    DepthSupport sup{5, 10};
    SuffStats stats = build_suff_stats(cube, irf, sup);
    std::vector<double> lambda = {0.2 + rng.next_double(), 0.5 + rng.next_double(),
                                  0.1 + rng.next_double()};
    for (int t0 = sup.t_min; t0 <= sup.t_max; ++t0) {
      const double fast = pixel_log_lik(stats, cube, 0, 0, lambda, t0, true);
      const double direct = direct_pixel_log_lik(cube, irf, 0, 0, lambda, t0);
      if (direct == -kInf)
        CHECK(fast == -kInf);
      else
        CHECK(fast == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("zero counts reduce the log lik to the exposure term") {
  GridDims dims{1, 1, 2, 12, 2.0};
  PhotonCube cube(dims);
  cube.finalize();
  auto irf = flat_irf(2, 12);
  SuffStats stats = build_suff_stats(cube, irf, {3, 8});
  std::vector<double> lambda = {0.7, 1.9};
  const double expect = -(lambda[0] * 12.0 + lambda[1] * 12.0);
  CHECK(pixel_log_lik(stats, cube, 0, 0, lambda, 5) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero rate with photons present is log-impossible, not an exception") {
  GridDims dims{1, 1, 1, 8, 2.0};
  PhotonCube cube(dims);
  cube.add_count(0, 0, 0, 3, 1);
  cube.finalize();
  auto irf = flat_irf(1, 8);
  SuffStats stats = build_suff_stats(cube, irf, {2, 5});
  std::vector<double> lambda = {0.0};
  CHECK(pixel_log_lik(stats, cube, 0, 0, lambda, 3) == -kInf);
}

TEST_CASE("joint log lik adds pixel terms") {
  GridDims dims{3, 3, 2, 16, 2.0};
  RngStream rng({23, 0, RngStage::kGeneric, 1});
  PhotonCube cube(dims);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 2; ++l)
        for (int t = 0; t < 16; ++t) {
          const auto y = rng.next_poisson(0.4);
          if (y) cube.add_count(i, j, l, t, static_cast<std::uint32_t>(y));
        }
  cube.finalize();
  auto irf = ImpulseResponseSet::from_gaussian({{1.0, 0.0, 4.0, 0}, {0.8, 0.0, 5.0, 0}});
  DepthSupport sup{5, 10};
  SuffStats stats = build_suff_stats(cube, irf, sup);
  SceneState state = SceneState::zeros(3, 3, 2, 1);
  EndmemberLibrary lib = oracle::library_from({1.0, 0.6}, 2, 1);
  for (int p = 0; p < 9; ++p) {
    state.t[p] = 5 + p % 6;
    state.abundance(p)[0] = 0.3 + 0.1 * p;
  }
  double direct = 0.0;
  std::vector<double> lambda(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int p = i * 3 + j;
      state.spectrum(lib, p, lambda);
      direct += direct_pixel_log_lik(cube, irf, i, j, lambda, state.t[p]);
    }
  CHECK(joint_log_lik(stats, cube, lib, state, true) ==
        doctest::Approx(direct).epsilon(1e-10));

  SUBCASE("single pixel equals the pixel term and two identical pixels double it") {
    GridDims one{1, 1, 2, 16, 2.0};
    PhotonCube c1(one);
    c1.add_count(0, 0, 0, 7, 2);
    c1.add_count(0, 0, 1, 8, 1);
    c1.finalize();
    SuffStats s1 = build_suff_stats(c1, irf, sup);
    SceneState st1 = SceneState::zeros(1, 1, 2, 1);
    st1.t[0] = 7;
    st1.abundance(0)[0] = 0.5;
    std::vector<double> lam(2);
    st1.spectrum(lib, 0, lam);
    CHECK(joint_log_lik(s1, c1, lib, st1) ==
          doctest::Approx(pixel_log_lik(s1, c1, 0, 0, lam, 7)).epsilon(1e-12));

    GridDims two{1, 2, 2, 16, 2.0};
    PhotonCube c2(two);
    for (int j = 0; j < 2; ++j) {
      c2.add_count(0, j, 0, 7, 2);
      c2.add_count(0, j, 1, 8, 1);
    }
    c2.finalize();
    SuffStats s2 = build_suff_stats(c2, irf, sup);
    SceneState st2 = SceneState::zeros(1, 2, 2, 1);
    st2.t = {7, 7};
    st2.abundance(0)[0] = 0.5;
    st2.abundance(1)[0] = 0.5;
    CHECK(joint_log_lik(s2, c2, lib, st2) ==
          doctest::Approx(2.0 * joint_log_lik(s1, c1, lib, st1)).epsilon(1e-12));
  }
}

TEST_CASE("abundance gradient matches central finite differences") {
  const int L = 5, R = 3;
  RngStream rng({31, 0, RngStage::kGeneric, 2});
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> m(L * R), a(R), r_anom(L), y(L), gt(L);
    for (auto& v : m) v = 0.1 + rng.next_double();
    for (auto& v : a) v = 0.2 + rng.next_double();
    for (auto& v : r_anom) v = rng.next_double() < 0.3 ? 0.5 * rng.next_double() : 0.0;
    for (auto& v : y) v = static_cast<double>(rng.next_poisson(4.0));
    for (auto& v : gt) v = 5.0 + 5.0 * rng.next_double();
    EndmemberLibrary lib = oracle::library_from(m, L, R);
    std::vector<double> grad(R);
    grad_log_lik_abundance(y, gt, lib, a, r_anom, grad);
    auto loglik = [&](const std::vector<double>& av) {
      double s = 0.0;
      for (int l = 0; l < L; ++l) {
        double lam = r_anom[l];
        for (int q = 0; q < R; ++q) lam += m[l * R + q] * av[q];
        if (y[l] > 0.0) s += y[l] * std::log(lam);
        s -= lam * gt[l];
      }
      return s;
    };
    for (int q = 0; q < R; ++q) {
      const double h = 1e-6 * std::max(1.0, std::fabs(a[q]));
      auto ap = a,  an = a;
      ap[q] += h;
      an[q] -= h;
      const double fd = (loglik(ap) - loglik(an)) / (2.0 * h);
      CHECK(grad[q] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("abundance gradient closed forms") {
  SUBCASE("noise-free fixed point has zero gradient") {
    EndmemberLibrary lib = oracle::library_from({1.0, 2.0, 0.5}, 3, 1);
    std::vector<double> a = {0.7}, r_anom = {0.0, 0.0, 0.0}, gt = {3.0, 4.0, 5.0};
    std::vector<double> y(3);
    for (int l = 0; l < 3; ++l) y[l] = lib.at(l, 0) * a[0] * gt[l];
    std::vector<double> grad(1);
    grad_log_lik_abundance(y, gt, lib, a, r_anom, grad);
    CHECK(grad[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("zero counts leave only the linear exposure term") {
    EndmemberLibrary lib = oracle::library_from({1.0, 0.5, 2.0, 0.25}, 2, 2);
    std::vector<double> y = {0.0, 0.0}, gt = {3.0, 7.0}, r_anom = {0.0, 0.0};
    std::vector<double> grad1(2), grad2(2);
    std::vector<double> a1 = {0.4, 0.9}, a2 = {0.8, 1.8};
    grad_log_lik_abundance(y, gt, lib, a1, r_anom, grad1);
    grad_log_lik_abundance(y, gt, lib, a2, r_anom, grad2);
    for (int q = 0; q < 2; ++q) {
      double expect = 0.0;
      for (int l = 0; l < 2; ++l) expect -= lib.at(l, q) * gt[l];
      CHECK(grad1[q] == doctest::Approx(expect).epsilon(1e-12));
      CHECK(grad2[q] == doctest::Approx(expect).epsilon(1e-12));  // independent of a
    }
  }
}

TEST_CASE("anomaly value derivative matches finite differences") {
  RngStream rng({37, 0, RngStage::kGeneric, 3});
  for (int rep = 0; rep < 100; ++rep) {
    const double m = 0.3 + rng.next_double();
    const double x = 0.2 + rng.next_double();
    const double gt = 4.0 + 6.0 * rng.next_double();
    const double y = static_cast<double>(rng.next_poisson(5.0));
    const double lam = m + x;
    const double grad = grad_log_lik_anomaly_value(y, gt, lam, true);
    auto f = [&](double xv) {
      return (y > 0.0 ? y * std::log(m + xv) : 0.0) - (m + xv) * gt;
    };
    const double h = 1e-6;
    const double fd = (f(x + h) - f(x - h)) / (2.0 * h);
    CHECK(grad == doctest::Approx(fd).epsilon(1e-5));
    CHECK(grad_log_lik_anomaly_value(y, gt, lam, false) == 0.0);
  }
}

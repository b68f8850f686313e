#include <doctest.h>

#include <cmath>
#include <vector>

#include "msl/priors.hpp"
#include "msl/rng.hpp"
#include "test_support.hpp"

using namespace msl;

TEST_CASE("tv potential counts ordered neighbour pairs") {
  SUBCASE("constant field") {
    std::vector<int> t(12, 5);
    CHECK(tv_potential(t, 3, 4) == 0);
  }
  SUBCASE("2x2 with one-step columns") {
    std::vector<int> t = {1, 2, 1, 2};
    CHECK(tv_potential(t, 2, 2) == 4);  // two horizontal edges, each twice
    CHECK(tv_edge_sum(t, 2, 2) == 2);
  }
  SUBCASE("1x2 single edge") {
    std::vector<int> t = {3, 8};
    CHECK(tv_potential(t, 1, 2) == 10);
  }
  SUBCASE("invariance to global shifts and transposition") {
    std::vector<int> t = {4, 9, 2, 2, 7, 5};
    std::vector<int> shifted(t);
    for (int& v : shifted) v += 11;
    CHECK(tv_potential(t, 2, 3) == tv_potential(shifted, 2, 3));
    std::vector<int> transposed = {4, 2, 9, 7, 2, 5};
    CHECK(tv_potential(t, 2, 3) == tv_potential(transposed, 3, 2));
  }
}

TEST_CASE("depth conditional prior local terms") {
  std::vector<int> nbrs = {5, 5, 5, 5};
  SUBCASE("eps zero is uniform") {
    for (int t = 0; t < 10; ++t) CHECK(depth_conditional_log_prior(t, nbrs, 0.0) == 0.0);
  }
  SUBCASE("agreement with neighbours maximizes the weight") {
    const double at_mode = depth_conditional_log_prior(5, nbrs, 0.7);
    CHECK(at_mode == 0.0);
    for (int t = 0; t < 12; ++t)
      if (t != 5) CHECK(depth_conditional_log_prior(t, nbrs, 0.7) < at_mode);
  }
  SUBCASE("1x2 conditional is a discrete laplacian in the gap") {
    const double eps = 0.5;
    const int other = 4;
    std::vector<int> nb = {other};
    for (int t = 0; t < 8; ++t)
      CHECK(depth_conditional_log_prior(t, nb, eps) ==
            doctest::Approx(-eps * std::abs(t - other)));
  }
}

TEST_CASE("depth local conditional equals the global MRF conditional") {
  // 2x3 image, support of 6 bins; compare exp(-eps * edge_sum) conditionals
  const int n_row = 2, n_col = 3, width = 6;
  const double eps = 0.45;
  std::vector<int> t = {2, 4, 1, 0, 5, 3};
  for (int site = 0; site < n_row * n_col; ++site) {
    const int i = site / n_col, j = site % n_col;
    std::vector<double> global(width), local(width);
    for (int v = 0; v < width; ++v) {
      std::vector<int> field = t;
      field[site] = v;
      global[v] = -eps * static_cast<double>(tv_edge_sum(field, n_row, n_col));
      std::vector<int> nbrs;
      if (i > 0) nbrs.push_back(t[site - n_col]);
      if (i + 1 < n_row) nbrs.push_back(t[site + n_col]);
      if (j > 0) nbrs.push_back(t[site - 1]);
      if (j + 1 < n_col) nbrs.push_back(t[site + 1]);
      local[v] = depth_conditional_log_prior(v, nbrs, eps);
    }
    auto normalize = [&](std::vector<double>& w) {
      double m = w[0];
      for (double v : w) m = std::max(m, v);
      double s = 0.0;
      for (double& v : w) {
        v = std::exp(v - m);
        s += v;
      }
      for (double& v : w) v /= s;
    };
    normalize(global);
    normalize(local);
    CHECK(oracle::tv_distance(global, local) < 1e-12);
  }
}

TEST_CASE("gamma-MRF mean and scale drivers") {
  CHECK(gmrf_abar(1, 1, 1, 1) == doctest::Approx(1.0));
  CHECK(gmrf_abar(1, 1, 2, 2) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(gmrf_abar(0.37, 0.37, 0.37, 0.37) == doctest::Approx(0.37).epsilon(1e-14));
  CHECK_THROWS_AS(gmrf_abar(1, 0, 1, 1), ValidationError);

  CHECK(gmrf_beta(1, 1, 1, 1) == doctest::Approx(1.0));
  CHECK(gmrf_beta(0, 0, 0, 0.4) == doctest::Approx(0.1));

  // corner gamma of a 1x1 grid: three boundary slots plus one matching value
  std::vector<double> a = {0.01};
  CHECK(gmrf_beta_at(a.data(), 1, 1, 1, 0, 0) == doctest::Approx(0.01).epsilon(1e-14));
}

TEST_CASE("gamma-MRF joint density term count on the 1x1/2x2 toy") {
  std::vector<double> a = {1.0};
  std::vector<double> gamma(4, 1.0);
  const double c = 2.0;
  // four real edges, each contributing -c/4
  CHECK(gmrf_joint_log_density(a.data(), 1, gamma, 1, 1, c, false) ==
        doctest::Approx(-2.0).epsilon(1e-14));
  // twelve boundary slots add -12 * c * 0.01 / 4
  CHECK(gmrf_joint_log_density(a.data(), 1, gamma, 1, 1, c, true) ==
        doctest::Approx(-2.06).epsilon(1e-14));
}

TEST_CASE("gamma-MRF log density is log-homogeneous over interior terms") {
  RngStream rng({3, 0, RngStage::kGeneric, 0});
  const int n_row = 2, n_col = 2;
  std::vector<double> a(n_row * n_col), gamma((n_row + 1) * (n_col + 1));
  for (auto& v : a) v = 0.3 + rng.next_double();
  for (auto& v : gamma) v = 0.3 + rng.next_double();
  const double c = 2.7, s = 1.9;
  std::vector<double> as(a), gs(gamma);
  for (auto& v : as) v *= s;
  for (auto& v : gs) v *= s;
  const double base = gmrf_joint_log_density(a.data(), 1, gamma, n_row, n_col, c, false);
  const double scaled = gmrf_joint_log_density(as.data(), 1, gs, n_row, n_col, c, false);
  const double expect = (c - 1.0) * a.size() * std::log(s) - (c + 1.0) * gamma.size() * std::log(s);
  CHECK(scaled - base == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("abundance conditional implied by the joint is Gamma(c, abar/c)") {
  // vary one abundance on a 1x1 grid; density ratios must match the gamma pdf
  std::vector<double> gamma = {0.8, 1.4, 0.6, 2.2};
  const double c = 3.0;
  const double abar = gmrf_abar(0.8, 0.6, 1.4, 2.2);
  auto joint = [&](double av) {
    std::vector<double> a = {av};
    return gmrf_joint_log_density(a.data(), 1, gamma, 1, 1, c, true);
  };
  auto gamma_logpdf = [&](double av) {
    return (c - 1.0) * std::log(av) - av / (abar / c);
  };
  const double x0 = 0.5;
  for (double x : {0.1, 0.7, 1.3, 2.9}) {
    CHECK(joint(x) - joint(x0) == doctest::Approx(gamma_logpdf(x) - gamma_logpdf(x0)).epsilon(1e-10));
  }
  // normalization against quadrature of the conditional
  auto density = [&](double av) { return joint(av); };
  auto grid = oracle::grid_density(density, 1e-6, 8.0, 4000);
  const double mean_quad =
      [&] {
        double s = 0.0;
        for (std::size_t k = 0; k < grid.x.size(); ++k) s += grid.x[k] * grid.mass[k];
        return s;
      }();
  CHECK(mean_quad == doctest::Approx(abar).epsilon(1e-3));  // Gamma(c, abar/c) has mean abar
}

TEST_CASE("ising sufficient statistics") {
  SUBCASE("all-zero 2x2x2 cube") {
    std::vector<std::uint8_t> z(8, 0);
    IsingStats s = ising_suff_stats(z, 2, 2, 2);
    CHECK(s.phi_n == 16);
    CHECK(s.phi_l == 8);
    CHECK(s.n_zero == 8);
    CHECK(s.n_one == 0);
  }
  SUBCASE("single flip drops phi_n by twice the spatial degree") {
    std::vector<std::uint8_t> z(2 * 3 * 1, 0);
    IsingStats before = ising_suff_stats(z, 2, 3, 1);
    z[(0 * 3 + 1) * 1 + 0] = 1;  // site (0,1,0): spatial degree 3
    IsingStats after = ising_suff_stats(z, 2, 3, 1);
    CHECK(before.phi_n - after.phi_n == 2 * 3);
  }
  SUBCASE("checkerboard in space kills spatial agreements") {
    const int n = 4;
    std::vector<std::uint8_t> z(n * n * 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < 2; ++l) z[(i * n + j) * 2 + l] = (i + j) & 1;
    IsingStats s = ising_suff_stats(z, n, n, 2);
    CHECK(s.phi_n == 0);
    CHECK(s.phi_l == 2 * n * n);  // constant across l
  }
}

TEST_CASE("ising local log odds") {
  SUBCASE("isolated site with a fair bias") {
    std::vector<std::uint8_t> z = {0};
    auto [w0, w1] = ising_local_log_odds(z, 1, 1, 1, 0, 0, 0, 1.0, 1.0, 0.5);
    CHECK(w0 == doctest::Approx(w1));
  }
  SUBCASE("all neighbours zero") {
    std::vector<std::uint8_t> z(3 * 3 * 3, 0);
    auto [w0, w1] = ising_local_log_odds(z, 3, 3, 3, 1, 1, 1, 1.0, 1.0, 0.9);
    const int degree = 4 + 2;
    CHECK(w0 - w1 == doctest::Approx(degree + 0.8).epsilon(1e-14));
  }
  SUBCASE("1x1x2 conditionals match exhaustive enumeration") {
    const double bn = 0.7, bl = 1.3, b0 = 0.35;
    for (int other = 0; other < 2; ++other) {
      // global: P(z0 = k | z1 = other) via the four joint configurations
      double w[2];
      for (int k = 0; k < 2; ++k) {
        std::vector<std::uint8_t> z = {static_cast<std::uint8_t>(k),
                                       static_cast<std::uint8_t>(other)};
        w[k] = ising_log_density(ising_suff_stats(z, 1, 1, 2), bn, bl, b0);
      }
      const double p1_global = 1.0 / (1.0 + std::exp(w[0] - w[1]));
      std::vector<std::uint8_t> z = {0, static_cast<std::uint8_t>(other)};
      auto [w0, w1] = ising_local_log_odds(z, 1, 1, 2, 0, 0, 0, bn, bl, b0);
      const double p1_local = 1.0 / (1.0 + std::exp(w0 - w1));
      CHECK(p1_local == doctest::Approx(p1_global).epsilon(1e-12));
    }
  }
  SUBCASE("local conditionals match enumeration on random 2x2x3 cubes") {
    RngStream rng({7, 0, RngStage::kGeneric, 9});
    for (int rep = 0; rep < 20; ++rep) {
      const double bn = 2.0 * rng.next_double();
      const double bl = 2.0 * rng.next_double();
      const double b0 = rng.next_double();
      std::vector<std::uint8_t> z(12);
      for (auto& v : z) v = rng.next_double() < 0.5;
      for (int site = 0; site < 12; ++site) {
        const int l = site % 3, pix = site / 3;
        const int i = pix / 2, j = pix % 2;
        double w[2];
        for (int k = 0; k < 2; ++k) {
          std::vector<std::uint8_t> zz = z;
          zz[site] = static_cast<std::uint8_t>(k);
          w[k] = ising_log_density(ising_suff_stats(zz, 2, 2, 3), bn, bl, b0);
        }
        auto [w0, w1] = ising_local_log_odds(z, 2, 2, 3, i, j, l, bn, bl, b0);
        CHECK(w1 - w0 == doctest::Approx(w[1] - w[0]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("anomaly value prior") {
  SUBCASE("exponential special case") {
    // alpha = 1, nu = 0.05: density (1/nu) exp(-x/nu)
    const double x = 0.08;
    CHECK(anomaly_value_log_prior(x, 1.0, 0.05) ==
          doctest::Approx(std::log(1.0 / 0.05) - x / 0.05).epsilon(1e-12));
  }
  SUBCASE("mode sits at (alpha-1) nu") {
    const double alpha = 2.0, nu = 1.0;
    const double mode = (alpha - 1.0) * nu;
    const double at_mode = anomaly_value_log_prior(mode, alpha, nu);
    for (double x : {0.2, 0.5, 1.5, 3.0})
      if (x != mode) CHECK(anomaly_value_log_prior(x, alpha, nu) < at_mode);
  }
  SUBCASE("normalizes to one") {
    for (auto [alpha, nu] : {std::pair{1.0, 0.05}, {2.0, 1.0}, {3.5, 0.4}}) {
      const double total = oracle::simpson(
          [&](double x) { return x <= 0.0 ? 0.0 : std::exp(anomaly_value_log_prior(x, alpha, nu)); },
          1e-9, alpha * nu + 40.0 * nu, 40000);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("domain violations") {
    CHECK(anomaly_value_log_prior(-1.0, 1.0, 1.0) == -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(anomaly_value_log_prior(1.0, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(anomaly_value_log_prior(1.0, 1.0, -2.0), ValidationError);
  }
}

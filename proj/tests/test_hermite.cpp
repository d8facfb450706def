#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "tensornet/hermite.hpp"
#include "test_support.hpp"

using namespace tensornet;

TEST_CASE("hermite_eval matches the closed forms") {
  CHECK(hermite_eval(2, 0.0) == Catch::Approx(-1.0 / std::sqrt(2.0)).margin(1e-15));
  CHECK(hermite_eval(1, 3.0) == Catch::Approx(3.0).margin(1e-15));
  CHECK(hermite_eval(3, 1.0) == Catch::Approx(-2.0 / std::sqrt(6.0)).margin(1e-15));
  CHECK(hermite_eval(0, 17.5) == 1.0);
  CHECK_THROWS_AS(hermite_eval(-1, 0.0), std::domain_error);
  CHECK_THROWS_AS(hermite_eval(201, 0.0), std::domain_error);
}

TEST_CASE("hermite polynomials are orthonormal under quadrature") {
  GaussHermiteRule rule(64);
  for (int k = 0; k <= 12; ++k) {
    for (int l = k; l <= 12; ++l) {
      double val = rule.integrate(
          [&](double z) { return hermite_eval(k, z) * hermite_eval(l, z); });
      CHECK(val == Catch::Approx(k == l ? 1.0 : 0.0).margin(1e-8));
    }
  }
}

TEST_CASE("quadrature stays finite and exact at large node counts") {
  // extreme nodes produce subnormal weights; the rule must not poison the
  // moments with overflow from the polynomial recurrence
  GaussHermiteRule rule(804);
  double w = rule.integrate([](double) { return 1.0; });
  CHECK(w == Catch::Approx(1.0).margin(1e-12));
  CHECK(rule.integrate([](double z) { return z * z; }) ==
        Catch::Approx(1.0).margin(1e-10));
  CHECK(rule.integrate([](double z) { return z * z * z * z; }) ==
        Catch::Approx(3.0).margin(1e-9));
  auto c = rule.project([](double z) { return z * z * z; }, 6);
  CHECK(c[1] == Catch::Approx(3.0).margin(1e-9));
  CHECK(c[3] == Catch::Approx(std::sqrt(6.0)).margin(1e-9));
  CHECK(std::abs(c[5]) < 1e-9);
}

TEST_CASE("polynomial coefficients: linear, cubic, quadratic basis element") {
  auto lin = make_polynomial_activation({0.0, 1.0}, 4);
  CHECK(lin.hermite_coeff(1) == Catch::Approx(1.0).margin(1e-14));
  for (int k : {0, 2, 3, 4})
    CHECK(std::abs(lin.hermite_coeff(k)) < 1e-14);
  CHECK(lin.parity == Parity::odd);

  auto cubic = make_polynomial_activation({0.0, 0.0, 0.0, 1.0}, 4);
  CHECK(cubic.hermite_coeff(1) == Catch::Approx(3.0).margin(1e-12));
  CHECK(cubic.hermite_coeff(3) == Catch::Approx(std::sqrt(6.0)).margin(1e-12));
  CHECK(std::abs(cubic.hermite_coeff(0)) < 1e-14);
  CHECK(std::abs(cubic.hermite_coeff(2)) < 1e-14);
  CHECK(cubic.parseval_residual < 1e-10);

  // h2 written in the monomial basis: (x^2 - 1)/sqrt(2)
  double s = 1.0 / std::sqrt(2.0);
  auto h2 = make_polynomial_activation({-s, 0.0, s}, 4);
  CHECK(h2.hermite_coeff(2) == Catch::Approx(1.0).margin(1e-14));
  CHECK(std::abs(h2.hermite_coeff(0)) < 1e-14);
  CHECK(h2.parity == Parity::even);

  CHECK_THROWS_AS(make_polynomial_activation({0.0, 0.0, 1.0}, 1),
                  std::invalid_argument);
}

TEST_CASE("cubic coefficients agree with the Monte Carlo projection") {
  // oracle: 10^6-sample estimate of E[h_k(G) G^3]
  auto cubic = make_polynomial_activation({0.0, 0.0, 0.0, 1.0}, 4);
  for (int k = 0; k <= 4; ++k) {
    auto est = tn_test::mc_gaussian(1, 1000000, 1234 + k,
                                    [&](const Eigen::VectorXd& x) {
                                      double g = x(0);
                                      return hermite_eval(k, g) * g * g * g;
                                    });
    CHECK(std::abs(est.mean - cubic.hermite_coeff(k)) <= 3.0 * est.stderr_);
  }
}

TEST_CASE("Parseval holds exactly for polynomials of degree <= 8") {
  Rng rng(99);
  GaussHermiteRule rule(64);
  for (int trial = 0; trial < 10; ++trial) {
    int degree = 1 + static_cast<int>(rng.uniform() * 8);
    auto coeffs = tn_test::random_poly(degree, rng);
    auto act = make_polynomial_activation(coeffs);
    double second = rule.integrate([&](double z) {
      double v = act(z);
      return v * v;
    });
    double sumsq = 0.0;
    for (double c : act.hermite) sumsq += c * c;
    CHECK(sumsq == Catch::Approx(second).epsilon(1e-10));
    CHECK(act.parseval_residual < 1e-10 * std::max(1.0, second));
  }
}

TEST_CASE("scaled tanh expansion: parity, residual, node-doubling stability") {
  auto act = make_scaled_tanh_activation(2.5, 40);
  CHECK(act.parity == Parity::odd);
  for (int k = 0; k <= 40; k += 2)
    CHECK(std::abs(act.hermite_coeff(k)) < 1e-12);
  CHECK(act.parseval_residual > 0.0);
  CHECK(act.parseval_residual < 1e-3);
  // the refined rule should already be converged
  auto finer = make_scaled_tanh_activation(2.5, 40, 402);
  for (int k = 0; k <= 40; ++k)
    CHECK(std::abs(act.hermite_coeff(k) - finer.hermite_coeff(k)) < 1e-9);
  CHECK(act(0.3) == Catch::Approx(std::tanh(0.75)).margin(1e-15));
  CHECK(act.derivative(0.0) == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("pair expectation: closed forms and zero-correlation case") {
  auto lin = make_polynomial_activation({0.0, 1.0}, 4);
  CHECK(gaussian_pair_expectation(lin.hermite, lin.hermite, 0.5) ==
        Catch::Approx(0.5).margin(1e-14));
  auto cubic = make_polynomial_activation({0.0, 0.0, 0.0, 1.0}, 4);
  // rho = 1 gives E[G^6] = 15
  CHECK(gaussian_pair_expectation(cubic.hermite, cubic.hermite, 1.0) ==
        Catch::Approx(15.0).margin(1e-10));
  auto affine = make_polynomial_activation({2.0, 1.0, 0.5}, 4);
  auto other = make_polynomial_activation({-1.0, 3.0}, 2);
  CHECK(gaussian_pair_expectation(affine.hermite, other.hermite, 0.0) ==
        Catch::Approx(affine.hermite_coeff(0) * other.hermite_coeff(0))
            .margin(1e-14));
  CHECK_THROWS_AS(gaussian_pair_expectation(lin.hermite, lin.hermite, 1.5),
                  std::invalid_argument);
}

TEST_CASE("pair expectation agrees with Monte Carlo on random triples") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int ds = 1 + static_cast<int>(rng.uniform() * 5);
    int dg = 1 + static_cast<int>(rng.uniform() * 5);
    auto sig = make_polynomial_activation(tn_test::random_poly(ds, rng));
    auto gam = make_polynomial_activation(tn_test::random_poly(dg, rng));
    double rho = 2.0 * rng.uniform() - 1.0;
    double predicted =
        gaussian_pair_expectation(sig.hermite, gam.hermite, rho);
    double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    auto est = tn_test::mc_gaussian(
        2, 1000000, 1000 + trial, [&](const Eigen::VectorXd& x) {
          return sig(x(0)) * gam(rho * x(0) + c * x(1));
        });
    INFO("trial " << trial << " rho=" << rho);
    CHECK(std::abs(est.mean - predicted) <= 4.0 * est.stderr_);
  }
}

TEST_CASE("network moments: identity teacher with linear activation") {
  int d = 6;
  auto lin = make_polynomial_activation({0.0, 1.0}, 4);
  auto m = network_moments(lin, make_identity(d));
  CHECK(m.mean_y == Catch::Approx(0.0).margin(1e-14));
  CHECK(m.var_y == Catch::Approx(double(d)).margin(1e-12));
  CHECK(m.baseline_b == Catch::Approx(0.0).margin(1e-14));
  CHECK(m.baseline_risk == Catch::Approx(double(d)).margin(1e-12));
}

TEST_CASE("network moments: single quadratic unit") {
  int d = 5;
  double s = 1.0 / std::sqrt(2.0);
  auto h2 = make_polynomial_activation({-s, 0.0, s}, 4);
  WeightEnsemble e;
  e.W = Eigen::MatrixXd::Zero(1, d);
  e.W(0, 0) = 1.0;
  e.d = d;
  e.r = 1;
  auto m = network_moments(h2, e);
  CHECK(m.var_y == Catch::Approx(1.0).margin(1e-12));
  CHECK(m.baseline_risk == Catch::Approx(1.0 - 1.0 / d).margin(1e-12));
}

TEST_CASE("zero quadratic coefficient forces baseline_risk == var_y") {
  auto odd = make_polynomial_activation({0.0, 0.7, 0.0, -0.2}, 5);
  auto m = network_moments(odd, make_simplex(4, 5, 3));
  CHECK(m.baseline_risk == m.var_y);
  CHECK(m.baseline_b == 0.0);
}

TEST_CASE("network moments agree with Monte Carlo regression") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 3 + static_cast<int>(rng.uniform() * 8);
    int r = 2 + static_cast<int>(rng.uniform() * 11);
    auto e = make_random_isotropic(d, r, 600 + trial);
    auto act = make_polynomial_activation(
        tn_test::random_poly(1 + static_cast<int>(rng.uniform() * 4), rng));
    auto m = network_moments(act, e);
    auto mc = tn_test::mc_network_moments(e, act, 1000000, 7000 + trial);
    INFO("trial " << trial << " d=" << d << " r=" << r);
    CHECK(std::abs(m.var_y - mc.var_y) <= 4.0 * mc.var_y_stderr);
    CHECK(std::abs(m.baseline_risk - mc.baseline_risk) <=
          4.0 * mc.baseline_risk_stderr);
  }
}

TEST_CASE("network moments reject non-unit rows") {
  WeightEnsemble e;
  e.W = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  e.d = 3;
  e.r = 3;
  auto lin = make_polynomial_activation({0.0, 1.0});
  CHECK_THROWS_AS(network_moments(lin, e), std::invalid_argument);
}

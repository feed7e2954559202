#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qsp/config.hpp"
#include "qsp/errors.hpp"
#include "qsp/model.hpp"

using namespace qsp;
using qsp::testing::central_difference;

TEST_CASE("g derivatives at c = 0 are a, V/K, -2V/K^2, 6V/K^3") {
  ProductionSpec g{0.5, 4.0, 1.0};
  CHECK(derivatives_of_g(g, 0.0, 0) == doctest::Approx(0.5));
  CHECK(derivatives_of_g(g, 0.0, 1) == doctest::Approx(4.0));
  CHECK(derivatives_of_g(g, 0.0, 2) == doctest::Approx(-8.0));
  CHECK(derivatives_of_g(g, 0.0, 3) == doctest::Approx(24.0));
}

TEST_CASE("g derivatives match finite differences of the lower order") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    ProductionSpec g{U(rng), U(rng), U(rng)};
    const double c = U(rng);
    for (int order = 1; order <= 3; ++order) {
      auto lower = [&](double x) { return derivatives_of_g(g, x, order - 1); };
      const double fd = central_difference(lower, c, 1e-3);
      CHECK(derivatives_of_g(g, c, order) == doctest::Approx(fd).epsilon(1e-8));
    }
  }
}

TEST_CASE("g derivative domain checks") {
  ProductionSpec g;
  CHECK_THROWS_AS(derivatives_of_g(g, -1.0, 1), DomainError);
  CHECK_THROWS_AS(derivatives_of_g(g, 1.0, 4), DomainError);
}

TEST_CASE("motility Taylor coefficients") {
  MotilitySpec m;
  m.u_star_ref = 2.0;
  const auto d = motility_taylor(m, 2.0, 12);
  CHECK(d[0] == doctest::Approx(m.D_star).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(m.D_prime_star).epsilon(1e-15));
  CHECK(std::abs(d[2]) < 1e-14);

  SUBCASE("third derivative against finite differences of the slope") {
    auto slope = [&](double u) { return m.slope(u); };
    auto second = [&](double u) { return central_difference(slope, u, 1e-3); };
    CHECK(d[3] == doctest::Approx(central_difference(second, 2.0, 1e-2)).epsilon(1e-6));
  }

  SUBCASE("all orders against a Cauchy integral of complex tanh, on and off centre") {
    // Singularities of tanh sit at distance (pi/2) / kappa from the centre.
    const double kappa = -m.D_prime_star / (m.D_star - m.D_inf);
    for (double u0 : {2.0, 2.15}) {
      const auto norm = motility_taylor_normalized(m, u0, 20);
      const double radius = 0.5 * (std::numbers::pi / 2) / kappa;
      const auto ref = qsp::testing::cauchy_taylor(
          [&](std::complex<double> u) { return qsp::testing::motility_complex(m, u); }, u0, radius, 20, 512);
      for (int k = 0; k <= 20; ++k) {
        CHECK(std::abs(norm[k] - ref[k]) <= 1e-11 * std::pow(radius, -k));
      }
    }
  }
}

TEST_CASE("motility spec identities") {
  MotilitySpec m;
  m.u_star_ref = 1.3;
  CHECK(m(1.3) == doctest::Approx(m.D_star));
  CHECK(m.slope(1.3) == doctest::Approx(m.D_prime_star));
  auto with = [&](double dp) { return m.with_slope(dp)(1.7); };
  CHECK(m.parameter_sensitivity(1.7) == doctest::Approx(central_difference(with, m.D_prime_star, 1e-4)).epsilon(1e-8));
  CHECK(m.with_slope(-2.0).slope(1.3) == doctest::Approx(-2.0));
  MotilitySpec unset;
  CHECK_THROWS_AS(unset.center(), ConfigError);
}

TEST_CASE("steady state with V = 0 is exact") {
  ModelParams p;
  p.production.V = 0.0;
  const auto roots = solve_steady_state(p);
  REQUIRE(roots.size() == 1);
  const double c = p.production.a * p.alpha0 * p.rho_star / (p.lambda * p.beta);
  CHECK(roots[0].c_star == doctest::Approx(c).epsilon(1e-15));
  CHECK(roots[0].u_star == doctest::Approx(p.production.a / p.lambda).epsilon(1e-15));
}

TEST_CASE("steady states match bisection and a dense scan over random parameters") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const ModelParams p = qsp::testing::random_params(rng);
    const auto roots = solve_steady_state(p);
    auto f = [&](double c) { return steady_residual(p, c); };
    const double slope = p.lambda * p.beta / (p.alpha0 * p.rho_star);
    const double hi = 10.0 * (p.production.a + p.production.V) / slope;
    CHECK(static_cast<int>(roots.size()) == qsp::testing::count_sign_changes(f, 0.0, hi, 20000));
    // g concave with g(0) > 0 crosses the line exactly once.
    REQUIRE(roots.size() == 1);
    const double c_ref = qsp::testing::bisect(f, 0.0, hi);
    CHECK(roots[0].c_star == doctest::Approx(c_ref).epsilon(1e-12));
    CHECK(roots[0].u_star == doctest::Approx(p.g(roots[0].c_star) / p.lambda).epsilon(1e-14));
    CHECK(roots[0].N * std::sqrt(2 * std::numbers::pi * p.epsilon / p.lambda) ==
          doctest::Approx(p.rho_star).epsilon(1e-14));
  }
}

TEST_CASE("steady state default values") {
  const auto base = make_base_state(ModelParams{});
  // m c^2 + (m K - a - V) c - a K = 0 with m = lambda beta / (alpha0 rho*).
  const auto& p = base.params;
  const double m = p.lambda * p.beta / (p.alpha0 * p.rho_star);
  const double B = m * p.production.K - p.production.a - p.production.V;
  const double c = (-B + std::sqrt(B * B + 4 * m * p.production.a * p.production.K)) / (2 * m);
  CHECK(base.steady.c_star == doctest::Approx(c).epsilon(1e-13));
  CHECK(base.params.motility.u_star_ref.value() == base.steady.u_star);
  CHECK(base.params.uniform_mode_stable(base.steady.c_star));
}

TEST_CASE("steady state errors") {
  ModelParams p;
  CHECK_THROWS_AS(solve_steady_state(p, 1e-9), NoSteadyState);
  CHECK_THROWS_AS(make_base_state(p, 3), ConfigError);
}

TEST_CASE("parameter validation") {
  ModelParams p;
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.epsilon = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.epsilon = 10.0;  // exceeds lambda L
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.motility.D_inf = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.production.K = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config round trip and strictness") {
  std::mt19937_64 rng(9);
  const ModelParams p = qsp::testing::random_params(rng);
  const json j = params_to_json(p);
  const ModelParams q = params_from_json(j);
  CHECK(params_to_json(q) == j);

  json extra = j;
  extra["bogus"] = 1;
  CHECK_THROWS_AS(params_from_json(extra), ConfigError);
  json missing = j;
  missing.erase("rho_star");
  CHECK_THROWS_AS(params_from_json(missing), ConfigError);
  json nested = j;
  nested["motility"]["typo"] = 2.0;
  CHECK_THROWS_AS(params_from_json(nested), ConfigError);
  json wrong_type = j;
  wrong_type["L"] = "six";
  CHECK_THROWS_AS(params_from_json(wrong_type), ConfigError);
  CHECK_THROWS_AS(load_params("/nonexistent/params.json"), ConfigError);
}

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qsp/errors.hpp"
#include "qsp/series.hpp"
#include "qsp/wna.hpp"

using namespace qsp;

namespace {

SeriesContext default_context(double D_prime_offset = 0.0) {
  const auto base = make_base_state(ModelParams{});
  const auto k = Wavenumber::mode(1, base.params.L);
  return SeriesContext::make(base, k, critical_Dprime(base, k) + D_prime_offset, 40);
}

double gaussian_weight(const SeriesContext& c) {
  return std::sqrt(c.lambda * c.lambda * c.lambda / (2 * std::numbers::pi));
}

}  // namespace

TEST_CASE("leading coefficients in closed form") {
  const auto ctx = default_context();
  const double k2 = ctx.k * ctx.k;
  const auto q = q_table(ctx, 2, 6);
  CHECK(q.at(0, 0) == 0.0);
  CHECK(q.at(0, 1) == doctest::Approx(ctx.rho_star * ctx.g1 * gaussian_weight(ctx) / (ctx.lambda + ctx.d(0) * k2)));
  const auto w = w_table(ctx, 2, 6);
  CHECK(w.at(0, 0) == doctest::Approx(ctx.alpha0 * ctx.u_star / (ctx.d(0) * k2)));
  const auto s = s_table(ctx, q_table(ctx, 3, 8), 0.37, 2, 6);
  CHECK(s.at(0, 0) == 0.0);
  CHECK(s.at(0, 1) == 0.0);
}

TEST_CASE("constant motility truncates the W series") {
  auto ctx = default_context();
  ctx.D.assign(ctx.D.size(), 0.0);
  ctx.D[0] = 0.8;
  const auto w = w_table(ctx, 3, 12);
  const double k2 = ctx.k * ctx.k;
  CHECK(w.at(0, 1) == doctest::Approx(ctx.alpha0 / (ctx.lambda + 0.8 * k2)));
  for (int l = 2; l <= 12; ++l) CHECK(w.at(0, l) == 0.0);
  for (int j = 1; j <= 3; ++j) {
    for (int l = 0; l <= 12; ++l) CHECK(w.at(j, l) == 0.0);
  }
}

TEST_CASE("recursions match the dense oracle on random parameter draws") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> offset(-0.3, 0.3);
  for (int draw = 0; draw < 20; ++draw) {
    const auto base = make_base_state(qsp::testing::random_params(rng));
    const auto k = Wavenumber::mode(1 + draw % 3, base.params.L);
    const auto ctx = SeriesContext::make(base, k, base.params.motility.D_prime_star * (1 + offset(rng)), 40);
    const double c22 = offset(rng);
    const auto q = q_table(ctx, 5, 12);
    CHECK(max_relative_difference(q, oracle_series({SeriesKind::Q, 1, 1.0, 0.0}, ctx, 4, 10), 4, 10) < 1e-10);
    CHECK(max_relative_difference(w_table(ctx, 4, 10), oracle_series({SeriesKind::W, 1, 1.0, 0.0}, ctx, 4, 10), 4,
                                  10) < 1e-10);
    CHECK(max_relative_difference(w_table(ctx, 4, 10, 2),
                                  oracle_series({SeriesKind::Wtilde, 2, 1.0, 0.0}, ctx, 4, 10), 4, 10) < 1e-10);
    CHECK(max_relative_difference(s_table(ctx, q, c22, 4, 10),
                                  oracle_series({SeriesKind::S, 2, 1.0, c22}, ctx, 4, 10), 4, 10) < 1e-10);
  }
}

TEST_CASE("oracle linearity in the forcing") {
  const auto ctx = default_context();
  for (auto kind : {SeriesKind::Q, SeriesKind::W}) {
    const auto one = oracle_series({kind, 1, 1.0, 0.0}, ctx, 3, 8);
    const auto two = oracle_series({kind, 1, 2.0, 0.0}, ctx, 3, 8);
    const auto zero = oracle_series({kind, 1, 0.0, 0.0}, ctx, 3, 8);
    for (int j = 0; j <= 3; ++j) {
      for (int l = 0; l <= 8; ++l) {
        CHECK(two.at(j, l) == doctest::Approx(2.0 * one.at(j, l)).epsilon(1e-13));
        CHECK(zero.at(j, l) == 0.0);
      }
    }
  }
}

TEST_CASE("doubled wavenumber table equals the single table at 2k") {
  const auto ctx = default_context();
  const auto a = w_table(ctx, 3, 10, 2);
  const auto b = w_table(ctx.with_k(2 * ctx.k), 3, 10, 1);
  for (int j = 0; j <= 3; ++j) {
    for (int l = 0; l <= 10; ++l) CHECK(a.at(j, l) == b.at(j, l));
  }
  const auto wna = WnaContext::make(make_base_state(ModelParams{}));
  CHECK(wna.wtilde.kind() == SeriesKind::Wtilde);
  CHECK(wna.wtilde.at(0, 0) == doctest::Approx(wna.w.at(0, 0) / 4.0).epsilon(1e-14));
}

TEST_CASE("zero production slope removes the q forcing") {
  auto ctx = default_context();
  ctx.g1 = 0.0;
  const auto q = q_table(ctx, 3, 8);
  for (int j = 0; j <= 3; ++j) {
    for (int l = 0; l <= 8; ++l) CHECK(q.at(j, l) == 0.0);
  }
}

TEST_CASE("table bounds") {
  const auto ctx = default_context();
  const auto q = q_table(ctx, 2, 5);
  CHECK(q.row(0).size() == static_cast<std::size_t>(row_length(0, 2, 5)));
  CHECK(q.row(2).size() == 6u);
  CHECK(q.available(2, 5));
  CHECK_FALSE(q.available(2, 6));
  CHECK_THROWS_AS(q.at(2, 6), DomainError);
  CHECK_THROWS_AS(q.at(3, 0), DomainError);
  CHECK_THROWS_AS(q_table(ctx, -1, 4), DomainError);
  CHECK_THROWS_AS(w_table(ctx, 2, 4, 3), DomainError);
  CHECK_THROWS_AS(s_table(ctx, q, 0.0, 3, 5), DomainError);
  CHECK_THROWS_AS(ctx.d(1000), DomainError);
}

TEST_CASE("deep tables stay finite") {
  const auto base = make_base_state(ModelParams{});
  const auto k = Wavenumber::mode(1, base.params.L);
  const auto ctx = SeriesContext::make(base, k, critical_Dprime(base, k), 100);
  const auto q = q_table(ctx, 8, 64);
  for (int j = 0; j <= 8; ++j) {
    for (double v : q.row(j)) CHECK(std::isfinite(v));
  }
}

TEST_CASE("evaluation at u* and the Gaussian envelope") {
  const auto ctx = default_context();
  const auto w = w_table(ctx, 3, 10);
  const double eps = 0.01;
  double expect = 0.0;
  for (int j = 0; j <= 3; ++j) expect += std::pow(eps, j) * w.at(j, 0);
  CHECK(eval_series(w, ctx.u_star, 3, 10, eps).value == doctest::Approx(expect).epsilon(1e-14));

  const auto q = q_table(ctx, 3, 10);
  const double s = 3.0 * std::sqrt(eps / ctx.lambda);
  const double bare = eval_series(q, ctx.u_star + s, 3, 10, eps).value;
  const double env = eval_series(q, ctx.u_star + s, 3, 10, eps, true).value;
  CHECK(env == doctest::Approx(bare * std::pow(eps, -1.5) * std::exp(-4.5)).epsilon(1e-12));

  auto f = [&](double u) { return eval_series(q, u, 3, 10, eps).value; };
  CHECK(eval_series_derivative(q, ctx.u_star + 0.1, 3, 10, eps) ==
        doctest::Approx(qsp::testing::central_difference(f, ctx.u_star + 0.1, 1e-3)).epsilon(1e-9));
}

TEST_CASE("q series against a collocation solve of the full amplitude equation") {
  const auto base = make_base_state(ModelParams{});
  const auto k = Wavenumber::mode(1, base.params.L);
  const double Dc = critical_Dprime(base, k);
  const auto ctx = SeriesContext::make(base, k, Dc, 80);
  const auto q = q_table(ctx, 3, 60);
  const double u0 = ctx.u_star;
  const double w = 0.2;
  const auto motility = base.params.motility.with_slope(Dc);
  struct Errors {
    double e0 = 0, e1 = 0, e3 = 0;
  };
  auto errors = [&](double eps) {
    const double left = eval_series(q, u0 - w, 3, 60, eps).value;
    const double right = eval_series(q, u0 + w, 3, 60, eps).value;
    const auto sol = qsp::testing::solve_q_bvp(motility, u0, ctx.k, ctx.lambda,
                                               ctx.rho_star * ctx.g1 * gaussian_weight(ctx), eps, w, left, right);
    Errors e;
    double scale = 0;
    for (std::size_t i = 0; i < sol.s.size(); ++i) {
      if (std::abs(sol.s[i]) > 0.15) continue;
      const double u = u0 + sol.s[i];
      scale = std::max(scale, std::abs(sol.y[i]));
      e.e0 = std::max(e.e0, std::abs(sol.y[i] - eval_series(q, u, 0, 60, eps).value));
      e.e1 = std::max(e.e1, std::abs(sol.y[i] - eval_series(q, u, 1, 60, eps).value));
      e.e3 = std::max(e.e3, std::abs(sol.y[i] - eval_series(q, u, 3, 60, eps).value));
    }
    e.e0 /= scale;
    e.e1 /= scale;
    e.e3 /= scale;
    MESSAGE("eps " << eps << " errors j<=0 " << e.e0 << " j<=1 " << e.e1 << " j<=3 " << e.e3);
    return e;
  };
  const Errors a = errors(2e-3), b = errors(1e-3);
  CHECK(b.e1 < 0.05 * b.e0);
  CHECK(b.e3 < b.e1);
  // Truncation after j terms leaves O(eps^(j+1)).
  CHECK(a.e0 / b.e0 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(a.e1 / b.e1 == doctest::Approx(4.0).epsilon(0.2));
}

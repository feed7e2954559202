#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Dense>

#include "doctest.h"
#include "qsp/continuation.hpp"
#include "qsp/errors.hpp"
#include "qsp/wna.hpp"

using namespace qsp;

namespace {

struct Coarse {
  BaseState base;
  WnaReport wna;
  std::shared_ptr<const Grid2D> grid;
  std::unique_ptr<PdeSystem> sys;
  Field uniform;
};

Coarse coarse(double rho_star = 0.65, double D_prime = -1.5, int nx = 16, double cpw = 6.0) {
  ModelParams p;
  p.epsilon = 0.02;
  p.rho_star = rho_star;
  p.motility.D_prime_star = D_prime;
  Coarse c;
  c.base = make_base_state(p);
  c.wna = wna_report(c.base);
  GridOptions go;
  go.nx = nx;
  go.cells_per_width = cpw;
  go.stretch = 1.2;
  c.grid = std::make_shared<const Grid2D>(Grid2D::graded(c.base.params, c.base.steady.u_star, go));
  c.sys = std::make_unique<PdeSystem>(c.grid, c.base.params);
  c.uniform = uniform_state(*c.sys, c.base.steady);
  return c;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("shift-invert eigenvalue matches a dense eigen-decomposition") {
  auto c = coarse(0.65, -1.5, 6, 3.0);
  for (double factor : {0.9, 1.1}) {
    c.sys->set_D_prime(factor * c.wna.D_prime_critical);
    const Field f = newton_steady(*c.sys, c.uniform).field;
    const Eigen::MatrixXd J = Eigen::MatrixXd(c.sys->jacobian(f.y));
    Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
    const double shift = 0.05;
    double best = 0.0, best_dist = 1e300;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      const auto ev = es.eigenvalues()(i);
      if (std::abs(ev) < 1e-9) continue;  // conservation zero mode
      if (std::abs(ev - shift) < best_dist) {
        best_dist = std::abs(ev - shift);
        best = ev.real();
      }
    }
    const auto est = leading_eigenvalue(*c.sys, f.y, shift);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(best).epsilon(1e-8).scale(1e-6));
    const auto& w = c.sys->mass_weights();
    double m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * est.vector[i];
    CHECK(std::abs(m) < 1e-10);
  }
}

TEST_CASE("stability of the uniform state changes sign across the critical slope") {
  auto c = coarse();
  const double D0 = c.wna.D_prime_critical;
  double probe_sign[2], eig_sign[2];
  int idx = 0;
  for (double factor : {0.9, 1.1}) {
    c.sys->set_D_prime(factor * D0);
    const Field f = newton_steady(*c.sys, c.uniform).field;
    const auto est = leading_eigenvalue(*c.sys, f.y);
    Field dir = perturb_cosine(f, 1.0);
    for (std::size_t i = 0; i < dir.y.size(); ++i) dir.y[i] -= f.y[i];
    eig_sign[idx] = est.value;
    probe_sign[idx] = stability_probe(*c.sys, f.y, dir.y);
    ++idx;
  }
  CHECK(eig_sign[0] < 0.0);
  CHECK(eig_sign[1] > 0.0);
  CHECK(probe_sign[0] < 0.0);
  CHECK(probe_sign[1] > 0.0);
}

TEST_CASE("bifurcation detection, branch switching and mirror symmetry") {
  auto c = coarse();
  const double D0 = c.wna.D_prime_critical;
  const auto bif = detect_bifurcation(*c.sys, c.uniform, 1.15 * D0, 0.85 * D0, 5);
  CHECK(std::abs(bif.D_prime - D0) < 0.1 * std::abs(D0));
  c.sys->set_D_prime(bif.D_prime);
  CHECK(std::abs(leading_eigenvalue(*c.sys, bif.uniform->y).value) < 1e-7);

  SUBCASE("critical mode has the separable cos(kx) eta(u) shape") {
    const auto& g = *c.grid;
    const auto ctx = SeriesContext::make(c.base, Wavenumber::mode(1, g.L), D0, 60);
    const auto q = q_table(ctx, 2, 30);
    double dot = 0.0, nv = 0.0, nm = 0.0;
    for (int i = 0; i < g.nx; ++i) {
      for (int j = 0; j < g.nu; ++j) {
        const double mode = std::cos(std::numbers::pi * g.x[i] / g.L) *
                            eval_series(q, g.u[j], 2, 30, c.base.params.epsilon, true).value;
        const double v = bif.eigenvector[g.n_index(i, j)];
        dot += mode * v;
        nv += v * v;
        nm += mode * mode;
      }
    }
    const double corr = std::abs(dot) / std::sqrt(nv * nm);
    INFO("correlation " << corr);
    CHECK(corr > 0.99);
  }

  SUBCASE("+ and - states are mirror images on the supercritical side") {
    const double amp = 0.01 * c.base.params.rho_star;
    const auto plus = switch_branch(*c.sys, bif, +1, amp, 4 * amp);
    const auto minus = switch_branch(*c.sys, bif, -1, amp, 4 * amp);
    CHECK(plus.D_prime == doctest::Approx(minus.D_prime).epsilon(1e-9));
    CHECK(plus.D_prime < bif.D_prime);
    CHECK(max_abs_diff(reflect(plus.field).y, minus.field.y) < 1e-8 * max_abs(plus.field.y));
    const auto obs = observables(plus.field);
    CHECK(obs.rho_left > obs.rho_right);
    CHECK(obs.rho_cos_amplitude == doctest::Approx(amp).epsilon(1e-8));
    const auto w = rho_amplitude_weights(*c.grid);
    double a = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) a += w[i] * plus.field.y[i];
    CHECK(a == doctest::Approx(obs.rho_cos_amplitude).epsilon(1e-12));

    // Small-amplitude state against the weakly nonlinear branch, unfolding measured from D_hat.
    const double predicted = c.base.params.rho_star * c.wna.b * std::sqrt(std::abs(plus.D_prime - bif.D_prime));
    CHECK(obs.delta_rho == doctest::Approx(predicted).epsilon(0.2));
    c.sys->set_D_prime(plus.D_prime);
    CHECK(leading_eigenvalue(*c.sys, plus.field.y).value < 0.0);

    // Peaks sit where the local velocity g(c(x)) - lambda u vanishes.
    const auto& g = *c.grid;
    for (int i = 0; i < g.nx; ++i) {
      int jmax = 0;
      for (int j = 1; j < g.nu; ++j) {
        if (plus.field.n(i, j) > plus.field.n(i, jmax)) jmax = j;
      }
      const double u_eq = c.base.params.g(plus.field.c(i)) / c.base.params.lambda;
      CHECK(std::abs(g.u[jmax] - u_eq) < 3.0 * std::sqrt(c.base.params.epsilon / c.base.params.lambda));
    }
  }

  SUBCASE("continuing the nontrivial branch away from onset") {
    const double amp = 0.01 * c.base.params.rho_star;
    const auto plus = switch_branch(*c.sys, bif, +1, amp, 4 * amp);
    StepPolicy pol;
    pol.max_points = 8;
    pol.param_scale = std::abs(D0);
    pol.initial = 0.02;
    pol.record_stability = false;
    const auto br = continue_branch(*c.sys, plus.field, plus.D_prime, 1.3 * D0, bif.D_prime, pol, -1,
                                    BranchLabel::Plus);
    REQUIRE(br.points.size() >= 4);
    for (std::size_t i = 0; i < br.points.size(); ++i) {
      CHECK(br.points[i].residual < 1e-8);
      if (i > 0) {
        CHECK(br.points[i].D_prime < br.points[i - 1].D_prime);
        CHECK(br.points[i].delta_rho > br.points[i - 1].delta_rho);
      }
    }
  }
}

TEST_CASE("uniform branch continuation crosses the pitchfork once") {
  auto c = coarse();
  const double D0 = c.wna.D_prime_critical;
  c.sys->set_D_prime(0.85 * D0);
  const Field start = newton_steady(*c.sys, c.uniform).field;
  StepPolicy pol;
  pol.param_scale = std::abs(D0);
  pol.initial = 0.05;
  pol.max = 0.08;
  pol.max_points = 12;
  const auto br = continue_branch(*c.sys, start, 0.85 * D0, 1.15 * D0, 0.85 * D0, pol, -1, BranchLabel::Uniform);
  REQUIRE(br.points.size() >= 4);
  int flips = 0;
  for (std::size_t i = 0; i < br.points.size(); ++i) {
    CHECK(br.points[i].delta_rho < 1e-10);
    if (i > 0 && br.points[i].stable != br.points[i - 1].stable) ++flips;
  }
  CHECK(flips == 1);
  const auto bif = detect_bifurcation(*c.sys, br);
  CHECK(std::abs(bif.D_prime - D0) < 0.1 * std::abs(D0));
}

TEST_CASE("subcritical branch bends toward the stable side and is unstable") {
  auto c = coarse(0.3, -1.2);
  REQUIRE(c.wna.criticality == Criticality::Subcritical);
  const double D0 = c.wna.D_prime_critical;
  const auto bif = detect_bifurcation(*c.sys, c.uniform, 1.15 * D0, 0.85 * D0, 5);
  const double amp = 0.01 * c.base.params.rho_star;
  const auto plus = switch_branch(*c.sys, bif, +1, amp, 4 * amp);
  CHECK(plus.D_prime > bif.D_prime);
  c.sys->set_D_prime(plus.D_prime);
  CHECK(leading_eigenvalue(*c.sys, plus.field.y).value > 0.0);
}

TEST_CASE("square-root fit on synthetic data") {
  const double Dh = -1.5, b = 3.2, rho = 0.65;
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 10; ++i) {
    const double d = 1e-4 * std::pow(100.0, i / 9.0);
    pts.emplace_back(Dh - d, rho * b * std::sqrt(d));
  }
  const auto fit = fit_b(pts, Dh, rho, 0.0, 1.0);
  CHECK(fit.b_hat == doctest::Approx(b).epsilon(1e-10));
  CHECK(fit.free_exponent == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.n_points == 10);
  CHECK_THROWS_AS(fit_b(pts, Dh, rho, 5e-3, 1.0), PreconditionError);
  CHECK_THROWS_AS(fit_b(pts, Dh, 0.0, 0.0, 1.0), PreconditionError);
}

TEST_CASE("argument checks") {
  auto c = coarse(0.65, -1.5, 6, 3.0);
  CHECK_THROWS_AS(detect_bifurcation(*c.sys, c.uniform, -1.0, -2.0), PreconditionError);
  CHECK_THROWS_AS(detect_bifurcation(*c.sys, c.uniform, -1.45, -1.3, 3), NotBracketed);
  StepPolicy bad;
  bad.min = 1.0;
  CHECK_THROWS_AS(continue_branch(*c.sys, c.uniform, -1.5, -2.0, -1.0, bad, 1, BranchLabel::Uniform),
                  PreconditionError);
}

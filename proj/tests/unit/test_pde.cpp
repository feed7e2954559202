#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include <Eigen/SparseCore>

#include "doctest.h"
#include "oracles.hpp"
#include "qsp/errors.hpp"
#include "qsp/pde.hpp"

using namespace qsp;

namespace {

struct Setup {
  BaseState base;
  std::shared_ptr<const Grid2D> grid;
};

Setup small_setup(double eps = 0.02, int nx = 8, double cpw = 4.0) {
  ModelParams p;
  p.epsilon = eps;
  Setup s{make_base_state(p), nullptr};
  GridOptions go;
  go.nx = nx;
  go.cells_per_width = cpw;
  go.stretch = 1.3;
  s.grid = std::make_shared<const Grid2D>(Grid2D::graded(s.base.params, s.base.steady.u_star, go));
  return s;
}

std::vector<double> random_direction(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = N(rng);
  return v;
}

std::vector<double> matvec(const SparseMatrix& A, const std::vector<double>& v) {
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  Eigen::VectorXd y = A * x;
  return {y.data(), y.data() + y.size()};
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Uniform state with a smooth nonsymmetric distortion, still positive.
Field distorted(const PdeSystem& sys, const SteadyState& st) {
  Field f = perturb_cosine(uniform_state(sys, st), 0.05, 1);
  const auto& g = sys.grid();
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.nu; ++j) f.y[g.n_index(i, j)] *= 1.0 + 0.03 * std::sin(2.0 * g.x[i] + g.u[j]);
    f.y[g.c_index(i)] *= 1.0 + 0.02 * std::cos(3.0 * g.x[i] / g.L);
  }
  return f;
}

}  // namespace

TEST_CASE("Bernoulli function") {
  CHECK(bernoulli(0.0) == 1.0);
  for (double z : {1e-9, 1e-4, 1e-3, 2e-3, 0.5, 5.0, 40.0, 300.0}) {
    CHECK(bernoulli(-z) - bernoulli(z) == doctest::Approx(z).epsilon(1e-12));
    auto B = [](double x) { return bernoulli(x); };
    const double h = std::min(1e-3, 0.1 * z + 1e-5);
    CHECK(bernoulli_derivative(z) ==
          doctest::Approx(qsp::testing::central_difference(B, z, h)).epsilon(1e-6).scale(1e-12));
  }
  CHECK(std::isfinite(bernoulli(1000.0)));
  CHECK(bernoulli(-1000.0) == doctest::Approx(1000.0));
}

TEST_CASE("graded grid") {
  const auto s = small_setup();
  const auto& g = *s.grid;
  CHECK(g.u_faces.front() >= 0.0);
  for (int j = 0; j < g.nu; ++j) {
    CHECK(g.u_faces[j + 1] > g.u_faces[j]);
    CHECK(g.du[j] == doctest::Approx(g.u_faces[j + 1] - g.u_faces[j]));
  }
  CHECK(g.u_max >= s.base.steady.u_star + 12.0 * std::sqrt(s.base.params.epsilon));
  CHECK(g.nx * g.hx == doctest::Approx(g.L));
  GridOptions bad;
  bad.stretch = 0.5;
  CHECK_THROWS_AS(Grid2D::graded(s.base.params, s.base.steady.u_star, bad), DomainError);
  CHECK_THROWS_AS(Grid2D::uniform(6.0, 4, 1.0, 1), DomainError);
}

TEST_CASE("Jacobians and parameter derivative match finite differences") {
  const auto s = small_setup();
  PdeSystem sys(s.grid, s.base.params);
  const Field f = distorted(sys, s.base.steady);
  const auto v = random_direction(sys.size(), 7);
  const double h = 1e-6;
  auto shifted = [&](double t) {
    auto y = f.y;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += t * v[i];
    return y;
  };
  SUBCASE("dynamic residual") {
    const auto Fp = sys.residual(shifted(h));
    const auto Fm = sys.residual(shifted(-h));
    const auto Jv = matvec(sys.jacobian(f.y), v);
    std::vector<double> diff(Jv.size());
    for (std::size_t i = 0; i < Jv.size(); ++i) diff[i] = Jv[i] - (Fp[i] - Fm[i]) / (2 * h);
    CHECK(max_abs(diff) < 1e-6 * max_abs(Jv));
  }
  SUBCASE("steady residual") {
    std::vector<double> Fp, Fm;
    sys.steady_residual(shifted(h), Fp);
    sys.steady_residual(shifted(-h), Fm);
    const auto Jv = matvec(sys.steady_jacobian(f.y), v);
    std::vector<double> diff(Jv.size());
    for (std::size_t i = 0; i < Jv.size(); ++i) diff[i] = Jv[i] - (Fp[i] - Fm[i]) / (2 * h);
    CHECK(max_abs(diff) < 1e-6 * max_abs(Jv));
  }
  SUBCASE("D' derivative") {
    PdeSystem other(s.grid, s.base.params);
    const double D0 = sys.D_prime();
    other.set_D_prime(D0 + 1e-5);
    const auto Fp = other.residual(f.y);
    other.set_D_prime(D0 - 1e-5);
    const auto Fm = other.residual(f.y);
    const auto dF = sys.parameter_derivative(f.y);
    std::vector<double> diff(dF.size());
    for (std::size_t i = 0; i < dF.size(); ++i) diff[i] = dF[i] - (Fp[i] - Fm[i]) / 2e-5;
    CHECK(max_abs(diff) < 1e-6 * max_abs(dF));
  }
}

TEST_CASE("reflection commutes with the residual") {
  const auto s = small_setup();
  PdeSystem sys(s.grid, s.base.params);
  const Field f = distorted(sys, s.base.steady);
  Field F{s.grid, sys.residual(f.y), 0.0};
  const auto lhs = sys.residual(reflect(f).y);
  const auto rhs = reflect(F).y;
  std::vector<double> diff(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) diff[i] = lhs[i] - rhs[i];
  CHECK(max_abs(diff) <= 1e-13 * max_abs(rhs));
  const Field twice = reflect(reflect(f));
  CHECK(twice.y == f.y);
}

TEST_CASE("uniform state is a discrete fixed point") {
  const auto s = small_setup();
  PdeSystem sys(s.grid, s.base.params);
  const Field u = uniform_state(sys, s.base.steady);
  CHECK(steady_residual_norm(sys, u.y) < 1e-10);
  const auto obs = observables(u);
  CHECK(obs.delta_rho < 1e-12);
  CHECK(obs.total_mass == doctest::Approx(sys.target_mass()).epsilon(1e-13));
  CHECK(obs.c[0] == doctest::Approx(s.base.steady.c_star).epsilon(5e-3));
  const auto res = newton_steady(sys, u);
  CHECK(res.iterations <= 1);
  SolverOptions opt;
  opt.dt = 1.0;
  const Field next = step(sys, u, opt);
  double diff = 0.0;
  for (std::size_t i = 0; i < u.y.size(); ++i) diff = std::max(diff, std::abs(next.y[i] - u.y[i]));
  CHECK(diff < 1e-9 * max_abs(u.y));
  CHECK(next.time == doctest::Approx(1.0));
}

TEST_CASE("cosine perturbation and observables") {
  const auto s = small_setup();
  PdeSystem sys(s.grid, s.base.params);
  const Field u = uniform_state(sys, s.base.steady);
  const Field p = perturb_cosine(u, 0.1);
  CHECK(sys.mass(p.y) == doctest::Approx(sys.mass(u.y)).epsilon(1e-14));
  const auto obs = observables(p);
  CHECK(obs.rho_cos_amplitude == doctest::Approx(0.1 * s.base.params.rho_star).epsilon(1e-12));
  CHECK(obs.rho_left > obs.rho_right);
  CHECK(obs.delta_rho == doctest::Approx(0.2 * s.base.params.rho_star).epsilon(0.05));
  std::vector<double> cosx(s.grid->nx);
  for (int i = 0; i < s.grid->nx; ++i) cosx[i] = std::cos(std::numbers::pi * s.grid->x[i] / s.grid->L);
  CHECK(cosine_coefficient(*s.grid, cosx) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(cosine_coefficient(*s.grid, cosx, 2)) < 1e-14);
}

TEST_CASE("mass is conserved to roundoff over 1000 implicit steps") {
  const auto s = small_setup();
  ModelParams p = s.base.params;
  p.motility.D_prime_star = -2.0;  // unstable: the state moves
  PdeSystem sys(s.grid, p);
  Field f = perturb_cosine(uniform_state(sys, s.base.steady), 0.01);
  const double m0 = sys.mass(f.y);
  SolverOptions opt;
  opt.dt = 0.5;
  TimeStepper stepper(sys, opt);
  double drift = 0.0;
  for (int n = 0; n < 1000; ++n) {
    f = stepper.step(f);
    drift = std::max(drift, std::abs(sys.mass(f.y) - m0) / m0);
  }
  CHECK(drift < 1e-10);
  CHECK(observables(f).delta_rho > 0.05);  // the instability has grown
}

TEST_CASE("IMEX agrees with implicit Euler to first order in dt and conserves mass") {
  const auto s = small_setup();
  ModelParams p = s.base.params;
  p.motility.D_prime_star = -2.0;
  PdeSystem sys(s.grid, p);
  const Field start = perturb_cosine(uniform_state(sys, s.base.steady), 0.01);
  auto run = [&](TimeScheme scheme, double dt) {
    SolverOptions opt;
    opt.scheme = scheme;
    opt.dt = dt;
    TimeStepper st(sys, opt);
    Field f = start;
    const int n = static_cast<int>(std::lround(20.0 / dt));
    for (int i = 0; i < n; ++i) f = st.step(f);
    return f;
  };
  const double ref = observables(run(TimeScheme::ImplicitEuler, 0.05)).rho_cos_amplitude;
  const Field imex = run(TimeScheme::Imex, 0.2);
  const double a1 = observables(imex).rho_cos_amplitude;
  const double a2 = observables(run(TimeScheme::Imex, 0.1)).rho_cos_amplitude;
  CHECK(std::abs(sys.mass(imex.y) - sys.mass(start.y)) < 1e-10 * sys.mass(start.y));
  const double a3 = observables(run(TimeScheme::Imex, 0.05)).rho_cos_amplitude;
  const double e1 = std::abs(a1 - ref), e2 = std::abs(a2 - ref), e3 = std::abs(a3 - ref);
  INFO("IMEX errors " << e1 << " " << e2 << " " << e3);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.25));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.25));
}

TEST_CASE("linear solver backends agree") {
  const auto s = small_setup();
  PdeSystem sys(s.grid, s.base.params);
  const Field f = distorted(sys, s.base.steady);
  const auto A = sys.steady_jacobian(f.y);
  const auto b = random_direction(sys.size(), 3);
  LinearSolver lu(LinearSolverKind::SparseLU);
  LinearSolver it(LinearSolverKind::BiCGSTAB, 1e-14);
  CHECK_FALSE(lu.ready());
  lu.factorize(A);
  it.factorize(A);
  CHECK(lu.ready());
  const auto x1 = lu.solve(b);
  const auto x2 = it.solve(b);
  std::vector<double> diff(x1.size());
  for (std::size_t i = 0; i < x1.size(); ++i) diff[i] = x1[i] - x2[i];
  CHECK(max_abs(diff) < 1e-8 * max_abs(x1));
  const auto r = matvec(A, x1);
  for (std::size_t i = 0; i < r.size(); ++i) diff[i] = r[i] - b[i];
  CHECK(max_abs(diff) < 1e-10 * max_abs(b));
}

TEST_CASE("moment quadrature rules give close uniform states") {
  const auto s = small_setup();
  std::vector<double> cs;
  for (auto rule : {QuadratureRule::Midpoint, QuadratureRule::Trapezoid, QuadratureRule::Simpson}) {
    SolverOptions opt;
    opt.quadrature = rule;
    PdeSystem sys(s.grid, s.base.params, opt);
    cs.push_back(uniform_state(sys, s.base.steady).c(0));
  }
  CHECK(cs[1] == doctest::Approx(cs[0]).epsilon(5e-3));
  CHECK(cs[2] == doctest::Approx(cs[0]).epsilon(5e-3));
}

TEST_CASE("solver options validation") {
  SolverOptions o;
  CHECK_NOTHROW(o.validate());
  o.dt = 0.0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = {};
  o.threads = 0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("manufactured solution: truncation error is second order") {
  // n = X(x) G(u), c = c*(1 + 0.1 cos(pi x / L)); the exact operator is
  // evaluated analytically and compared with the discrete residual.
  ModelParams p;
  p.epsilon = 0.05;
  const auto base = make_base_state(p);
  const auto& bp = base.params;
  const double m = base.steady.u_star, w = 0.3, L = bp.L, u_max = m + 3.0;
  const double kx = std::numbers::pi / L;
  auto X = [&](double x) { return 1.0 + 0.2 * std::cos(kx * x); };
  auto Xpp = [&](double x) { return -0.2 * kx * kx * std::cos(kx * x); };
  auto C = [&](double x) { return base.steady.c_star * (1.0 + 0.1 * std::cos(kx * x)); };
  auto Cpp = [&](double x) { return -0.1 * base.steady.c_star * kx * kx * std::cos(kx * x); };
  auto G = [&](double u) { return std::exp(-(u - m) * (u - m) / (2 * w * w)); };

  auto truncation = [&](int nx, int nu) {
    auto grid = std::make_shared<const Grid2D>(Grid2D::uniform(L, nx, u_max, nu));
    PdeSystem sys(grid, bp);
    std::vector<double> y(grid->size());
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < nu; ++j) y[grid->n_index(i, j)] = X(grid->x[i]) * G(grid->u[j]);
      y[grid->c_index(i)] = C(grid->x[i]);
    }
    const auto F = sys.residual(y);
    double en = 0.0, ec = 0.0;
    const double moment = m * w * std::sqrt(2 * std::numbers::pi);
    for (int i = 0; i < nx; ++i) {
      const double x = grid->x[i];
      const double gc = bp.g(C(x));
      for (int j = 0; j < nu; ++j) {
        const double u = grid->u[j], s = u - m;
        const double Gu = G(u), Gp = -s / (w * w) * Gu, Gpp = (s * s / (w * w * w * w) - 1 / (w * w)) * Gu;
        const double exact = bp.motility(u) * Xpp(x) * Gu + bp.epsilon * X(x) * Gpp -
                             X(x) * (-bp.lambda * Gu + (gc - bp.lambda * u) * Gp);
        en = std::max(en, std::abs(F[grid->n_index(i, j)] - exact));
      }
      const double exact_c = bp.D_c * Cpp(x) - bp.beta * C(x) + bp.alpha0 * X(x) * moment;
      ec = std::max(ec, std::abs(F[grid->c_index(i)] - exact_c));
    }
    return std::pair{en, ec};
  };
  const auto [n1, c1] = truncation(16, 80);
  const auto [n2, c2] = truncation(32, 160);
  const auto [n3, c3] = truncation(64, 320);
  const double order_n = std::log2(n2 / n3), order_c = std::log2(c2 / c3);
  INFO("n errors " << n1 << " " << n2 << " " << n3 << " c errors " << c1 << " " << c2 << " " << c3);
  CHECK(order_n >= 1.9);
  CHECK(order_c >= 1.9);
}

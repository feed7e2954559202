#include "qsp/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "qsp/kernels.hpp"
#include "qsp/parallel.hpp"

namespace qsp {

void SolverOptions::validate() const {
  if (!(dt > 0.0)) throw ConfigError("solver: dt must be > 0");
  if (!(newton_tol > 0.0)) throw ConfigError("solver: newton_tol must be > 0");
  if (newton_max_iter < 1) throw ConfigError("solver: newton_max_iter must be >= 1");
  if (!(iterative_tol > 0.0)) throw ConfigError("solver: iterative_tol must be > 0");
  if (threads < 1) throw ConfigError("solver: threads must be >= 1");
}

double bernoulli(double z) {
  if (std::abs(z) < 1e-3) return 1.0 - z / 2.0 + z * z / 12.0 - z * z * z * z / 720.0;
  if (z > 700.0) return z * std::exp(-z);
  if (z < -700.0) return -z;
  return z / std::expm1(z);
}

double bernoulli_derivative(double z) {
  if (std::abs(z) < 1e-3) return -0.5 + z / 6.0 - z * z * z / 180.0;
  if (z > 700.0) return (1.0 - z) * std::exp(-z);
  if (z < -700.0) return -1.0;
  const double em1 = std::expm1(z);
  return (em1 - z * std::exp(z)) / (em1 * em1);
}

namespace {

std::vector<double> moment_weights(const Grid2D& g, QuadratureRule rule) {
  const int nu = g.nu;
  std::vector<double> w(nu, 0.0);
  switch (rule) {
    case QuadratureRule::Midpoint:
      for (int j = 0; j < nu; ++j) w[j] = g.du[j];
      break;
    case QuadratureRule::Trapezoid:
      for (int j = 0; j + 1 < nu; ++j) {
        const double h = g.u[j + 1] - g.u[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
      }
      break;
    case QuadratureRule::Simpson: {
      int j = 0;
      for (; j + 2 < nu; j += 2) {
        const double h0 = g.u[j + 1] - g.u[j];
        const double h1 = g.u[j + 2] - g.u[j + 1];
        const double s = h0 + h1;
        w[j] += s / 6.0 * (2.0 - h1 / h0);
        w[j + 1] += s * s * s / (6.0 * h0 * h1);
        w[j + 2] += s / 6.0 * (2.0 - h0 / h1);
      }
      if (j + 1 < nu) {
        const double h = g.u[j + 1] - g.u[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
      }
      break;
    }
  }
  for (int j = 0; j < nu; ++j) w[j] *= g.u[j];
  return w;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

PdeSystem::PdeSystem(std::shared_ptr<const Grid2D> grid, const ModelParams& params, SolverOptions options)
    : grid_(std::move(grid)), params_(params), options_(options) {
  if (!grid_) throw DomainError("PdeSystem: null grid");
  if (!params_.motility.u_star_ref) throw ConfigError("PdeSystem: motility centre must be resolved");
  options_.validate();
  const auto& g = *grid_;
  if (std::abs(g.L - params_.L) > 1e-12 * params_.L) throw DomainError("PdeSystem: grid length differs from L");
  params_.motility.validate(g.u_max);

  inv_du_.resize(g.nu);
  for (int j = 0; j < g.nu; ++j) inv_du_[j] = 1.0 / g.du[j];
  face_gap_.assign(g.nu, 0.0);
  face_mid_.assign(g.nu, 0.0);
  for (int f = 1; f < g.nu; ++f) {
    face_gap_[f] = g.u[f] - g.u[f - 1];
    face_mid_[f] = 0.5 * (g.u[f] + g.u[f - 1]);
  }
  moment_w_ = moment_weights(g, options_.quadrature);
  mass_w_.assign(g.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.nu; ++j) mass_w_[g.n_index(i, j)] = g.hx * g.du[j];
  }
  const double centre = *params_.motility.u_star_ref;
  const auto it = std::min_element(g.u.begin(), g.u.end(), [centre](double a, double b) {
    return std::abs(a - centre) < std::abs(b - centre);
  });
  pinned_row_ = g.n_index(0, static_cast<int>(it - g.u.begin()));
  refresh_motility();
}

void PdeSystem::set_D_prime(double D_prime) {
  params_.motility.D_prime_star = D_prime;
  params_.motility.validate(grid_->u_max);
  refresh_motility();
}

void PdeSystem::refresh_motility() {
  const auto& g = *grid_;
  const double inv_hx2 = 1.0 / (g.hx * g.hx);
  D_over_hx2_.resize(g.nu);
  D_sens_over_hx2_.resize(g.nu);
  for (int j = 0; j < g.nu; ++j) {
    D_over_hx2_[j] = params_.motility(g.u[j]) * inv_hx2;
    D_sens_over_hx2_[j] = params_.motility.parameter_sensitivity(g.u[j]) * inv_hx2;
  }
}

// Scharfetter-Gummel coefficients J_f = up_f n_f - down_f n_{f-1} for the
// u-flux eps n_u - (g(c) - lambda u) n, speed taken at the midpoint of the
// adjacent centres (which makes the sampled Gaussian an exact discrete
// equilibrium for fixed c).
void PdeSystem::face_coefficients(double c, double* up, double* down, double* dup, double* ddown) const {
  const auto& g = *grid_;
  const double eps = params_.epsilon;
  const double gc = params_.g(c);
  const double g1 = dup ? derivatives_of_g(params_.production, std::max(c, 0.0), 1) : 0.0;
  up[0] = down[0] = 0.0;
  if (dup) dup[0] = ddown[0] = 0.0;
  for (int f = 1; f < g.nu; ++f) {
    const double gap = face_gap_[f];
    const double z = (gc - params_.lambda * face_mid_[f]) * gap / eps;
    const double scale = eps / gap;
    up[f] = scale * bernoulli(z);
    down[f] = scale * bernoulli(-z);
    if (dup) {
      dup[f] = g1 * bernoulli_derivative(z);
      ddown[f] = -g1 * bernoulli_derivative(-z);
    }
  }
}

void PdeSystem::residual(const std::vector<double>& y, std::vector<double>& F) const {
  const auto& g = *grid_;
  if (y.size() != g.size()) throw DomainError("residual: state size mismatch");
  F.assign(g.size(), 0.0);
  const auto& k = kernels::active();
  const double inv_hx2 = 1.0 / (g.hx * g.hx);
  const int nu = g.nu;
  parallel_chunks(g.nx, options_.threads, [&](int begin, int end, int) {
    std::vector<double> up(nu), down(nu);
    for (int i = begin; i < end; ++i) {
      const double* mid = y.data() + g.n_index(i, 0);
      const double* left = i > 0 ? y.data() + g.n_index(i - 1, 0) : mid;
      const double* right = i + 1 < g.nx ? y.data() + g.n_index(i + 1, 0) : mid;
      const double c = y[g.c_index(i)];
      if (!std::isfinite(c)) throw NumericalFailure("residual: non-finite signal value");
      double* out = F.data() + g.n_index(i, 0);
      k.x_stencil(left, mid, right, D_over_hx2_.data(), out, nu);
      face_coefficients(c, up.data(), down.data(), nullptr, nullptr);
      k.flux_divergence(mid, up.data(), down.data(), inv_du_.data(), out, nu);

      const double cl = i > 0 ? y[g.c_index(i - 1)] : c;
      const double cr = i + 1 < g.nx ? y[g.c_index(i + 1)] : c;
      F[g.c_index(i)] = params_.D_c * ((cl + cr) - 2.0 * c) * inv_hx2 - params_.beta * c +
                        params_.alpha0 * k.dot(moment_w_.data(), mid, nu);
    }
  });
  for (double v : F) {
    if (!std::isfinite(v)) throw NumericalFailure("residual: non-finite value (NaN in field?)");
  }
}

std::vector<double> PdeSystem::residual(const std::vector<double>& y) const {
  std::vector<double> F;
  residual(y, F);
  return F;
}

SparseMatrix PdeSystem::jacobian(const std::vector<double>& y, bool freeze_velocity) const {
  using Triplet = Eigen::Triplet<double>;
  const auto& g = *grid_;
  const int nu = g.nu;
  const double inv_hx2 = 1.0 / (g.hx * g.hx);
  const int workers = std::max(1, std::min(options_.threads, g.nx));
  std::vector<std::vector<Triplet>> parts(workers);

  parallel_chunks(g.nx, workers, [&](int begin, int end, int worker) {
    auto& T = parts[worker];
    T.reserve(static_cast<std::size_t>(end - begin) * (7 * nu + 4));
    std::vector<double> up(nu), down(nu), dup(nu), ddown(nu);
    for (int i = begin; i < end; ++i) {
      const double c = y[g.c_index(i)];
      face_coefficients(c, up.data(), down.data(), dup.data(), ddown.data());
      const int col_c = static_cast<int>(g.c_index(i));
      for (int j = 0; j < nu; ++j) {
        const int row = static_cast<int>(g.n_index(i, j));
        const double dx = D_over_hx2_[j];
        double diag = -2.0 * dx;
        if (i > 0) {
          T.emplace_back(row, static_cast<int>(g.n_index(i - 1, j)), dx);
        } else {
          diag += dx;
        }
        if (i + 1 < g.nx) {
          T.emplace_back(row, static_cast<int>(g.n_index(i + 1, j)), dx);
        } else {
          diag += dx;
        }
        const double w = inv_du_[j];
        double dc = 0.0;
        if (j + 1 < nu) {
          const int f = j + 1;
          T.emplace_back(row, row + 1, up[f] * w);
          diag -= down[f] * w;
          if (!freeze_velocity) dc += (dup[f] * y[g.n_index(i, f)] - ddown[f] * y[g.n_index(i, f - 1)]) * w;
        }
        if (j >= 1) {
          const int f = j;
          diag -= up[f] * w;
          T.emplace_back(row, row - 1, down[f] * w);
          if (!freeze_velocity) dc -= (dup[f] * y[g.n_index(i, f)] - ddown[f] * y[g.n_index(i, f - 1)]) * w;
        }
        T.emplace_back(row, row, diag);
        if (!freeze_velocity && dc != 0.0) T.emplace_back(row, col_c, dc);
      }
      double diag_c = -2.0 * params_.D_c * inv_hx2 - params_.beta;
      if (i > 0) {
        T.emplace_back(col_c, static_cast<int>(g.c_index(i - 1)), params_.D_c * inv_hx2);
      } else {
        diag_c += params_.D_c * inv_hx2;
      }
      if (i + 1 < g.nx) {
        T.emplace_back(col_c, static_cast<int>(g.c_index(i + 1)), params_.D_c * inv_hx2);
      } else {
        diag_c += params_.D_c * inv_hx2;
      }
      T.emplace_back(col_c, col_c, diag_c);
      for (int j = 0; j < nu; ++j) {
        T.emplace_back(col_c, static_cast<int>(g.n_index(i, j)), params_.alpha0 * moment_w_[j]);
      }
    }
  });

  std::vector<Triplet> all;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  all.reserve(total);
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  SparseMatrix J(static_cast<int>(g.size()), static_cast<int>(g.size()));
  J.setFromTriplets(all.begin(), all.end());
  J.makeCompressed();
  return J;
}

std::vector<double> PdeSystem::parameter_derivative(const std::vector<double>& y) const {
  const auto& g = *grid_;
  std::vector<double> dF(g.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    const double* mid = y.data() + g.n_index(i, 0);
    const double* left = i > 0 ? y.data() + g.n_index(i - 1, 0) : mid;
    const double* right = i + 1 < g.nx ? y.data() + g.n_index(i + 1, 0) : mid;
    kernels::active().x_stencil(left, mid, right, D_sens_over_hx2_.data(), dF.data() + g.n_index(i, 0), g.nu);
  }
  return dF;
}

double PdeSystem::mass(const std::vector<double>& y) const {
  double m = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) m += mass_w_[r] * y[r];
  return m;
}

void PdeSystem::steady_residual(const std::vector<double>& y, std::vector<double>& F) const {
  residual(y, F);
  F[pinned_row_] = mass(y) - target_mass();
}

SparseMatrix PdeSystem::steady_jacobian(const std::vector<double>& y) const {
  SparseMatrix J = jacobian(y);
  SparseMatrix R(J.rows(), J.cols());
  std::vector<Eigen::Triplet<double>> T;
  T.reserve(J.nonZeros() + y.size());
  for (int col = 0; col < J.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(J, col); it; ++it) {
      if (static_cast<std::size_t>(it.row()) != pinned_row_) T.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (std::size_t c = 0; c < y.size(); ++c) {
    if (mass_w_[c] != 0.0) T.emplace_back(static_cast<int>(pinned_row_), static_cast<int>(c), mass_w_[c]);
  }
  R.setFromTriplets(T.begin(), T.end());
  R.makeCompressed();
  return R;
}

struct LinearSolver::Impl {
  LinearSolverKind kind;
  double tol;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>> iterative;
  bool ready = false;
};

LinearSolver::LinearSolver(LinearSolverKind kind, double tol) : impl_(std::make_unique<Impl>()) {
  impl_->kind = kind;
  impl_->tol = tol;
}
LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

bool LinearSolver::ready() const { return impl_->ready; }

void LinearSolver::factorize(const SparseMatrix& A) {
  impl_->ready = false;
  if (impl_->kind == LinearSolverKind::SparseLU) {
    impl_->lu.compute(A);
    if (impl_->lu.info() != Eigen::Success) throw NumericalFailure("sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
  } else {
    impl_->iterative.setTolerance(impl_->tol);
    impl_->iterative.setMaxIterations(2000);
    impl_->iterative.preconditioner().setDroptol(1e-6);
    impl_->iterative.preconditioner().setFillfactor(20);
    impl_->iterative.compute(A);
    if (impl_->iterative.info() != Eigen::Success) throw NumericalFailure("ILUT preconditioner setup failed");
  }
  impl_->ready = true;
}

std::vector<double> LinearSolver::solve(const std::vector<double>& b) const {
  if (!impl_->ready) throw NumericalFailure("linear solve before factorization");
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x;
  if (impl_->kind == LinearSolverKind::SparseLU) {
    x = impl_->lu.solve(rhs);
  } else {
    x = impl_->iterative.solve(rhs);
    if (impl_->iterative.info() != Eigen::Success) throw NumericalFailure("BiCGSTAB did not converge");
  }
  return std::vector<double>(x.data(), x.data() + x.size());
}

double steady_residual_norm(const PdeSystem& system, const std::vector<double>& y) {
  std::vector<double> F;
  system.steady_residual(y, F);
  return inf_norm(F) / std::max(1.0, inf_norm(y));
}

SteadyResult newton_steady(const PdeSystem& system, const Field& guess) {
  const auto& opt = system.options();
  std::vector<double> y = guess.y;
  std::vector<double> F;
  system.steady_residual(y, F);
  double norm = inf_norm(F) / std::max(1.0, inf_norm(y));
  LinearSolver solver(opt.linear_solver, opt.iterative_tol);
  for (int it = 0; it < opt.newton_max_iter; ++it) {
    if (norm < opt.newton_tol) return SteadyResult{Field{guess.grid, y, guess.time}, it, norm};
    solver.factorize(system.steady_jacobian(y));
    for (auto& v : F) v = -v;
    const auto delta = solver.solve(F);
    double alpha = 1.0;
    std::vector<double> trial(y.size());
    double trial_norm = 0.0;
    for (int ls = 0; ls < 10; ++ls) {
      for (std::size_t r = 0; r < y.size(); ++r) trial[r] = y[r] + alpha * delta[r];
      try {
        system.steady_residual(trial, F);
        trial_norm = inf_norm(F) / std::max(1.0, inf_norm(trial));
      } catch (const NumericalFailure&) {
        trial_norm = std::numeric_limits<double>::infinity();
      }
      if (trial_norm < norm || ls == 9) break;
      alpha *= 0.5;
    }
    if (!std::isfinite(trial_norm)) break;
    y = trial;
    norm = trial_norm;
  }
  if (norm < opt.newton_tol) return SteadyResult{Field{guess.grid, y, guess.time}, opt.newton_max_iter, norm};
  throw NewtonFailure("steady Newton did not converge (residual " + std::to_string(norm) + ")",
                      Field{guess.grid, y, guess.time}, norm);
}

TimeStepper::TimeStepper(const PdeSystem& system, SolverOptions options)
    : system_(system), options_(options), solver_(options.linear_solver, options.iterative_tol) {
  options_.validate();
}

void TimeStepper::refactor(const std::vector<double>& y) {
  SparseMatrix J = system_.jacobian(y, options_.scheme == TimeScheme::Imex);
  SparseMatrix I(J.rows(), J.cols());
  I.setIdentity();
  solver_.factorize(I - options_.dt * J);
  have_factor_ = true;
  ++factorizations_;
}

Field TimeStepper::step(const Field& field) {
  const double dt = options_.dt;
  const auto& y0 = field.y;
  if (options_.scheme == TimeScheme::Imex) {
    refactor(y0);
    return Field{field.grid, solver_.solve(y0), field.time + dt};
  }

  std::vector<double> y = y0;
  std::vector<double> F, G(y.size());
  auto eval_G = [&](const std::vector<double>& state) {
    system_.residual(state, F);
    for (std::size_t r = 0; r < state.size(); ++r) G[r] = state[r] - y0[r] - dt * F[r];
    return inf_norm(G);
  };
  const double scale = std::max(1.0, inf_norm(y0));
  if (!have_factor_) refactor(y);

  bool fresh = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    double g_norm = eval_G(y);
    double prev_step = std::numeric_limits<double>::infinity();
    bool stalled = false;
    for (int it = 0; it < options_.newton_max_iter; ++it) {
      if (g_norm <= options_.newton_tol * scale) return Field{field.grid, y, field.time + dt};
      for (auto& v : G) v = -v;
      const auto delta = solver_.solve(G);
      const double step_norm = inf_norm(delta);
      for (std::size_t r = 0; r < y.size(); ++r) y[r] += delta[r];
      g_norm = eval_G(y);
      if (step_norm > 0.5 * prev_step || !std::isfinite(g_norm) || (!fresh && it >= 5)) {
        stalled = true;
        break;
      }
      prev_step = step_norm;
    }
    if (!stalled && g_norm <= options_.newton_tol * scale) return Field{field.grid, y, field.time + dt};
    if (fresh) break;
    if (!std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) y = y0;
    refactor(y);
    fresh = true;
  }
  // Last resort: full Newton with a fresh Jacobian every iteration.
  double g_norm = eval_G(y);
  for (int it = 0; it < options_.newton_max_iter; ++it) {
    if (g_norm <= options_.newton_tol * scale) return Field{field.grid, y, field.time + dt};
    refactor(y);
    for (auto& v : G) v = -v;
    const auto delta = solver_.solve(G);
    for (std::size_t r = 0; r < y.size(); ++r) y[r] += delta[r];
    g_norm = eval_G(y);
  }
  throw NewtonFailure("implicit step: Newton did not converge", Field{field.grid, y, field.time + dt}, g_norm);
}

Field step(const PdeSystem& system, const Field& field, const SolverOptions& options) {
  TimeStepper stepper(system, options);
  return stepper.step(field);
}

Field uniform_state(const PdeSystem& system, const SteadyState& steady) {
  const auto& g = system.grid();
  const auto& p = system.params();
  Field f{system.grid_ptr(), std::vector<double>(g.size(), 0.0), 0.0};
  double col_mass = 0.0;
  std::vector<double> profile(g.nu);
  for (int j = 0; j < g.nu; ++j) {
    const double s = g.u[j] - steady.u_star;
    profile[j] = std::exp(-p.lambda * s * s / (2.0 * p.epsilon));
    col_mass += profile[j] * g.du[j];
  }
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.nu; ++j) f.y[g.n_index(i, j)] = p.rho_star * profile[j] / col_mass;
    f.y[g.c_index(i)] = steady.c_star;
  }
  return newton_steady(system, f).field;
}

Field perturb_cosine(const Field& field, double amplitude, int mode) {
  const auto& g = *field.grid;
  Field out = field;
  for (int i = 0; i < g.nx; ++i) {
    const double factor = 1.0 + amplitude * std::cos(mode * std::numbers::pi * g.x[i] / g.L);
    for (int j = 0; j < g.nu; ++j) out.y[g.n_index(i, j)] *= factor;
  }
  return out;
}

Field reflect(const Field& field) {
  const auto& g = *field.grid;
  Field out = field;
  for (int i = 0; i < g.nx; ++i) {
    const int m = g.nx - 1 - i;
    for (int j = 0; j <= g.nu; ++j) {
      out.y[static_cast<std::size_t>(i) * (g.nu + 1) + j] = field.y[static_cast<std::size_t>(m) * (g.nu + 1) + j];
    }
  }
  return out;
}

double cosine_coefficient(const Grid2D& g, const std::vector<double>& values, int mode) {
  double s = 0.0;
  for (int i = 0; i < g.nx; ++i) s += values[i] * std::cos(mode * std::numbers::pi * g.x[i] / g.L);
  return 2.0 * s * g.hx / g.L;
}

Observables observables(const Field& field) {
  const auto& g = *field.grid;
  Observables o;
  o.rho.resize(g.nx);
  o.u_mean.resize(g.nx);
  o.c.resize(g.nx);
  for (int i = 0; i < g.nx; ++i) {
    double r = 0.0, m = 0.0;
    for (int j = 0; j < g.nu; ++j) {
      const double w = field.n(i, j) * g.du[j];
      r += w;
      m += w * g.u[j];
    }
    o.rho[i] = r;
    o.u_mean[i] = r != 0.0 ? m / r : 0.0;
    o.c[i] = field.c(i);
    o.total_mass += r * g.hx;
  }
  // Even extension about each wall: rho(0) ~ (9 rho_0 - rho_1) / 8.
  o.rho_left = (9.0 * o.rho[0] - o.rho[1]) / 8.0;
  o.rho_right = (9.0 * o.rho[g.nx - 1] - o.rho[g.nx - 2]) / 8.0;
  o.delta_rho = std::abs(o.rho_right - o.rho_left);
  o.rho_cos_amplitude = cosine_coefficient(g, o.rho, 1);
  o.c_cos_amplitude = cosine_coefficient(g, o.c, 1);
  return o;
}

}  // namespace qsp

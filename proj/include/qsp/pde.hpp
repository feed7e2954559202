#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "qsp/errors.hpp"
#include "qsp/grid.hpp"
#include "qsp/model.hpp"

namespace qsp {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class TimeScheme { ImplicitEuler, Imex };
enum class LinearSolverKind { SparseLU, BiCGSTAB };
/// Rule for the nonlocal moment integral of u n over u. Midpoint uses the
/// finite-volume cell weights, the same weights that define the mass.
enum class QuadratureRule { Midpoint, Trapezoid, Simpson };

struct SolverOptions {
  TimeScheme scheme = TimeScheme::ImplicitEuler;
  double dt = 0.1;
  double newton_tol = 1e-10;
  int newton_max_iter = 30;
  LinearSolverKind linear_solver = LinearSolverKind::SparseLU;
  double iterative_tol = 1e-13;
  QuadratureRule quadrature = QuadratureRule::Midpoint;
  int threads = 1;

  void validate() const;
};

/// Unknowns on a Grid2D: n on every cell, c on every x-cell.
struct Field {
  std::shared_ptr<const Grid2D> grid;
  std::vector<double> y;
  double time = 0.0;

  double n(int i, int j) const { return y[grid->n_index(i, j)]; }
  double c(int i) const { return y[grid->c_index(i)]; }
};

/// Semi-discrete right-hand side dY/dt = F(Y) of the model on a grid, with
/// the motility slope D'(u_ref) as a settable parameter.
class PdeSystem {
 public:
  PdeSystem(std::shared_ptr<const Grid2D> grid, const ModelParams& params, SolverOptions options = {});

  const Grid2D& grid() const { return *grid_; }
  std::shared_ptr<const Grid2D> grid_ptr() const { return grid_; }
  const ModelParams& params() const { return params_; }
  const SolverOptions& options() const { return options_; }
  std::size_t size() const { return grid_->size(); }

  void set_D_prime(double D_prime);
  double D_prime() const { return params_.motility.D_prime_star; }

  void residual(const std::vector<double>& y, std::vector<double>& F) const;
  std::vector<double> residual(const std::vector<double>& y) const;
  /// Analytic Jacobian. With freeze_velocity the c-dependence of the
  /// advection speed g(c) - lambda u is dropped (IMEX operator).
  SparseMatrix jacobian(const std::vector<double>& y, bool freeze_velocity = false) const;
  /// dF/dD' at fixed state.
  std::vector<double> parameter_derivative(const std::vector<double>& y) const;

  /// Cell areas hx du_j on n entries, zero on c entries.
  const std::vector<double>& mass_weights() const { return mass_w_; }
  double mass(const std::vector<double>& y) const;
  double target_mass() const { return params_.rho_star * grid_->L; }
  /// The n-row replaced by the mass constraint in steady solves.
  std::size_t pinned_row() const { return pinned_row_; }

  /// Steady residual: F with the pinned row replaced by mass(y) - rho* L.
  void steady_residual(const std::vector<double>& y, std::vector<double>& F) const;
  SparseMatrix steady_jacobian(const std::vector<double>& y) const;

 private:
  void face_coefficients(double c, double* up, double* down, double* dup, double* ddown) const;
  void refresh_motility();

  std::shared_ptr<const Grid2D> grid_;
  ModelParams params_;
  SolverOptions options_;
  std::vector<double> D_over_hx2_;
  std::vector<double> D_sens_over_hx2_;
  std::vector<double> inv_du_;
  std::vector<double> face_gap_;   // distance between adjacent centres, face f = 1..nu-1
  std::vector<double> face_mid_;   // midpoint of adjacent centres
  std::vector<double> moment_w_;   // quadrature weights for the integral of u n
  std::vector<double> mass_w_;
  std::size_t pinned_row_ = 0;
};

/// Bernoulli function z / (e^z - 1) and its derivative, stable for all z.
double bernoulli(double z);
double bernoulli_derivative(double z);

/// Sparse linear solve with the configured backend.
class LinearSolver {
 public:
  explicit LinearSolver(LinearSolverKind kind = LinearSolverKind::SparseLU, double tol = 1e-13);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  void factorize(const SparseMatrix& A);
  std::vector<double> solve(const std::vector<double>& b) const;
  bool ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class NewtonFailure : public NumericalFailure {
 public:
  NewtonFailure(const std::string& what, Field last, double residual)
      : NumericalFailure(what), last_iterate(std::move(last)), last_residual(residual) {}
  Field last_iterate;
  double last_residual;
};

struct SteadyResult {
  Field field;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Newton on the steady problem with the mass constraint row.
SteadyResult newton_steady(const PdeSystem& system, const Field& guess);

/// Infinity norm of the steady residual, scaled by max(1, |y|_inf).
double steady_residual_norm(const PdeSystem& system, const std::vector<double>& y);

/// Implicit Euler (Newton with a reused factorization) or linearly implicit
/// IMEX stepping; keeps state between steps.
class TimeStepper {
 public:
  TimeStepper(const PdeSystem& system, SolverOptions options);
  Field step(const Field& field);
  int factorizations() const { return factorizations_; }

 private:
  void refactor(const std::vector<double>& y);

  const PdeSystem& system_;
  SolverOptions options_;
  LinearSolver solver_;
  bool have_factor_ = false;
  int factorizations_ = 0;
};

Field step(const PdeSystem& system, const Field& field, const SolverOptions& options);

/// Discrete spatially uniform steady state: Gaussian guess polished by Newton.
Field uniform_state(const PdeSystem& system, const SteadyState& steady);

/// n(x,u) <- n (1 + amplitude cos(m pi x / L)); mass is unchanged.
Field perturb_cosine(const Field& field, double amplitude, int mode = 1);
/// Mirror image under x -> L - x.
Field reflect(const Field& field);

struct Observables {
  std::vector<double> rho;     // per x-cell
  std::vector<double> u_mean;  // per x-cell
  std::vector<double> c;       // per x-cell
  double rho_left = 0.0;       // extrapolated to x = 0
  double rho_right = 0.0;      // extrapolated to x = L
  double delta_rho = 0.0;      // |rho(L) - rho(0)|
  double total_mass = 0.0;
  double rho_cos_amplitude = 0.0;  // (2/L) integral of rho cos(pi x / L)
  double c_cos_amplitude = 0.0;
};

Observables observables(const Field& field);

/// Cosine coefficient (2/L) sum_i v_i cos(m pi x_i / L) hx of cell data.
double cosine_coefficient(const Grid2D& grid, const std::vector<double>& values, int mode = 1);

}  // namespace qsp

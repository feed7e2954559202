#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qsp/pde.hpp"

namespace qsp {

struct EigenEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> vector;  // unit Euclidean norm, zero mass
};

/// Eigenvalue of the steady Jacobian nearest to `shift`, by shift-invert
/// power iteration restricted to zero-mass perturbations (which removes the
/// conservation zero mode).
EigenEstimate leading_eigenvalue(const PdeSystem& system, const std::vector<double>& y, double shift = 0.05,
                                 int max_iter = 300, double tol = 1e-11);

/// Fallback stability probe: `steps` implicit steps from y + probe_size * direction;
/// returns the per-unit-time log growth of the deviation (positive = unstable).
double stability_probe(const PdeSystem& system, const std::vector<double>& y, const std::vector<double>& direction,
                       int steps = 50, double dt = 0.5, double probe_size = 1e-6);

struct BranchPoint {
  double D_prime = 0.0;
  double delta_rho = 0.0;
  double rho_amplitude = 0.0;  // cos(pi x / L) coefficient of rho
  double eigenvalue = 0.0;
  bool stable = true;
  bool eigen_converged = true;
  double s = 0.0;
  double residual = 0.0;
  std::shared_ptr<const Field> solution;
};

enum class BranchLabel { Uniform, Plus, Minus };
std::string to_string(BranchLabel label);

struct Branch {
  BranchLabel label = BranchLabel::Uniform;
  std::vector<BranchPoint> points;
  std::vector<std::size_t> folds;  // indices where dD'/ds changes sign
  std::string status = "ok";
};

struct StepPolicy {
  double initial = 1e-2;
  double min = 1e-5;
  double max = 1e-1;
  int target_newton_iters = 4;
  int max_points = 200;
  /// Parameter scale for the arclength metric (|D'_0| is a good choice).
  double param_scale = 1.0;
  bool record_stability = true;
};

/// Keller pseudo-arclength continuation in D'. The start state must be a
/// converged steady state at D' = start_D_prime. direction = +1 or -1 picks
/// the initial sense of D'.
Branch continue_branch(PdeSystem& system, const Field& start, double start_D_prime, double D_lo, double D_hi,
                       const StepPolicy& policy, int direction, BranchLabel label);

struct BifurcationPoint {
  double D_prime = 0.0;
  std::vector<double> eigenvector;  // critical mode, "+" orientation
  std::shared_ptr<const Field> uniform;
  std::vector<std::pair<double, double>> samples;  // (D', leading eigenvalue)
};

/// Sign change of the leading eigenvalue on the uniform branch in [lo, hi],
/// refined by safeguarded secant iteration. Throws NotBracketed.
BifurcationPoint detect_bifurcation(PdeSystem& system, const Field& uniform, double lo, double hi, int samples = 7,
                                    double tol = 1e-11);
/// Same, bracketing from the eigenvalues already recorded on a branch.
BifurcationPoint detect_bifurcation(PdeSystem& system, const Branch& uniform_branch);

/// Weights w with rho_amplitude = sum_r w_r y_r.
std::vector<double> rho_amplitude_weights(const Grid2D& grid, int mode = 1);

struct PinnedSolution {
  Field field;
  double D_prime = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

/// Steady solve with D' free and the cos-mode amplitude of rho pinned.
PinnedSolution solve_amplitude_pinned(PdeSystem& system, const Field& guess, double D_prime_guess,
                                      double target_amplitude);

/// Nontrivial state of prescribed rho cos-amplitude next to the bifurcation.
/// direction +1 gives rho(0) > rho(L). Retries with larger amplitude (up to
/// max_amplitude) if Newton collapses back to the uniform state.
PinnedSolution switch_branch(PdeSystem& system, const BifurcationPoint& bif, int direction, double amplitude,
                             double max_amplitude);

struct PitchforkFit {
  double D_prime_bif_hat = 0.0;
  double b_hat = 0.0;
  double window_lo = 0.0;  // in |D' - D_hat|
  double window_hi = 0.0;
  double fit_residual = 0.0;  // relative RMS misfit of the square-root law
  int n_points = 0;
  /// Centered R^2 of drho/rho* against sqrt|D' - D_hat|.
  double r_squared = 0.0;
  /// Free-exponent refit log(drho/rho*) = log(B) + p log|D' - D_hat|.
  double free_exponent = 0.0;
  double free_prefactor = 0.0;
};

/// Weighted least squares of drho/rho* = b sqrt(|D' - D_hat|) over
/// window_lo <= |D' - D_hat| <= window_hi. Throws if fewer than 6 points.
PitchforkFit fit_b(const std::vector<std::pair<double, double>>& D_and_delta_rho, double D_hat, double rho_star,
                   double window_lo, double window_hi);
PitchforkFit fit_b(const Branch& branch, double D_hat, double rho_star, double window_lo, double window_hi);

struct FitSamplingPolicy {
  int points = 10;
  /// Window in units of |D'_0|.
  double lo = 1e-4;
  double hi = 1e-2;
};

/// Amplitude-pinned nontrivial states whose distances |D' - D_hat| cover the
/// fit window roughly log-uniformly. b_guess seeds the amplitude targets.
Branch sample_branch_for_fit(PdeSystem& system, const BifurcationPoint& bif, int direction, double b_guess,
                             double D_scale, const FitSamplingPolicy& policy);

}  // namespace qsp

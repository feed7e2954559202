#pragma once

#include <optional>
#include <vector>

namespace qsp {

/// Michaelis-Menten production g(c) = a + V c / (K + c).
struct ProductionSpec {
  double a = 0.5;
  double V = 4.0;
  double K = 1.0;

  double operator()(double c) const;
  void validate() const;
};

/// Returns d^order g / dc^order at c (order 0..3).
double derivatives_of_g(const ProductionSpec& spec, double c, int order);

/// tanh motility D(u) = D* - (D* - D_inf) tanh(w(u)),
/// w(u) = -D'* (u - u_ref) / (D* - D_inf).
///
/// D(u_ref) = D* and D'(u_ref) = D'* hold exactly; D''(u_ref) = 0.
struct MotilitySpec {
  double D_star = 1.0;
  double D_inf = 0.1;
  double D_prime_star = -1.5;
  /// Center of the tanh profile. Unset means "use the steady-state u*".
  std::optional<double> u_star_ref;

  double operator()(double u) const;
  /// First derivative dD/du.
  double slope(double u) const;
  /// dD/d(D'*) at fixed u; drives the continuation parameter column.
  double parameter_sensitivity(double u) const;
  /// Same spec with a different bifurcation parameter value.
  MotilitySpec with_slope(double D_prime) const;

  double center() const;
  void validate(double u_max) const;
};

/// Derivatives D^{(m)}(u0), m = 0..m_max, computed from the exact tanh Taylor
/// recursion T' = 1 - T^2.
std::vector<double> motility_taylor(const MotilitySpec& spec, double u0, int m_max);

/// Normalised Taylor coefficients D^{(m)}(u0) / m!.
std::vector<double> motility_taylor_normalized(const MotilitySpec& spec, double u0, int m_max);

struct ModelParams {
  double D_c = 1.0;
  double beta = 1.0;
  double alpha0 = 1.0;
  double lambda = 1.0;
  double epsilon = 0.005;
  double L = 6.0;
  double rho_star = 0.65;
  MotilitySpec motility;
  ProductionSpec production;
  /// Sanity bound epsilon < epsilon_bound_factor * lambda * L.
  double epsilon_bound_factor = 1.0;

  double g(double c) const { return production(c); }
  double f(double u, double c) const { return production(c) - lambda * u; }

  /// Throws ConfigError on non-positive fields or a violated sanity bound.
  void validate() const;

  /// g'(c*) < lambda beta / (alpha0 rho*): the uniform mode is stable.
  bool uniform_mode_stable(double c_star) const;
};

struct SteadyState {
  double c_star = 0.0;
  double u_star = 0.0;
  double N = 0.0;
  int branch_index = 0;
};

/// All positive roots of g(c) = lambda beta c / (alpha0 rho*) on [0, c_max],
/// ascending. Throws NoSteadyState if none exist.
std::vector<SteadyState> solve_steady_state(const ModelParams& params,
                                            std::optional<double> c_max = std::nullopt);

/// Residual g(c) - lambda beta c / (alpha0 rho*).
double steady_residual(const ModelParams& params, double c);

/// Picks steady state `index` and centres the motility profile on its u*
/// when no explicit centre was configured.
struct BaseState {
  ModelParams params;
  SteadyState steady;
};
BaseState make_base_state(const ModelParams& params, int branch_index = 0);

}  // namespace qsp

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qsp/series.hpp"

namespace qsp {

enum class Criticality { Supercritical, Subcritical, Degenerate };
std::string to_string(Criticality c);

/// Series tables and constants at the bifurcation point D'(u*) = D'_0.
struct WnaContext {
  BaseState base;
  Wavenumber k = Wavenumber::continuous(0.0);
  double D_prime_critical = 0.0;
  SeriesContext series;
  double D_c = 0.0;
  double beta = 0.0;
  double g3 = 0.0;  // g'''(c*)
  SeriesTable q;
  SeriesTable w;
  SeriesTable wtilde;

  /// Builds the context for mode k (default: first no-flux mode pi / L).
  static WnaContext make(const BaseState& base, std::optional<Wavenumber> k = std::nullopt);

  double D0() const { return series.d(0); }
  double k2() const { return series.k * series.k; }
};

struct LaplaceIntegrals {
  double I0 = 0.0;
  double I1_per_dprime = 0.0;
  double I2 = 0.0;
  double I3 = 0.0;
  double I4 = 0.0;
  double I5 = 0.0;
};

struct WnaReport {
  double k = 0.0;
  double D_prime_critical = 0.0;
  double c20 = 0.0;
  double c22 = 0.0;
  LaplaceIntegrals I;
  double mu = 0.0;
  /// sigma_1 per unit d'*: dA/dtau = linear_rate_per_dprime d'* A + cubic_rate A^3.
  double linear_rate_per_dprime = 0.0;
  double cubic_rate = 0.0;
  /// NaN when mu == 0.
  double b = 0.0;
  /// Leading-order integral of eta over u: rho-amplitude per unit c-amplitude.
  double rho_per_c_amplitude = 0.0;
  Criticality criticality = Criticality::Degenerate;
  /// Inputs needed downstream without re-deriving the base state.
  double rho_star = 0.0;
  double u_star = 0.0;
  double D0 = 0.0;
  double g1 = 0.0;
  double lambda = 0.0;
  double alpha0 = 0.0;
};

/// d'* = D'* - D'_0, the local unfolding parameter of the motility family.
double unfolding_parameter(double D_prime_star, double D_prime_critical);

double compute_c20(const WnaContext& ctx);
double compute_c22(const WnaContext& ctx);
/// s table for the given c22, deep enough for I5.
SeriesTable s_table_for(const WnaContext& ctx, double c22);
LaplaceIntegrals compute_integrals(const WnaContext& ctx, const SeriesTable& s, double c20);
double compute_mu(const WnaContext& ctx, const LaplaceIntegrals& I, double c20, double c22);

WnaReport wna_report(const WnaContext& ctx);
WnaReport wna_report(const BaseState& base);

struct AmplitudeOde {
  double linear = 0.0;  // sigma_1
  double cubic = 0.0;   // -mu / (I0 + 1)
  double rhs(double A) const { return linear * A + cubic * A * A * A; }
};

/// Coefficients of dA/dtau = sigma_1 A - mu/(I0+1) A^3 for a given d'*.
AmplitudeOde amplitude_ode(const WnaReport& report, double d_prime_star);

/// Same dynamics in physical time for the cos(kx) amplitude of c - c*
/// with D'* = D'_0 + d: da/dt = sigma_1(d) a - mu/(I0+1) a^3.
AmplitudeOde physical_amplitude_ode(const WnaReport& report, double D_prime_star);

struct BranchPrediction {
  double rho_star = 0.0;
  double k = 0.0;
  /// Non-negative coefficient of cos(kx); the "+" state is rho* + amplitude cos(kx).
  double amplitude = 0.0;
  /// Sign of D'* - D'_0 on which the branch is real.
  int valid_side = 0;

  double rho(double x, int sign) const;
  double delta_rho() const { return 2.0 * amplitude; }
};

/// Throws NoLocalBranch when mu and D'* - D'_0 have the same sign,
/// PreconditionError when mu == 0.
BranchPrediction branch_prediction(const WnaReport& report, double D_prime_star);
double coefficient_b(const WnaReport& report);

/// mu as a function of rho*, other parameters fixed.
double mu_at_rho(const ModelParams& params, double rho_star, int branch_index = 0);

struct MuCrossing {
  double rho_star = 0.0;
  std::vector<std::pair<double, double>> samples;  // (rho*, mu)
};
/// Dense sweep over [lo, hi] plus bisection of the single sign change.
/// Throws NumericalFailure unless exactly one sign change is found.
MuCrossing find_mu_crossing(const ModelParams& params, double lo, double hi, int samples = 64);

}  // namespace qsp

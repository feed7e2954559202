#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

#include "qsp/model.hpp"

namespace qsp {

/// Spatial wavenumber. No-flux modes are k = m pi / L; any other value has
/// to be requested explicitly through `continuous`.
class Wavenumber {
 public:
  static Wavenumber mode(int m, double L);
  static Wavenumber continuous(double k);

  double value() const { return k_; }
  std::optional<int> mode_index() const { return mode_; }

 private:
  Wavenumber(double k, std::optional<int> m) : k_(k), mode_(m) {}
  double k_;
  std::optional<int> mode_;
};

/// Base-state quantities entering the linear problem.
struct LinearInputs {
  double D0 = 0.0;       // D(u*)
  double D_prime = 0.0;  // D'(u*)
  double u_star = 0.0;
  double g1 = 0.0;       // g'(c*)
  double rho = 0.0;      // rho* (or rho_c for the logistic variant)
  double D_c = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  double alpha0 = 0.0;
  double r_star = 0.0;   // logistic growth rate r(u*); zero for the base model

  static LinearInputs from(const BaseState& base);
};

struct DispersionCubic {
  /// c3 sigma^3 + c2 sigma^2 + c1 sigma + c0, c3 == 1.
  std::array<double, 4> coeffs{1.0, 0.0, 0.0, 0.0};
  double k = 0.0;
  LinearInputs inputs;

  std::complex<double> operator()(std::complex<double> sigma) const;
  std::complex<double> derivative(std::complex<double> sigma) const;
  /// Left-hand side of the unexpanded rational eigenvalue relation.
  std::complex<double> rational_residual(std::complex<double> sigma) const;
};

struct GrowthEntry {
  double k = 0.0;
  /// Sorted by real part, descending.
  std::array<std::complex<double>, 3> roots;
  double max_real() const { return roots[0].real(); }
};

struct GrowthSpectrum {
  std::vector<GrowthEntry> entries;
  double max_real_part = 0.0;
  double critical_k = 0.0;
};

DispersionCubic build_cubic(const LinearInputs& in, const Wavenumber& k);
DispersionCubic build_cubic(const BaseState& base, const Wavenumber& k);

/// Roots of a monic cubic: trigonometric/Cardano closed form, then Newton polish.
std::array<std::complex<double>, 3> cubic_roots(const DispersionCubic& cubic);

GrowthEntry growth_rates(const BaseState& base, const Wavenumber& k);
GrowthSpectrum growth_spectrum(const BaseState& base, const std::vector<Wavenumber>& ks);

/// D'_0 at which sigma = 0 solves the cubic for this k. Throws
/// PreconditionError when g'(c*) >= lambda beta / (alpha0 rho*).
double critical_Dprime(const LinearInputs& in, const Wavenumber& k);
double critical_Dprime(const BaseState& base, const Wavenumber& k);

/// Cubic for the variant with logistic growth r(u)(1 - rho/rho_c) n.
DispersionCubic logistic_dispersion(const BaseState& base, const Wavenumber& k, double r_star,
                                    double rho_c);

}  // namespace qsp

#include "qsp/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qsp/errors.hpp"

namespace qsp {

using cplx = std::complex<double>;

Wavenumber Wavenumber::mode(int m, double L) {
  if (m < 0) throw DomainError("Wavenumber::mode: m must be >= 0");
  if (!(L > 0.0)) throw DomainError("Wavenumber::mode: L must be > 0");
  return Wavenumber(m * std::numbers::pi / L, m);
}

Wavenumber Wavenumber::continuous(double k) {
  if (!(k >= 0.0)) throw DomainError("Wavenumber::continuous: k must be >= 0");
  return Wavenumber(k, std::nullopt);
}

LinearInputs LinearInputs::from(const BaseState& base) {
  const auto& p = base.params;
  const double u = base.steady.u_star;
  LinearInputs in;
  in.D0 = p.motility(u);
  in.D_prime = p.motility.slope(u);
  in.u_star = u;
  in.g1 = derivatives_of_g(p.production, base.steady.c_star, 1);
  in.rho = p.rho_star;
  in.D_c = p.D_c;
  in.beta = p.beta;
  in.lambda = p.lambda;
  in.alpha0 = p.alpha0;
  return in;
}

cplx DispersionCubic::operator()(cplx s) const {
  return ((coeffs[0] * s + coeffs[1]) * s + coeffs[2]) * s + coeffs[3];
}

cplx DispersionCubic::derivative(cplx s) const {
  return (3.0 * coeffs[0] * s + 2.0 * coeffs[1]) * s + coeffs[2];
}

cplx DispersionCubic::rational_residual(cplx s) const {
  const auto& in = inputs;
  const double k2 = k * k;
  const double A = in.D_c * k2 + in.beta;
  const double B = in.D0 * k2 + in.r_star;
  const double C = in.D0 * k2 + in.lambda;
  const double E = (in.D0 - in.u_star * in.D_prime) * k2 + in.r_star;
  return s + A - in.alpha0 * in.g1 * in.rho * (s + E) / ((s + B) * (s + C));
}

DispersionCubic build_cubic(const LinearInputs& in, const Wavenumber& kw) {
  const double k = kw.value();
  const double k2 = k * k;
  const double A = in.D_c * k2 + in.beta;
  const double B = in.D0 * k2 + in.r_star;
  const double C = in.D0 * k2 + in.lambda;
  const double E = (in.D0 - in.u_star * in.D_prime) * k2 + in.r_star;
  const double G = in.alpha0 * in.g1 * in.rho;
  DispersionCubic cubic;
  cubic.k = k;
  cubic.inputs = in;
  cubic.coeffs = {1.0, A + B + C, A * B + A * C + B * C - G, A * B * C - G * E};
  return cubic;
}

DispersionCubic build_cubic(const BaseState& base, const Wavenumber& k) {
  return build_cubic(LinearInputs::from(base), k);
}

std::array<cplx, 3> cubic_roots(const DispersionCubic& cubic) {
  const double a = cubic.coeffs[1] / cubic.coeffs[0];
  const double b = cubic.coeffs[2] / cubic.coeffs[0];
  const double c = cubic.coeffs[3] / cubic.coeffs[0];
  // sigma = t - a/3 gives t^3 + p t + q = 0.
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double shift = -a / 3.0;
  std::array<cplx, 3> roots;

  const double disc = q * q / 4.0 + p * p * p / 27.0;
  if (p == 0.0 && q == 0.0) {
    roots = {cplx(shift), cplx(shift), cplx(shift)};
  } else if (disc <= 0.0) {
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int i = 0; i < 3; ++i) {
      roots[i] = cplx(m * std::cos(theta - 2.0 * std::numbers::pi * i / 3.0) + shift);
    }
  } else {
    const double sq = std::sqrt(disc);
    const double u = std::cbrt(-q / 2.0 + sq);
    const double v = std::cbrt(-q / 2.0 - sq);
    const double re = -(u + v) / 2.0;
    const double im = std::sqrt(3.0) / 2.0 * (u - v);
    roots = {cplx(u + v + shift), cplx(re + shift, im), cplx(re + shift, -im)};
  }

  for (auto& r : roots) {
    for (int it = 0; it < 4; ++it) {
      const cplx d = cubic.derivative(r);
      if (std::abs(d) == 0.0) break;
      const cplx next = r - cubic(r) / d;
      if (!(std::abs(cubic(next)) < std::abs(cubic(r)))) break;
      r = next;
    }
  }
  std::sort(roots.begin(), roots.end(), [](const cplx& x, const cplx& y) {
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });
  return roots;
}

GrowthEntry growth_rates(const BaseState& base, const Wavenumber& k) {
  GrowthEntry e;
  e.k = k.value();
  e.roots = cubic_roots(build_cubic(base, k));
  return e;
}

GrowthSpectrum growth_spectrum(const BaseState& base, const std::vector<Wavenumber>& ks) {
  GrowthSpectrum spec;
  spec.max_real_part = -std::numeric_limits<double>::infinity();
  for (const auto& k : ks) {
    spec.entries.push_back(growth_rates(base, k));
    if (spec.entries.back().max_real() > spec.max_real_part) {
      spec.max_real_part = spec.entries.back().max_real();
      spec.critical_k = k.value();
    }
  }
  return spec;
}

double critical_Dprime(const LinearInputs& in, const Wavenumber& kw) {
  const double G = in.alpha0 * in.rho * in.g1;
  if (!(G < in.lambda * in.beta)) {
    throw PreconditionError("critical_Dprime: uniform mode already unstable (g' >= lambda beta / (alpha0 rho*))");
  }
  if (G == 0.0) throw PreconditionError("critical_Dprime: g'(c*) = 0 gives no finite bifurcation");
  const double k2 = kw.value() * kw.value();
  const double A = in.D_c * k2 + in.beta;
  const double C = in.D0 * k2 + in.lambda;
  return -(in.D0 / in.u_star) * (A * C / G - 1.0);
}

double critical_Dprime(const BaseState& base, const Wavenumber& k) {
  return critical_Dprime(LinearInputs::from(base), k);
}

DispersionCubic logistic_dispersion(const BaseState& base, const Wavenumber& k, double r_star,
                                    double rho_c) {
  if (!(r_star >= 0.0)) throw DomainError("logistic_dispersion: r_star must be >= 0");
  if (!(rho_c > 0.0)) throw DomainError("logistic_dispersion: rho_c must be > 0");
  auto in = LinearInputs::from(base);
  in.r_star = r_star;
  in.rho = rho_c;
  return build_cubic(in, k);
}

}  // namespace qsp

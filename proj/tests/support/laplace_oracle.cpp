#include "laplace_oracle.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace qsp::testing {

namespace {

// sum_j eps^j sum_l a_jl s^l and its first derivative; `integrate` gives
// the antiderivative vanishing at s = 0 instead.
struct SeriesSum {
  const SeriesTable* t;
  int j_max;
  int l_max;
  double eps;

  double value(double s) const { return eval(s, 0); }
  double slope(double s) const { return eval(s, 1); }
  double antiderivative(double s) const { return eval(s, -1); }

  double eval(double s, int mode) const {
    double total = 0.0, ej = 1.0;
    for (int j = 0; j <= j_max; ++j, ej *= eps) {
      double row = 0.0;
      if (mode == 0) {
        for (int l = l_max; l >= 0; --l) row = row * s + t->at(j, l);
      } else if (mode == 1) {
        for (int l = l_max; l >= 1; --l) row = row * s + l * t->at(j, l);
      } else {
        for (int l = l_max; l >= 0; --l) row = row * s + t->at(j, l) / (l + 1.0);
        row *= s;
      }
      total += ej * row;
    }
    return total;
  }
};


double integrate(const std::function<double(double)>& f, double half_width) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(f, -half_width, half_width, 15, 1e-14);
}

}  // namespace

LaplaceQuadrature laplace_quadrature(const WnaContext& ctx, double eps, int j_max, int l_max) {
  const auto& sc = ctx.series;
  const double lam = sc.lambda;
  const double us = sc.u_star;
  const double g1 = sc.g1;
  const double g2 = sc.g2;
  const double rho = sc.rho_star;
  const double a0 = sc.alpha0;
  const double pi = std::numbers::pi;
  const double hw = 12.0 * std::sqrt(eps / lam);

  const auto q = q_table(sc, j_max, l_max);
  const auto w = w_table(sc, j_max, l_max, 1);
  const auto wt = w_table(sc, j_max, l_max, 2);
  const SeriesSum Q{&q, j_max, l_max, eps}, W{&w, j_max, l_max, eps}, Wt{&wt, j_max, l_max, eps};

  auto gauss = [&](double s) { return std::exp(-lam * s * s / (2.0 * eps)); };
  const double N = rho * std::sqrt(lam / (2.0 * pi * eps));
  auto nstar = [&](double s) { return N * gauss(s); };
  auto dnstar = [&](double s) { return -lam * s / eps * nstar(s); };
  const double e32 = std::pow(eps, -1.5), e52 = std::pow(eps, -2.5);
  auto eta = [&](double s) { return e32 * Q.value(s) * gauss(s); };
  auto deta = [&](double s) { return e32 * (Q.slope(s) - lam * s / eps * Q.value(s)) * gauss(s); };

  LaplaceQuadrature out;
  out.epsilon = eps;
  out.I0 = integrate([&](double s) { return eta(s) * W.value(s); }, hw);
  out.I1_per_dprime = integrate([&](double s) { return s * eta(s) * W.value(s); }, hw);
  out.I2 = integrate([&](double s) { return dnstar(s) * W.value(s); }, hw);
  out.I3 = integrate([&](double s) { return deta(s) * W.value(s); }, hw);

  // eta_20 = r e, r = A s + (g1/2) eps^{-5/2} Qint(s) + rbar sqrt(lam / (2 pi eps)),
  // A = (c20 g1 + g2/4) rho sqrt(lam / (2 pi eps^3)); zero mass fixes rbar.
  const double amp = rho * std::sqrt(lam / (2.0 * pi * eps * eps * eps));
  const double rbar = -0.5 * g1 * e52 * integrate([&](double s) { return Q.antiderivative(s) * gauss(s); }, hw);
  const double cbar = rbar * std::sqrt(lam / (2.0 * pi * eps));
  auto r_rest = [&](double s) { return 0.5 * g1 * e52 * Q.antiderivative(s) + cbar; };
  const double M1 = integrate([&](double s) { return (us + s) * s * gauss(s); }, hw);
  const double Y = integrate([&](double s) { return (us + s) * r_rest(s) * gauss(s); }, hw);
  // beta c20 = alpha0 ((c20 g1 + g2/4) amp M1 + Y)
  out.c20 = a0 * (0.25 * g2 * amp * M1 + Y) / (ctx.beta - a0 * g1 * amp * M1);
  const double A = (out.c20 * g1 + 0.25 * g2) * amp;
  out.I4 = integrate(
      [&](double s) {
        const double r = A * s + r_rest(s);
        const double dr = A + 0.5 * g1 * e52 * Q.value(s);
        return (dr - lam * s / eps * r) * gauss(s) * W.value(s);
      },
      hw);

  // (4 D_c k^2 + beta) c22 = int [(c22 g1 + g2/4) n* + (g1/2) eta] dWt/du, from the
  // eta_22 equation integrated against Wt by parts.
  const double k2 = ctx.k2();
  const double nW = integrate([&](double s) { return nstar(s) * Wt.slope(s); }, hw);
  const double rhs = integrate([&](double s) { return (0.25 * g2 * nstar(s) + 0.5 * g1 * eta(s)) * Wt.slope(s); }, hw);
  out.c22 = rhs / (4.0 * ctx.D_c * k2 + ctx.beta - g1 * nW);

  const auto qs = q_table(sc, j_max, l_max);
  const auto st = s_table(sc, qs, out.c22, j_max, l_max);
  const SeriesSum S{&st, j_max, l_max, eps};
  out.I5 = integrate(
      [&](double s) { return e52 * (S.slope(s) - lam * s / eps * S.value(s)) * gauss(s) * W.value(s); }, hw);
  return out;
}

}  // namespace qsp::testing

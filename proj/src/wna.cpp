#include "qsp/wna.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "qsp/errors.hpp"

namespace qsp {

namespace {

constexpr int kQDepth = 3;
constexpr int kQWidth = 8;
constexpr int kWDepth = 1;
constexpr int kWWidth = 6;
constexpr int kSDepth = 2;
constexpr int kSWidth = 6;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Supercritical:
      return "supercritical";
    case Criticality::Subcritical:
      return "subcritical";
    case Criticality::Degenerate:
      return "degenerate";
  }
  return "?";
}

double unfolding_parameter(double D_prime_star, double D_prime_critical) {
  return D_prime_star - D_prime_critical;
}

WnaContext WnaContext::make(const BaseState& base, std::optional<Wavenumber> k_opt) {
  const Wavenumber k = k_opt.value_or(Wavenumber::mode(1, base.params.L));
  const double d0 = critical_Dprime(base, k);
  auto series = SeriesContext::make(base, k, d0);
  auto q = q_table(series, kQDepth, kQWidth);
  auto w = w_table(series, kWDepth, kWWidth, 1);
  auto wt = w_table(series, kWDepth, kWWidth, 2);
  return WnaContext{base,
                    k,
                    d0,
                    series,
                    base.params.D_c,
                    base.params.beta,
                    derivatives_of_g(base.params.production, base.steady.c_star, 3),
                    std::move(q),
                    std::move(w),
                    std::move(wt)};
}

double compute_c20(const WnaContext& ctx) {
  const auto& s = ctx.series;
  const double denom = 4.0 * (s.lambda * ctx.beta - s.alpha0 * s.rho_star * s.g1);
  if (!(denom > 0.0)) throw PreconditionError("compute_c20: lambda beta <= alpha0 rho* g'");
  const double lam3 = s.lambda * s.lambda * s.lambda;
  const double bracket = s.lambda * ctx.q.at(1, 0) + ctx.q.at(0, 2);
  return s.alpha0 * (s.rho_star * s.g2 + std::sqrt(4.0 * kTwoPi / lam3) * s.g1 * bracket) / denom;
}

double compute_c22(const WnaContext& ctx) {
  const auto& s = ctx.series;
  const double wt1 = ctx.wtilde.at(0, 1);
  const double wt2 = ctx.wtilde.at(0, 2);
  const double denom = 4.0 * (4.0 * ctx.D_c * ctx.k2() + ctx.beta - s.rho_star * s.g1 * wt1);
  if (denom == 0.0) throw NumericalFailure("compute_c22: degenerate 2k resonance");
  const double lam3 = s.lambda * s.lambda * s.lambda;
  const double bracket = (s.lambda * ctx.q.at(1, 0) + ctx.q.at(0, 2)) * wt1 + 2.0 * ctx.q.at(0, 1) * wt2;
  return (s.rho_star * s.g2 * wt1 + 2.0 * s.g1 * std::sqrt(kTwoPi / lam3) * bracket) / denom;
}

SeriesTable s_table_for(const WnaContext& ctx, double c22) {
  return s_table(ctx.series, ctx.q, c22, kSDepth, kSWidth);
}

LaplaceIntegrals compute_integrals(const WnaContext& ctx, const SeriesTable& st, double c20) {
  const auto& s = ctx.series;
  const double D0 = ctx.D0();
  const double Dp = s.d(1);
  const double Dk2 = D0 * ctx.k2();
  const double lam = s.lambda;
  const double G = s.alpha0 * s.rho_star * s.g1;
  const auto& q = ctx.q;
  const auto& w = ctx.w;

  LaplaceIntegrals I;
  I.I0 = G * (Dk2 - (2.0 * Dk2 + lam) * s.u_star * Dp / D0) / ((Dk2 + lam) * (Dk2 + lam) * Dk2);
  I.I1_per_dprime = G * s.u_star / (Dk2 * (Dk2 + lam));
  I.I2 = s.alpha0 * s.rho_star * (s.u_star * Dp / D0 - 1.0) / (Dk2 + lam);
  I.I3 = -std::sqrt(kTwoPi / lam) *
         ((q.at(1, 0) + q.at(0, 2) / lam) * w.at(0, 1) + 2.0 / lam * q.at(0, 1) * w.at(0, 2));
  I.I4 = -std::sqrt(kTwoPi / std::pow(lam, 5)) * s.g1 *
             ((q.at(0, 2) + lam * q.at(1, 0)) * w.at(0, 2) + 1.5 * q.at(0, 1) * w.at(0, 3)) -
         s.rho_star / lam * (2.0 * c20 * s.g1 + 0.5 * s.g2) * w.at(0, 2);
  I.I5 = -std::sqrt(kTwoPi / lam) *
         ((st.at(2, 0) + st.at(1, 2) / lam + 3.0 * st.at(0, 4) / (lam * lam)) * w.at(0, 1) +
          2.0 / lam * (st.at(1, 1) + 3.0 * st.at(0, 3) / lam) * w.at(0, 2) +
          3.0 / lam * (st.at(1, 0) + 3.0 * st.at(0, 2) / lam) * w.at(0, 3));
  return I;
}

double compute_mu(const WnaContext& ctx, const LaplaceIntegrals& I, double c20, double c22) {
  const auto& s = ctx.series;
  return (c20 + 0.5 * c22) * (s.g2 * I.I2 + s.g1 * I.I3) + (ctx.g3 * I.I2 + 3.0 * s.g2 * I.I3) / 8.0 +
         s.g1 * (I.I4 + 0.5 * I.I5);
}

WnaReport wna_report(const WnaContext& ctx) {
  const auto& s = ctx.series;
  WnaReport r;
  r.k = s.k;
  r.D_prime_critical = ctx.D_prime_critical;
  r.c20 = compute_c20(ctx);
  r.c22 = compute_c22(ctx);
  const auto st = s_table_for(ctx, r.c22);
  r.I = compute_integrals(ctx, st, r.c20);
  r.mu = compute_mu(ctx, r.I, r.c20, r.c22);
  if (r.I.I0 + 1.0 == 0.0) throw NumericalFailure("amplitude equation: I0 + 1 = 0");
  r.linear_rate_per_dprime = -r.I.I1_per_dprime * ctx.k2() / (r.I.I0 + 1.0);
  r.cubic_rate = -r.mu / (r.I.I0 + 1.0);
  r.rho_star = s.rho_star;
  r.u_star = s.u_star;
  r.D0 = ctx.D0();
  r.g1 = s.g1;
  r.lambda = s.lambda;
  r.alpha0 = s.alpha0;
  const double Dk2 = r.D0 * ctx.k2();
  r.rho_per_c_amplitude = -r.D_prime_critical * s.rho_star * s.g1 / (r.D0 * (Dk2 + s.lambda));
  if (r.mu > 0.0) {
    r.criticality = Criticality::Supercritical;
  } else if (r.mu < 0.0) {
    r.criticality = Criticality::Subcritical;
  } else {
    r.criticality = Criticality::Degenerate;
  }
  r.b = r.criticality == Criticality::Degenerate ? std::numeric_limits<double>::quiet_NaN()
                                                 : coefficient_b(r);
  return r;
}

WnaReport wna_report(const BaseState& base) { return wna_report(WnaContext::make(base)); }

AmplitudeOde amplitude_ode(const WnaReport& r, double d_prime_star) {
  if (!std::isfinite(r.linear_rate_per_dprime)) throw NumericalFailure("amplitude_ode: degenerate denominator");
  return AmplitudeOde{r.linear_rate_per_dprime * d_prime_star, r.cubic_rate};
}

AmplitudeOde physical_amplitude_ode(const WnaReport& r, double D_prime_star) {
  return amplitude_ode(r, unfolding_parameter(D_prime_star, r.D_prime_critical));
}

double BranchPrediction::rho(double x, int sign) const {
  return rho_star + (sign >= 0 ? 1.0 : -1.0) * amplitude * std::cos(k * x);
}

BranchPrediction branch_prediction(const WnaReport& r, double D_prime_star) {
  if (r.criticality == Criticality::Degenerate) throw PreconditionError("branch_prediction: mu == 0");
  const double d = unfolding_parameter(D_prime_star, r.D_prime_critical);
  BranchPrediction bp;
  bp.rho_star = r.rho_star;
  bp.k = r.k;
  bp.valid_side = r.mu > 0.0 ? -1 : 1;
  if (d != 0.0 && (d > 0.0) == (r.mu > 0.0)) {
    throw NoLocalBranch("branch_prediction: no local branch on this side of the bifurcation");
  }
  const double Dk2 = r.D0 * r.k * r.k;
  const double rg = r.rho_star * r.g1;
  const double radicand =
      -r.alpha0 * r.u_star * rg * rg * rg * d / (r.mu * r.D0 * r.D0 * r.D0 * std::pow(Dk2 + r.lambda, 3));
  bp.amplitude = std::abs(r.D_prime_critical) * std::sqrt(std::max(radicand, 0.0));
  return bp;
}

double coefficient_b(const WnaReport& r) {
  if (r.mu == 0.0) throw PreconditionError("coefficient_b: mu == 0");
  const double Dk2 = r.D0 * r.k * r.k;
  const double g1 = r.g1;
  return -2.0 * r.D_prime_critical *
         std::sqrt(r.alpha0 * r.rho_star * r.u_star * g1 * g1 * g1 /
                   (std::abs(r.mu) * r.D0 * r.D0 * r.D0 * std::pow(Dk2 + r.lambda, 3)));
}

double mu_at_rho(const ModelParams& params, double rho_star, int branch_index) {
  ModelParams p = params;
  p.rho_star = rho_star;
  p.motility.u_star_ref.reset();
  return wna_report(make_base_state(p, branch_index)).mu;
}

MuCrossing find_mu_crossing(const ModelParams& params, double lo, double hi, int samples) {
  if (!(hi > lo) || samples < 2) throw DomainError("find_mu_crossing: bad sweep interval");
  MuCrossing out;
  for (int i = 0; i < samples; ++i) {
    const double rho = lo + (hi - lo) * i / (samples - 1);
    out.samples.emplace_back(rho, mu_at_rho(params, rho));
  }
  int crossings = 0;
  std::size_t where = 0;
  for (std::size_t i = 1; i < out.samples.size(); ++i) {
    if ((out.samples[i].second > 0.0) != (out.samples[i - 1].second > 0.0)) {
      ++crossings;
      where = i;
    }
  }
  if (crossings != 1) {
    throw NumericalFailure("find_mu_crossing: expected one sign change of mu, found " + std::to_string(crossings));
  }
  double a = out.samples[where - 1].first;
  double b = out.samples[where].first;
  double fa = out.samples[where - 1].second;
  for (int it = 0; it < 60 && b - a > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
    const double m = 0.5 * (a + b);
    const double fm = mu_at_rho(params, m);
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  out.rho_star = 0.5 * (a + b);
  return out;
}

}  // namespace qsp

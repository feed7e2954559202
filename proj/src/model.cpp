#include "qsp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qsp/errors.hpp"

namespace qsp {

double ProductionSpec::operator()(double c) const { return a + V * c / (K + c); }

void ProductionSpec::validate() const {
  if (!(a > 0.0)) throw ConfigError("production.a must be > 0");
  if (!(V >= 0.0)) throw ConfigError("production.V must be >= 0");
  if (!(K > 0.0)) throw ConfigError("production.K must be > 0");
}

double derivatives_of_g(const ProductionSpec& spec, double c, int order) {
  if (!(c >= 0.0)) throw DomainError("derivatives_of_g: c must be non-negative");
  const double s = spec.K + c;
  switch (order) {
    case 0:
      return spec(c);
    case 1:
      return spec.V * spec.K / (s * s);
    case 2:
      return -2.0 * spec.V * spec.K / (s * s * s);
    case 3:
      return 6.0 * spec.V * spec.K / (s * s * s * s);
    default:
      throw DomainError("derivatives_of_g: order must be in 0..3");
  }
}

namespace {

double motility_spread(const MotilitySpec& m) { return m.D_star - m.D_inf; }

double motility_rate(const MotilitySpec& m) {
  const double spread = motility_spread(m);
  if (spread == 0.0) return 0.0;
  return -m.D_prime_star / spread;
}

}  // namespace

double MotilitySpec::center() const {
  if (!u_star_ref) throw ConfigError("motility centre u_star_ref is unset");
  return *u_star_ref;
}

double MotilitySpec::operator()(double u) const {
  const double spread = motility_spread(*this);
  if (spread == 0.0) return D_star;
  return D_star - spread * std::tanh(motility_rate(*this) * (u - center()));
}

double MotilitySpec::slope(double u) const {
  const double spread = motility_spread(*this);
  if (spread == 0.0) return 0.0;
  const double t = std::tanh(motility_rate(*this) * (u - center()));
  return D_prime_star * (1.0 - t * t);
}

double MotilitySpec::parameter_sensitivity(double u) const {
  const double spread = motility_spread(*this);
  if (spread == 0.0) return 0.0;
  const double t = std::tanh(motility_rate(*this) * (u - center()));
  return (u - center()) * (1.0 - t * t);
}

MotilitySpec MotilitySpec::with_slope(double D_prime) const {
  MotilitySpec out = *this;
  out.D_prime_star = D_prime;
  return out;
}

void MotilitySpec::validate(double u_max) const {
  if (!(D_star > 0.0)) throw ConfigError("motility.D_star must be > 0");
  if (motility_spread(*this) == 0.0 && D_prime_star != 0.0) {
    throw ConfigError("motility: D_star == D_inf requires D_prime_star == 0");
  }
  if (!u_star_ref) return;
  // Monotone profile: positivity on [0, u_max] reduces to the endpoints.
  if (!((*this)(0.0) > 0.0) || !((*this)(u_max) > 0.0)) {
    throw ConfigError("motility: D(u) must be positive on [0, u_max]");
  }
}

std::vector<double> motility_taylor_normalized(const MotilitySpec& spec, double u0, int m_max) {
  if (m_max < 0) throw DomainError("motility_taylor: m_max must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(m_max) + 1, 0.0);
  out[0] = spec(u0);
  const double spread = motility_spread(spec);
  if (spread == 0.0 || m_max == 0) return out;

  const double kappa = motility_rate(spec);
  std::vector<double> t(static_cast<std::size_t>(m_max) + 1, 0.0);
  t[0] = std::tanh(kappa * (u0 - spec.center()));
  for (int n = 0; n < m_max; ++n) {
    double conv = 0.0;
    for (int i = 0; i <= n; ++i) conv += t[i] * t[n - i];
    t[n + 1] = ((n == 0 ? 1.0 : 0.0) - conv) / (n + 1);
  }
  double kpow = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    kpow *= kappa;
    out[m] = -spread * t[m] * kpow;
  }
  return out;
}

std::vector<double> motility_taylor(const MotilitySpec& spec, double u0, int m_max) {
  auto out = motility_taylor_normalized(spec, u0, m_max);
  double fact = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    fact *= m;
    out[m] *= fact;
  }
  return out;
}

void ModelParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(D_c, "D_c");
  positive(beta, "beta");
  positive(alpha0, "alpha0");
  positive(lambda, "lambda");
  positive(epsilon, "epsilon");
  positive(L, "L");
  positive(rho_star, "rho_star");
  production.validate();
  if (!(epsilon < epsilon_bound_factor * lambda * L)) {
    throw ConfigError("epsilon violates the sanity bound epsilon < lambda * L");
  }
  if (!(motility.D_star > 0.0)) throw ConfigError("motility.D_star must be > 0");
  if (!(motility.D_inf > 0.0)) throw ConfigError("motility.D_inf must be > 0");
  if (motility.u_star_ref) motility.validate(*motility.u_star_ref + std::max(12.0 * std::sqrt(epsilon / lambda), 0.5 * *motility.u_star_ref));
}

bool ModelParams::uniform_mode_stable(double c_star) const {
  return derivatives_of_g(production, c_star, 1) < lambda * beta / (alpha0 * rho_star);
}

double steady_residual(const ModelParams& params, double c) {
  return params.g(c) - params.lambda * params.beta * c / (params.alpha0 * params.rho_star);
}

namespace {

SteadyState make_state(const ModelParams& p, double c, int index) {
  SteadyState s;
  s.c_star = c;
  s.u_star = p.g(c) / p.lambda;
  s.N = p.rho_star * std::sqrt(p.lambda / (2.0 * std::numbers::pi * p.epsilon));
  s.branch_index = index;
  return s;
}

double refine_root(const ModelParams& p, double lo, double hi) {
  double flo = steady_residual(p, lo);
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = steady_residual(p, mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  double c = 0.5 * (lo + hi);
  const double slope_line = p.lambda * p.beta / (p.alpha0 * p.rho_star);
  for (int it = 0; it < 3; ++it) {
    const double d = derivatives_of_g(p.production, c, 1) - slope_line;
    if (d == 0.0) break;
    const double next = c - steady_residual(p, c) / d;
    if (!(next >= lo && next <= hi)) break;
    if (std::abs(steady_residual(p, next)) >= std::abs(steady_residual(p, c))) break;
    c = next;
  }
  return c;
}

}  // namespace

std::vector<SteadyState> solve_steady_state(const ModelParams& params, std::optional<double> c_max) {
  const auto& g = params.production;
  const double slope_line = params.lambda * params.beta / (params.alpha0 * params.rho_star);
  std::vector<SteadyState> out;

  if (g.V == 0.0) {
    out.push_back(make_state(params, g.a / slope_line, 0));
    return out;
  }

  const double hi = c_max.value_or(10.0 * (g.a + g.V) / slope_line);
  if (!(hi > 0.0)) throw NoSteadyState("steady state: empty root bracket");

  constexpr int kScan = 4096;
  std::vector<double> roots;
  double c_prev = 0.0;
  double f_prev = steady_residual(params, c_prev);
  for (int i = 1; i <= kScan; ++i) {
    const double c = hi * static_cast<double>(i) / kScan;
    const double f = steady_residual(params, c);
    if (f == 0.0) {
      roots.push_back(c);
    } else if (f_prev != 0.0 && (f > 0.0) != (f_prev > 0.0)) {
      roots.push_back(refine_root(params, c_prev, c));
    }
    c_prev = c;
    f_prev = f;
  }
  roots.erase(std::remove_if(roots.begin(), roots.end(), [](double c) { return !(c > 0.0); }),
              roots.end());
  if (roots.empty()) throw NoSteadyState("no positive steady state in [0, c_max]");
  std::sort(roots.begin(), roots.end());
  for (std::size_t i = 0; i < roots.size(); ++i) out.push_back(make_state(params, roots[i], static_cast<int>(i)));
  return out;
}

BaseState make_base_state(const ModelParams& params, int branch_index) {
  params.validate();
  const auto states = solve_steady_state(params);
  if (branch_index < 0 || branch_index >= static_cast<int>(states.size())) {
    throw ConfigError("steady-state branch_index " + std::to_string(branch_index) + " out of range (" +
                      std::to_string(states.size()) + " roots)");
  }
  BaseState base{params, states[branch_index]};
  if (!base.params.motility.u_star_ref) base.params.motility.u_star_ref = base.steady.u_star;
  base.params.validate();
  return base;
}

}  // namespace qsp

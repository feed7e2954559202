#include "qsp/reports.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include "qsp/dispersion.hpp"
#include "qsp/parallel.hpp"
#include "qsp/svg.hpp"

namespace qsp {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void CsvTable::add(const std::vector<double>& row) {
  std::vector<std::string> cells;
  cells.reserve(row.size());
  for (double v : row) cells.push_back(format_number(v));
  add_cells(cells);
}

void CsvTable::add_cells(const std::vector<std::string>& row) {
  if (row.size() != header_.size()) throw PreconditionError("CSV row width differs from header");
  rows_.push_back(row);
}

std::string CsvTable::str() const {
  std::ostringstream o;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? "," : "") << cells[i];
    o << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return o.str();
}

void CsvTable::write(const std::string& path) const { svg::write_file(path, str()); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json RunManifest::to_json() const {
  json j;
  j["tool_version"] = tool_version;
  j["subcommand"] = subcommand;
  j["arguments"] = arguments;
  j["seed"] = seed;
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["config"] = config;
  j["outputs"] = outputs;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.subcommand = j.at("subcommand").get<std::string>();
  m.arguments = j.at("arguments").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.started_utc = j.at("started_utc").get<std::string>();
  m.finished_utc = j.at("finished_utc").get<std::string>();
  m.config = j.at("config");
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

namespace {

std::shared_ptr<const Grid2D> make_grid(const BaseState& base, const GridOptions& go) {
  return std::make_shared<const Grid2D>(Grid2D::graded(base.params, base.steady.u_star, go));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BifurcationStudy run_bifurcation_study(const ModelParams& params, const StudyOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  BifurcationStudy st;
  st.epsilon = params.epsilon;
  try {
    const auto base = make_base_state(params);
    const auto rep = wna_report(base);
    st.D_theory = rep.D_prime_critical;
    st.b_theory = rep.b;
    const auto grid = make_grid(base, options.grid);
    st.nx = grid->nx;
    st.nu = grid->nu;
    PdeSystem sys(grid, base.params, options.solver);
    const auto uniform = uniform_state(sys, base.steady);
    const double D0 = rep.D_prime_critical;
    const double lo = std::min(D0 * (1 - options.bracket), D0 * (1 + options.bracket));
    const double hi = std::max(D0 * (1 - options.bracket), D0 * (1 + options.bracket));
    const auto bif = detect_bifurcation(sys, uniform, lo, hi, options.bracket_samples);
    st.D_hat = bif.D_prime;
    st.D_rel_error = std::abs(st.D_hat - D0) / std::abs(D0);
    const double b_guess = std::isfinite(rep.b) && rep.b > 0 ? rep.b : 1.0;
    st.branch = sample_branch_for_fit(sys, bif, +1, b_guess, std::abs(D0), options.fit);
    st.fit = fit_b(st.branch, st.D_hat, params.rho_star, 0.5 * options.fit.lo * std::abs(D0),
                   2.0 * options.fit.hi * std::abs(D0));
    st.b_hat = st.fit.b_hat;
    st.b_rel_error = std::abs(st.b_hat - st.b_theory) / std::abs(st.b_theory);
  } catch (const std::exception& e) {
    st.status = e.what();
  }
  st.seconds = seconds_since(t0);
  return st;
}

std::string to_string(SweepPlan::Axis axis) {
  switch (axis) {
    case SweepPlan::Axis::Epsilon: return "epsilon";
    case SweepPlan::Axis::RhoStar: return "rho_star";
    case SweepPlan::Axis::DPrime: return "D_prime_star";
  }
  return "?";
}

void SweepPlan::validate() const {
  if (values.empty()) throw ConfigError("sweep plan has no values");
  for (double v : values)
    if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
  const bool inc = std::is_sorted(values.begin(), values.end(), std::less<>());
  const bool dec = std::is_sorted(values.begin(), values.end(), std::greater<>());
  if (!inc && !dec) throw ConfigError("sweep values must be sorted");
  if (std::adjacent_find(values.begin(), values.end()) != values.end()) throw ConfigError("sweep values repeat");
  if (axis != Axis::DPrime)
    for (double v : values)
      if (!(v > 0.0)) throw ConfigError(to_string(axis) + " values must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("origin fit needs >= 2 paired points");
  OriginFit f;
  f.n = static_cast<int>(x.size());
  double sxy = 0.0, sxx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    my += y[i];
  }
  my /= static_cast<double>(y.size());
  f.slope = sxy / sxx;
  double res = 0.0, tot = 0.0, tot0 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - f.slope * x[i];
    res += e * e;
    tot += (y[i] - my) * (y[i] - my);
    tot0 += y[i] * y[i];
  }
  f.r_squared = tot > 0.0 ? 1.0 - res / tot : (res == 0.0 ? 1.0 : 0.0);
  f.r_squared_uncentered = tot0 > 0.0 ? 1.0 - res / tot0 : 1.0;
  return f;
}

EpsilonScaling run_epsilon_scaling(const ModelParams& params, const SweepPlan& plan, const StudyOptions& options) {
  plan.validate();
  if (plan.axis != SweepPlan::Axis::Epsilon) throw ConfigError("epsilon scaling needs an epsilon sweep plan");
  if (plan.values.size() < 3) throw ConfigError("epsilon scaling needs at least 3 epsilon values");
  EpsilonScaling out;
  {
    const auto rep = wna_report(make_base_state(params));
    out.D_theory = rep.D_prime_critical;
    out.b_theory = rep.b;
  }
  std::vector<double> eps = plan.values;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  out.rows.resize(eps.size());
  parallel_jobs(static_cast<int>(eps.size()), plan.threads, [&](int i) {
    ModelParams p = params;
    p.epsilon = eps[i];
    out.rows[i] = run_bifurcation_study(p, options);
  });
  std::vector<double> x, yD, yb;
  for (const auto& r : out.rows) {
    if (r.status != "ok") continue;
    x.push_back(r.epsilon);
    yD.push_back(r.D_rel_error);
    yb.push_back(r.b_rel_error);
  }
  if (x.size() >= 2) {
    out.D_fit = fit_through_origin(x, yD);
    out.b_fit = fit_through_origin(x, yb);
  }
  auto decreasing = [&](const std::vector<double>& y) {
    if (y.size() != out.rows.size()) return false;
    for (std::size_t i = 1; i < y.size(); ++i)
      if (!(y[i] < y[i - 1])) return false;
    return true;
  };
  out.D_monotone = decreasing(yD);
  out.b_monotone = decreasing(yb);
  return out;
}

DirectionCheck observe_branch_direction(const ModelParams& params, const StudyOptions& options,
                                        const std::vector<double>& amplitude_fractions) {
  DirectionCheck dc;
  dc.rho_star = params.rho_star;
  try {
    const auto base = make_base_state(params);
    const auto rep = wna_report(base);
    dc.mu = rep.mu;
    dc.D_theory = rep.D_prime_critical;
    // A^2 = sigma_1 d' (I0 + 1) / mu must be positive.
    const int lin = rep.linear_rate_per_dprime > 0 ? 1 : -1;
    dc.predicted = rep.mu > 0 ? lin : -lin;
    const double D0 = rep.D_prime_critical;
    PdeSystem sys(make_grid(base, options.grid), base.params, options.solver);
    const auto uniform = uniform_state(sys, base.steady);
    const auto bif = detect_bifurcation(sys, uniform, std::min(D0 * (1 - options.bracket), D0 * (1 + options.bracket)),
                                        std::max(D0 * (1 - options.bracket), D0 * (1 + options.bracket)),
                                        options.bracket_samples);
    dc.D_hat = bif.D_prime;
    int sign = 0;
    bool consistent = true;
    for (double frac : amplitude_fractions) {
      const double a = frac * params.rho_star;
      const auto ps = switch_branch(sys, bif, +1, a, 4.0 * a);
      const double off = ps.D_prime - bif.D_prime;
      dc.amplitudes.push_back(a);
      dc.offsets.push_back(off);
      const int s = off > 0 ? 1 : (off < 0 ? -1 : 0);
      if (sign == 0) sign = s;
      if (s == 0 || s != sign) consistent = false;
    }
    dc.observed = consistent ? sign : 0;
    dc.agree = dc.observed != 0 && dc.observed == dc.predicted;
  } catch (const std::exception& e) {
    dc.status = e.what();
  }
  return dc;
}

std::vector<DirectionCheck> run_criticality_sweep(const ModelParams& params, const SweepPlan& plan,
                                                  const StudyOptions& options) {
  plan.validate();
  if (plan.axis != SweepPlan::Axis::RhoStar) throw ConfigError("criticality sweep needs a rho_star sweep plan");
  std::vector<DirectionCheck> out(plan.values.size());
  parallel_jobs(static_cast<int>(plan.values.size()), plan.threads, [&](int i) {
    ModelParams p = params;
    p.rho_star = plan.values[i];
    p.motility.u_star_ref.reset();
    out[i] = observe_branch_direction(p, options);
  });
  return out;
}

GrowthMeasurement measure_linear_growth(const ModelParams& params, const StudyOptions& options,
                                        const GrowthOptions& growth) {
  if (!(growth.t_end > growth.t_skip && growth.t_skip >= 0.0 && growth.dt > 0.0))
    throw PreconditionError("growth window needs 0 <= t_skip < t_end and dt > 0");
  GrowthMeasurement gm;
  auto base = make_base_state(params);
  const double D0 = critical_Dprime(base, Wavenumber::mode(1, params.L));
  gm.D_prime = growth.D_prime_factor * D0;
  base.params.motility.D_prime_star = gm.D_prime;
  gm.sigma_theory = growth_rates(base, Wavenumber::mode(1, params.L)).max_real();

  const auto grid = make_grid(base, options.grid);
  PdeSystem sys(grid, base.params, options.solver);
  auto f = perturb_cosine(uniform_state(sys, base.steady), growth.amplitude);
  SolverOptions so = options.solver;
  so.dt = growth.dt;
  TimeStepper stepper(sys, so);
  gm.trace.emplace_back(f.time, observables(f).rho_cos_amplitude);
  const int steps = static_cast<int>(std::ceil(growth.t_end / growth.dt - 1e-9));
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (int s = 0; s < steps; ++s) {
    f = stepper.step(f);
    const double a = observables(f).rho_cos_amplitude;
    gm.trace.emplace_back(f.time, a);
    if (f.time >= growth.t_skip - 1e-9) {
      const double y = std::log(std::abs(a));
      st += f.time;
      sy += y;
      stt += f.time * f.time;
      sty += f.time * y;
      ++n;
    }
  }
  if (n < 3) throw PreconditionError("growth window holds fewer than 3 samples");
  gm.sigma_log_slope = (n * sty - st * sy) / (n * stt - st * st);
  const double G = std::exp(gm.sigma_log_slope * growth.dt);
  gm.sigma_measured = (1.0 - 1.0 / G) / growth.dt;
  gm.relative_error = std::abs(gm.sigma_measured - gm.sigma_theory) / std::abs(gm.sigma_theory);
  return gm;
}

namespace {

// Weighted linear least squares of 1/a^2 = alpha + beta exp(-2 sigma t) at fixed sigma.
LogisticFit logistic_at(const std::vector<std::pair<double, double>>& trace, double sigma) {
  double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
  for (const auto& [t, a] : trace) {
    const double y = 1.0 / (a * a);
    const double e = std::exp(-2.0 * sigma * (t - trace.front().first));
    const double w = 1.0 / (y * y);
    s11 += w;
    s12 += w * e;
    s22 += w * e * e;
    r1 += w * y;
    r2 += w * e * y;
  }
  const double det = s11 * s22 - s12 * s12;
  LogisticFit fit;
  fit.sigma = sigma;
  fit.residual = std::numeric_limits<double>::infinity();
  if (!(std::abs(det) > 0.0)) return fit;
  const double alpha = (r1 * s22 - r2 * s12) / det;
  const double beta = (s11 * r2 - s12 * r1) / det;
  if (!(alpha > 0.0)) return fit;
  double res = 0.0;
  for (const auto& [t, a] : trace) {
    const double y = 1.0 / (a * a);
    const double e = std::exp(-2.0 * sigma * (t - trace.front().first));
    const double m = alpha + beta * e;
    res += (m - y) * (m - y) / (y * y);
  }
  fit.a_sat = 1.0 / std::sqrt(alpha);
  fit.C = beta / alpha * std::exp(2.0 * sigma * trace.front().first);
  fit.residual = std::sqrt(res / static_cast<double>(trace.size()));
  return fit;
}

}  // namespace

LogisticFit fit_logistic(const std::vector<std::pair<double, double>>& trace_in) {
  std::vector<std::pair<double, double>> trace;
  for (const auto& [t, a] : trace_in)
    if (std::isfinite(a) && a != 0.0) trace.emplace_back(t, std::abs(a));
  if (trace.size() < 6) throw PreconditionError("logistic fit needs at least 6 samples");
  // Seed sigma from the early log slope.
  const std::size_t m = std::max<std::size_t>(3, trace.size() / 5);
  const double s0 = std::log(trace[m].second / trace[0].second) / (trace[m].first - trace[0].first);
  if (!(s0 > 0.0)) throw NumericalFailure("amplitude trace does not grow initially");
  double best = std::numeric_limits<double>::infinity(), best_s = s0;
  const int scan = 240;
  for (int i = 0; i <= scan; ++i) {
    const double s = s0 * std::pow(10.0, -1.0 + 2.0 * i / scan);
    const double r = logistic_at(trace, s).residual;
    if (r < best) {
      best = r;
      best_s = s;
    }
  }
  // Golden section in log sigma around the best scan point.
  double a = std::log(best_s) - 2.0 * std::log(10.0) / scan, b = std::log(best_s) + 2.0 * std::log(10.0) / scan;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = logistic_at(trace, std::exp(c)).residual, fd = logistic_at(trace, std::exp(d)).residual;
  for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = logistic_at(trace, std::exp(c)).residual;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = logistic_at(trace, std::exp(d)).residual;
    }
  }
  auto fit = logistic_at(trace, std::exp(0.5 * (a + b)));
  if (!std::isfinite(fit.residual)) throw NumericalFailure("logistic fit found no saturating solution");
  return fit;
}

AmplitudeDynamics run_amplitude_dynamics(const ModelParams& params, const StudyOptions& options,
                                         const AmplitudeOptions& amp) {
  if (!(amp.t_end > amp.t_skip && amp.dt > 0.0 && amp.offset > 0.0))
    throw PreconditionError("amplitude run needs t_end > t_skip, dt > 0, offset > 0");
  AmplitudeDynamics out;
  const auto base = make_base_state(params);
  const auto rep = wna_report(base);
  if (rep.criticality != Criticality::Supercritical)
    throw PreconditionError("amplitude dynamics needs a supercritical bifurcation");
  const double D0 = rep.D_prime_critical;
  const auto grid = make_grid(base, options.grid);
  PdeSystem sys(grid, base.params, options.solver);
  const auto uniform = uniform_state(sys, base.steady);
  const auto bif = detect_bifurcation(sys, uniform, std::min(D0 * (1 - options.bracket), D0 * (1 + options.bracket)),
                                      std::max(D0 * (1 - options.bracket), D0 * (1 + options.bracket)),
                                      options.bracket_samples);
  out.D_hat = bif.D_prime;
  // The branch lives on the side where sigma_1 d' > 0.
  const double side = rep.linear_rate_per_dprime > 0 ? 1.0 : -1.0;
  out.D_prime = out.D_hat + side * amp.offset * std::abs(D0);
  sys.set_D_prime(out.D_prime);

  auto f = perturb_cosine(uniform, amp.amplitude);
  SolverOptions so = options.solver;
  so.dt = amp.dt;
  TimeStepper stepper(sys, so);
  const int steps = static_cast<int>(std::ceil(amp.t_end / amp.dt - 1e-9));
  for (int s = 0; s < steps; ++s) {
    f = stepper.step(f);
    if (f.time >= amp.t_skip - 1e-9) out.pde_trace.emplace_back(f.time, std::abs(observables(f).c_cos_amplitude));
  }
  const auto ode = physical_amplitude_ode(rep, D0 + (out.D_prime - out.D_hat));
  out.sigma_theory = ode.linear;
  out.a_sat_theory = std::sqrt(-ode.linear / ode.cubic);
  // RK4 from the PDE amplitude at t_skip, sampled at the same times.
  double a = out.pde_trace.front().second, t = out.pde_trace.front().first;
  out.ode_trace.emplace_back(t, a);
  const int sub = 20;
  for (std::size_t i = 1; i < out.pde_trace.size(); ++i) {
    const double h = (out.pde_trace[i].first - t) / sub;
    for (int k = 0; k < sub; ++k) {
      const double k1 = ode.rhs(a), k2 = ode.rhs(a + 0.5 * h * k1), k3 = ode.rhs(a + 0.5 * h * k2),
                   k4 = ode.rhs(a + h * k3);
      a += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    t = out.pde_trace[i].first;
    out.ode_trace.emplace_back(t, a);
  }
  out.pde = fit_logistic(out.pde_trace);
  out.ode = fit_logistic(out.ode_trace);
  out.sat_rel_error = std::abs(out.pde.a_sat - out.ode.a_sat) / out.ode.a_sat;
  out.growth_rel_error = std::abs(out.pde.sigma - out.ode.sigma) / out.ode.sigma;
  return out;
}

PhaseDiagram run_phase_diagram(const ModelParams& params, const std::vector<double>& rho_values,
                               const std::vector<double>& D_values, const StudyOptions& options,
                               const PhaseOptions& phase, int threads) {
  if (rho_values.empty() || D_values.empty()) throw ConfigError("phase diagram grid is empty");
  PhaseDiagram pd;
  pd.rho_values = rho_values;
  pd.D_values = D_values;
  const int nr = static_cast<int>(rho_values.size()), nd = static_cast<int>(D_values.size());
  pd.points.resize(static_cast<std::size_t>(nr) * nd);

  auto relax = [&](const PdeSystem& sys, Field f) {
    SolverOptions so = options.solver;
    so.dt = phase.dt;
    TimeStepper stepper(sys, so);
    while (f.time < phase.t_max) {
      Field g = stepper.step(f);
      double change = 0.0;
      for (std::size_t r = 0; r < g.y.size(); ++r) change = std::max(change, std::abs(g.y[r] - f.y[r]));
      f = std::move(g);
      if (change / phase.dt < phase.steady_tol) break;
    }
    return observables(f).delta_rho;
  };

  parallel_jobs(nr * nd, threads, [&](int idx) {
    const int ir = idx / nd, id = idx % nd;
    PhasePoint& pt = pd.points[idx];
    pt.rho_star = rho_values[ir];
    pt.D_prime = D_values[id];
    try {
      ModelParams p = params;
      p.rho_star = pt.rho_star;
      p.motility.u_star_ref.reset();
      p.motility.D_prime_star = pt.D_prime;
      const auto base = make_base_state(p);
      PdeSystem sys(make_grid(base, options.grid), base.params, options.solver);
      const auto uniform = uniform_state(sys, base.steady);
      pt.small_seed = relax(sys, perturb_cosine(uniform, phase.small_amplitude)) / pt.rho_star;
      pt.large_seed = relax(sys, perturb_cosine(uniform, phase.large_amplitude)) / pt.rho_star;
    } catch (const std::exception& e) {
      pt.status = e.what();
      pt.small_seed = pt.large_seed = std::numeric_limits<double>::quiet_NaN();
    }
  });

  const double rmin = *std::min_element(rho_values.begin(), rho_values.end());
  const double rmax = *std::max_element(rho_values.begin(), rho_values.end());
  const int dense = 41;
  for (int i = 0; i < dense; ++i) {
    const double r = nr == 1 ? rmin : rmin + (rmax - rmin) * i / (dense - 1);
    try {
      ModelParams p = params;
      p.rho_star = r;
      p.motility.u_star_ref.reset();
      pd.critical_curve.emplace_back(r, critical_Dprime(make_base_state(p), Wavenumber::mode(1, p.L)));
    } catch (const Error&) {
      pd.critical_curve.emplace_back(r, std::numeric_limits<double>::quiet_NaN());
    }
    if (nr == 1) break;
  }
  pd.mu_crossing = std::numeric_limits<double>::quiet_NaN();
  if (rmax > rmin) {
    try {
      pd.mu_crossing = find_mu_crossing(params, rmin, rmax).rho_star;
    } catch (const Error&) {
    }
  }
  return pd;
}

std::vector<std::string> emit_line_plot(const std::string& dir, const std::string& name, const CsvTable& table,
                                        const std::string& svg_text) {
  table.write(dir + "/" + name + ".csv");
  svg::write_file(dir + "/" + name + ".svg", svg_text);
  return {name + ".csv", name + ".svg"};
}

}  // namespace qsp

#include "cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>

#include "CLI11.hpp"

#include "qsp/config.hpp"
#include "qsp/continuation.hpp"
#include "qsp/dispersion.hpp"
#include "qsp/errors.hpp"
#include "qsp/reports.hpp"
#include "qsp/series.hpp"
#include "qsp/stokes.hpp"
#include "qsp/svg.hpp"
#include "qsp/wna.hpp"

namespace fs = std::filesystem;

namespace qsp::cli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Env {
  ModelParams params;
  fs::path out;
  int threads = 1;
  std::uint64_t seed = 0;
  StudyOptions study;
  std::vector<std::string> outputs;

  std::string path(const std::string& name) const { return (out / name).string(); }

  void csv(const std::string& name, const CsvTable& t) {
    t.write(path(name));
    outputs.push_back(name);
  }
  void json_file(const std::string& name, const json& j) {
    svg::write_file(path(name), j.dump(2) + "\n");
    outputs.push_back(name);
  }
  void plot(const std::string& name, const CsvTable& t, const std::string& svg_text) {
    for (auto& f : emit_line_plot(out.string(), name, t, svg_text)) outputs.push_back(f);
  }

  BaseState base() const { return make_base_state(params); }
  std::shared_ptr<const Grid2D> grid(const BaseState& b) const {
    return std::make_shared<const Grid2D>(Grid2D::graded(b.params, b.steady.u_star, study.grid));
  }
};

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw ConfigError("range needs at least one point");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return v;
}

// "lo,hi,n" triples for grid axes.
std::vector<double> parse_range3(const std::vector<double>& r, const std::string& flag) {
  if (r.size() != 3) throw ConfigError(flag + " expects lo,hi,n");
  const double n = r[2];
  if (!(n >= 1) || n != std::floor(n)) throw ConfigError(flag + ": n must be a positive integer");
  return linspace(r[0], r[1], static_cast<int>(n));
}

svg::Series series(const std::string& label, std::vector<double> x, std::vector<double> y, bool markers = false,
                   bool dashed = false) {
  svg::Series s;
  s.label = label;
  s.x = std::move(x);
  s.y = std::move(y);
  s.markers = markers;
  s.line = !markers;
  s.dashed = dashed;
  return s;
}

double resolve_D_prime(const BaseState& base, std::optional<double> D_prime, std::optional<double> factor) {
  if (D_prime && factor) throw ConfigError("give either --D-prime or --factor, not both");
  if (D_prime) return *D_prime;
  if (factor) return *factor * critical_Dprime(base, Wavenumber::mode(1, base.params.L));
  return base.params.motility.D_prime_star;
}

json field_summary(const Field& f) {
  const auto ob = observables(f);
  return json{{"time", f.time},
              {"delta_rho", ob.delta_rho},
              {"rho_cos_amplitude", ob.rho_cos_amplitude},
              {"c_cos_amplitude", ob.c_cos_amplitude},
              {"total_mass", ob.total_mass}};
}

CsvTable profile_table(const Field& f) {
  const auto ob = observables(f);
  CsvTable t({"x", "rho", "c", "u_mean"});
  for (int i = 0; i < f.grid->nx; ++i) t.add({f.grid->x[i], ob.rho[i], ob.c[i], ob.u_mean[i]});
  return t;
}

std::string profile_svg(const Field& f, const std::string& title) {
  const auto ob = observables(f);
  svg::Axes ax{title, "x", "rho", false, false};
  return svg::line_plot(ax, {series("rho", f.grid->x, ob.rho)});
}

// ---------------------------------------------------------------- commands

void cmd_steady_state(Env& env, std::optional<double> c_max) {
  const auto states = solve_steady_state(env.params, c_max);
  CsvTable t({"index", "c_star", "u_star", "N", "residual", "uniform_mode_stable"});
  json arr = json::array();
  for (const auto& s : states) {
    const double res = steady_residual(env.params, s.c_star);
    const bool stable = env.params.uniform_mode_stable(s.c_star);
    t.add({static_cast<double>(s.branch_index), s.c_star, s.u_star, s.N, res, stable ? 1.0 : 0.0});
    arr.push_back({{"index", s.branch_index},
                   {"c_star", s.c_star},
                   {"u_star", s.u_star},
                   {"N", s.N},
                   {"residual", res},
                   {"uniform_mode_stable", stable}});
  }
  env.csv("steady_state.csv", t);
  env.json_file("steady_state.json", json{{"states", arr}});
}

void cmd_dispersion(Env& env, int modes, int samples) {
  if (modes < 1 || samples < 2) throw ConfigError("dispersion needs --modes >= 1 and --samples >= 2");
  const auto base = env.base();
  const double L = env.params.L;
  std::vector<Wavenumber> ks;
  for (int m = 1; m <= modes; ++m) ks.push_back(Wavenumber::mode(m, L));
  const auto spec = growth_spectrum(base, ks);
  CsvTable t({"m", "k", "re1", "im1", "re2", "im2", "re3", "im3", "residual"});
  json unstable = json::array();
  for (std::size_t i = 0; i < spec.entries.size(); ++i) {
    const auto& e = spec.entries[i];
    const auto cubic = build_cubic(base, ks[i]);
    double res = 0.0;
    for (const auto& r : e.roots) res = std::max(res, std::abs(cubic.rational_residual(r)));
    t.add({static_cast<double>(i + 1), e.k, e.roots[0].real(), e.roots[0].imag(), e.roots[1].real(),
           e.roots[1].imag(), e.roots[2].real(), e.roots[2].imag(), res});
    if (e.max_real() > 0) unstable.push_back(static_cast<int>(i + 1));
  }
  env.csv("dispersion.csv", t);

  CsvTable curve({"k", "max_real_sigma"});
  std::vector<double> kx, sy;
  const double k_hi = modes * std::numbers::pi / L;
  for (int i = 0; i < samples; ++i) {
    const double k = k_hi * (i + 1) / samples;
    const double s = growth_rates(base, Wavenumber::continuous(k)).max_real();
    curve.add({k, s});
    kx.push_back(k);
    sy.push_back(s);
  }
  std::vector<double> mk, ms;
  for (const auto& e : spec.entries) {
    mk.push_back(e.k);
    ms.push_back(e.max_real());
  }
  svg::Axes ax{"Largest growth rate", "k", "max Re sigma", false, false};
  env.plot("dispersion_curve", curve, svg::line_plot(ax, {series("continuous k", kx, sy), series("no-flux modes", mk, ms, true)}));
  env.json_file("dispersion.json", json{{"D_prime_star", env.params.motility.D_prime_star},
                                        {"max_real_part", spec.max_real_part},
                                        {"critical_k", spec.critical_k},
                                        {"unstable_modes", unstable}});
}

void cmd_critical(Env& env, int modes, const std::vector<double>& rho_range) {
  if (modes < 1) throw ConfigError("critical needs --modes >= 1");
  const auto base = env.base();
  CsvTable t({"m", "k", "D_prime_critical"});
  json arr = json::array();
  for (int m = 1; m <= modes; ++m) {
    const auto k = Wavenumber::mode(m, env.params.L);
    const double d = critical_Dprime(base, k);
    t.add({static_cast<double>(m), k.value(), d});
    arr.push_back({{"m", m}, {"k", k.value()}, {"D_prime_critical", d}});
  }
  env.csv("critical.csv", t);
  if (!rho_range.empty()) {
    CsvTable c({"rho_star", "D_prime_critical"});
    std::vector<double> xs, ys;
    for (double r : parse_range3(rho_range, "--rho-range")) {
      ModelParams p = env.params;
      p.rho_star = r;
      p.motility.u_star_ref.reset();
      double d = kNaN;
      try {
        d = critical_Dprime(make_base_state(p), Wavenumber::mode(1, p.L));
      } catch (const Error&) {
      }
      c.add({r, d});
      xs.push_back(r);
      ys.push_back(d);
    }
    svg::Axes ax{"Critical motility slope", "rho*", "D'_0", false, false};
    env.plot("critical_curve", c, svg::line_plot(ax, {series("D'_0", xs, ys)}));
  }
  env.json_file("critical.json", json{{"modes", arr}});
}

SeriesKind parse_kind(const std::string& s) {
  if (s == "q") return SeriesKind::Q;
  if (s == "w") return SeriesKind::W;
  if (s == "wtilde") return SeriesKind::Wtilde;
  if (s == "s") return SeriesKind::S;
  throw ConfigError("--kind must be one of q, w, wtilde, s");
}

void cmd_series(Env& env, const std::string& kind_name, int j_max, int l_max, bool check) {
  const auto kind = parse_kind(kind_name);
  const auto ctx = WnaContext::make(env.base());
  double c22 = 0.0;
  std::optional<SeriesTable> table;
  AmplitudeOdeSpec spec{kind, 1, 1.0, 0.0};
  switch (kind) {
    case SeriesKind::Q:
      table = q_table(ctx.series, j_max, l_max);
      break;
    case SeriesKind::W:
      table = w_table(ctx.series, j_max, l_max, 1);
      break;
    case SeriesKind::Wtilde:
      table = w_table(ctx.series, j_max, l_max, 2);
      spec.wavenumber_multiplier = 2;
      break;
    case SeriesKind::S: {
      c22 = compute_c22(ctx);
      const auto q = q_table(ctx.series, j_max, l_max);
      table = s_table(ctx.series, q, c22, j_max, l_max);
      spec.wavenumber_multiplier = 2;
      spec.c22 = c22;
      break;
    }
  }
  std::optional<SeriesTable> oracle;
  if (check) oracle = oracle_series(spec, ctx.series, j_max, l_max);
  std::vector<std::string> head{"j", "l", "coefficient"};
  if (check) head.push_back("oracle");
  CsvTable t(head);
  for (int j = 0; j <= j_max; ++j)
    for (int l = 0; l <= l_max; ++l) {
      std::vector<double> row{static_cast<double>(j), static_cast<double>(l), table->at(j, l)};
      if (check) row.push_back(oracle->at(j, l));
      t.add(row);
    }
  const std::string name = "series_" + kind_name;
  env.csv(name + ".csv", t);
  json j{{"kind", kind_name}, {"j_max", j_max}, {"l_max", l_max}, {"k", ctx.series.k},
         {"D_prime_critical", ctx.D_prime_critical}};
  if (kind == SeriesKind::S) j["c22"] = c22;
  if (check) j["max_rel_diff_vs_oracle"] = max_relative_difference(*table, *oracle, j_max, l_max);
  env.json_file(name + ".json", j);
}

json wna_json(const WnaReport& r) {
  return json{{"k", r.k},
              {"D_prime_critical", r.D_prime_critical},
              {"c20", r.c20},
              {"c22", r.c22},
              {"I0", r.I.I0},
              {"I1_per_dprime", r.I.I1_per_dprime},
              {"I2", r.I.I2},
              {"I3", r.I.I3},
              {"I4", r.I.I4},
              {"I5", r.I.I5},
              {"mu", r.mu},
              {"linear_rate_per_dprime", r.linear_rate_per_dprime},
              {"cubic_rate", r.cubic_rate},
              {"b", num(r.b)},
              {"criticality", to_string(r.criticality)},
              {"rho_star", r.rho_star},
              {"u_star", r.u_star},
              {"D0", r.D0}};
}

void cmd_wna(Env& env, const std::vector<double>& rho_range) {
  const auto rep = wna_report(env.base());
  json j = wna_json(rep);
  if (!rho_range.empty()) {
    const auto rhos = parse_range3(rho_range, "--rho-range");
    CsvTable t({"rho_star", "mu"});
    std::vector<double> mu;
    for (double r : rhos) {
      double m = kNaN;
      try {
        m = mu_at_rho(env.params, r);
      } catch (const Error&) {
      }
      t.add({r, m});
      mu.push_back(m);
    }
    svg::Axes ax{"Cubic coefficient", "rho*", "mu", false, false};
    env.plot("mu_curve", t, svg::line_plot(ax, {series("mu", rhos, mu)}));
    try {
      j["mu_crossing"] = find_mu_crossing(env.params, rhos.front(), rhos.back()).rho_star;
    } catch (const NumericalFailure&) {
      j["mu_crossing"] = nullptr;
    }
  }
  env.json_file("wna.json", j);
}

struct SimOptions {
  std::optional<double> D_prime;
  std::optional<double> factor;
  double t_end = 200.0;
  double dt = 0.5;
  double amplitude = 1e-3;
  double noise = 0.0;
  int every = 1;
  std::string scheme = "implicit";
};

// Multiplicative noise per x-cell from the run seed, then mass restored.
Field add_noise(const PdeSystem& sys, Field f, double noise, std::uint64_t seed) {
  if (noise <= 0.0) return f;
  std::mt19937_64 rng(seed);
  const auto& g = *f.grid;
  const double m0 = sys.mass(f.y);
  for (int i = 0; i < g.nx; ++i) {
    const double xi = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
    for (int j = 0; j < g.nu; ++j) f.y[g.n_index(i, j)] *= 1.0 + noise * xi;
  }
  const double scale = m0 / sys.mass(f.y);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nu; ++j) f.y[g.n_index(i, j)] *= scale;
  return f;
}

void cmd_simulate(Env& env, const SimOptions& o) {
  if (!(o.t_end > 0 && o.dt > 0 && o.every >= 1)) throw ConfigError("simulate needs --t-end > 0, --dt > 0, --every >= 1");
  if (o.noise < 0 || o.noise >= 1) throw ConfigError("--noise must lie in [0, 1)");
  auto base = env.base();
  const double D = resolve_D_prime(base, o.D_prime, o.factor);
  base.params.motility.D_prime_star = D;
  SolverOptions so = env.study.solver;
  so.dt = o.dt;
  if (o.scheme == "imex") so.scheme = TimeScheme::Imex;
  else if (o.scheme != "implicit") throw ConfigError("--scheme must be implicit or imex");
  PdeSystem sys(env.grid(base), base.params, so);
  auto f = add_noise(sys, perturb_cosine(uniform_state(sys, base.steady), o.amplitude), o.noise, env.seed);
  const double m0 = sys.mass(f.y);
  TimeStepper stepper(sys, so);
  CsvTable t({"t", "rho_cos_amplitude", "c_cos_amplitude", "delta_rho", "mass"});
  std::vector<double> ts, amp;
  auto record = [&](const Field& g) {
    const auto ob = observables(g);
    t.add({g.time, ob.rho_cos_amplitude, ob.c_cos_amplitude, ob.delta_rho, ob.total_mass});
    ts.push_back(g.time);
    amp.push_back(ob.rho_cos_amplitude);
  };
  record(f);
  const int steps = static_cast<int>(std::ceil(o.t_end / o.dt - 1e-9));
  double drift = 0.0;
  for (int s = 1; s <= steps; ++s) {
    f = stepper.step(f);
    drift = std::max(drift, std::abs(sys.mass(f.y) - m0) / m0);
    if (s % o.every == 0 || s == steps) record(f);
  }
  svg::Axes ax{"cos(pi x / L) amplitude of rho", "t", "amplitude", false, false};
  env.plot("trace", t, svg::line_plot(ax, {series("rho amplitude", ts, amp)}));
  env.plot("final_profile", profile_table(f), profile_svg(f, "Final density"));
  json j = field_summary(f);
  j["D_prime_star"] = D;
  j["steps"] = steps;
  j["max_relative_mass_drift"] = drift;
  j["grid"] = {{"nx", sys.grid().nx}, {"nu", sys.grid().nu}};
  env.json_file("simulate.json", j);
}

void cmd_steady(Env& env, std::optional<double> D_prime, std::optional<double> factor, double amplitude, int sign,
                bool stability) {
  if (sign != 1 && sign != -1) throw ConfigError("--sign must be +1 or -1");
  auto base = env.base();
  const double D = resolve_D_prime(base, D_prime, factor);
  base.params.motility.D_prime_star = D;
  PdeSystem sys(env.grid(base), base.params, env.study.solver);
  const auto guess = perturb_cosine(uniform_state(sys, base.steady), sign * amplitude);
  const auto res = newton_steady(sys, guess);
  env.plot("steady_profile", profile_table(res.field), profile_svg(res.field, "Steady density"));
  json j = field_summary(res.field);
  j.erase("time");
  j["D_prime_star"] = D;
  j["newton_iterations"] = res.iterations;
  j["residual"] = res.residual_norm;
  if (stability) {
    const auto ev = leading_eigenvalue(sys, res.field.y);
    j["leading_eigenvalue"] = ev.value;
    j["eigen_converged"] = ev.converged;
  }
  env.json_file("steady.json", j);
}

struct ContinueOptions {
  std::vector<double> range;
  std::string branch = "auto";
  int max_points = 200;
  double step = 1e-2;
  double amplitude = 0.01;  // pinned rho amplitude for the switch, as a fraction of rho*
};

void add_branch_rows(CsvTable& t, const Branch& b) {
  for (const auto& p : b.points)
    t.add_cells({to_string(b.label), format_number(p.s), format_number(p.D_prime), format_number(p.delta_rho),
                 format_number(p.rho_amplitude), format_number(p.eigenvalue), p.stable ? "1" : "0"});
}

json branch_json(const Branch& b) {
  return json{{"label", to_string(b.label)},
              {"points", b.points.size()},
              {"folds", b.folds},
              {"status", b.status},
              {"D_prime_first", b.points.empty() ? json(nullptr) : json(b.points.front().D_prime)},
              {"D_prime_last", b.points.empty() ? json(nullptr) : json(b.points.back().D_prime)}};
}

void cmd_continue(Env& env, const ContinueOptions& o) {
  if (o.branch != "uniform" && o.branch != "auto") throw ConfigError("--branch must be uniform or auto");
  const auto base = env.base();
  const auto rep = wna_report(base);
  const double D0 = rep.D_prime_critical;
  double lo = std::min(D0 * 0.85, D0 * 1.15), hi = std::max(D0 * 0.85, D0 * 1.15);
  if (!o.range.empty()) {
    if (o.range.size() != 2 || !(o.range[0] < o.range[1])) throw ConfigError("--range expects a,b with a < b");
    lo = o.range[0];
    hi = o.range[1];
  }
  ModelParams p = base.params;
  p.motility.D_prime_star = lo;
  PdeSystem sys(env.grid(base), p, env.study.solver);
  const auto start = uniform_state(sys, base.steady);

  StepPolicy pol;
  pol.initial = o.step;
  pol.max_points = o.max_points;
  pol.param_scale = std::abs(D0);
  const auto uniform = continue_branch(sys, start, lo, lo, hi, pol, +1, BranchLabel::Uniform);
  std::vector<Branch> branches{uniform};
  json j{{"D_theory", D0}, {"range", {lo, hi}}, {"mu", rep.mu}, {"criticality", to_string(rep.criticality)}};

  if (o.branch == "auto") {
    const auto bif = detect_bifurcation(sys, uniform);
    j["D_hat"] = bif.D_prime;
    for (int dir : {+1, -1}) {
      const double a = o.amplitude * env.params.rho_star;
      const auto ps = switch_branch(sys, bif, dir, a, 8.0 * a);
      const int sense = ps.D_prime >= bif.D_prime ? 1 : -1;
      sys.set_D_prime(ps.D_prime);
      branches.push_back(continue_branch(sys, ps.field, ps.D_prime, lo, hi, pol, sense,
                                         dir > 0 ? BranchLabel::Plus : BranchLabel::Minus));
    }
  }
  CsvTable t({"branch", "s", "D_prime", "delta_rho", "rho_amplitude", "eigenvalue", "stable"});
  json arr = json::array();
  std::vector<svg::Series> plots;
  for (const auto& b : branches) {
    add_branch_rows(t, b);
    arr.push_back(branch_json(b));
    std::vector<double> x, y;
    for (const auto& pt : b.points) {
      x.push_back(pt.D_prime);
      y.push_back(b.label == BranchLabel::Minus ? -pt.delta_rho : pt.delta_rho);
    }
    plots.push_back(series(to_string(b.label), x, y));
  }
  if (rep.criticality != Criticality::Degenerate) {
    std::vector<double> x, yp, ym;
    const int side = rep.mu > 0 ? (rep.linear_rate_per_dprime > 0 ? 1 : -1) : (rep.linear_rate_per_dprime > 0 ? -1 : 1);
    for (int i = 0; i <= 60; ++i) {
      const double D = D0 + side * (side > 0 ? hi - D0 : D0 - lo) * i / 60.0;
      if (D < lo || D > hi) continue;
      const double d = env.params.rho_star * rep.b * std::sqrt(std::abs(D - D0));
      x.push_back(D);
      yp.push_back(d);
      ym.push_back(-d);
    }
    plots.push_back(series("theory +", x, yp, false, true));
    plots.push_back(series("theory -", x, ym, false, true));
  }
  j["branches"] = arr;
  svg::Axes ax{"Bifurcation diagram", "D'*", "signed delta rho", false, false};
  env.plot("bifurcation", t, svg::line_plot(ax, plots));
  env.json_file("continue.json", j);
}

void cmd_epsilon_sweep(Env& env, std::vector<double> eps, int fit_points) {
  if (eps.empty()) eps = {0.02, 0.01, 0.005, 0.0025};
  SweepPlan plan;
  plan.axis = SweepPlan::Axis::Epsilon;
  plan.values = eps;
  plan.threads = env.threads;
  StudyOptions so = env.study;
  so.fit.points = fit_points;
  const auto sc = run_epsilon_scaling(env.params, plan, so);
  CsvTable t({"epsilon", "nx", "nu", "D_theory", "D_hat", "D_rel_error", "b_theory", "b_hat", "b_rel_error",
              "free_exponent", "fit_r_squared", "status"});
  json rows = json::array();
  std::vector<double> x, yD, yb;
  for (const auto& r : sc.rows) {
    t.add_cells({format_number(r.epsilon), std::to_string(r.nx), std::to_string(r.nu), format_number(r.D_theory),
                 format_number(r.D_hat), format_number(r.D_rel_error), format_number(r.b_theory),
                 format_number(r.b_hat), format_number(r.b_rel_error), format_number(r.fit.free_exponent),
                 format_number(r.fit.r_squared), r.status});
    rows.push_back({{"epsilon", r.epsilon}, {"status", r.status}, {"seconds", r.seconds}});
    if (r.status == "ok") {
      x.push_back(r.epsilon);
      yD.push_back(r.D_rel_error);
      yb.push_back(r.b_rel_error);
    }
  }
  std::vector<svg::Series> plots{series("D' relative error", x, yD, true), series("b relative error", x, yb, true)};
  if (!x.empty()) {
    const double xm = *std::max_element(x.begin(), x.end());
    plots.push_back(series("D' fit", {0.0, xm}, {0.0, sc.D_fit.slope * xm}, false, true));
    plots.push_back(series("b fit", {0.0, xm}, {0.0, sc.b_fit.slope * xm}, false, true));
  }
  svg::Axes ax{"Relative error against epsilon", "epsilon", "relative error", false, false};
  env.plot("epsilon_scaling", t, svg::line_plot(ax, plots));
  auto fitj = [](const OriginFit& f) {
    return json{{"slope", f.slope}, {"r_squared", f.r_squared}, {"r_squared_uncentered", f.r_squared_uncentered}, {"n", f.n}};
  };
  env.json_file("epsilon_scaling.json", json{{"D_theory", sc.D_theory},
                                             {"b_theory", sc.b_theory},
                                             {"D_fit", fitj(sc.D_fit)},
                                             {"b_fit", fitj(sc.b_fit)},
                                             {"D_monotone", sc.D_monotone},
                                             {"b_monotone", sc.b_monotone},
                                             {"rows", rows}});
}

void cmd_phase_diagram(Env& env, const std::vector<double>& rho_r, const std::vector<double>& d_r, double t_max) {
  const auto rhos = parse_range3(rho_r, "--rho");
  const auto Ds = parse_range3(d_r, "--dprime");
  PhaseOptions po;
  po.t_max = t_max;
  const auto pd = run_phase_diagram(env.params, rhos, Ds, env.study, po, env.threads);
  CsvTable small({"rho_star", "D_prime", "small_seed", "status"}), large({"rho_star", "D_prime", "large_seed", "status"});
  std::vector<std::vector<double>> zs(Ds.size(), std::vector<double>(rhos.size())), zl = zs;
  for (std::size_t ir = 0; ir < rhos.size(); ++ir)
    for (std::size_t id = 0; id < Ds.size(); ++id) {
      const auto& pt = pd.points[ir * Ds.size() + id];
      small.add_cells({format_number(pt.rho_star), format_number(pt.D_prime), format_number(pt.small_seed), pt.status});
      large.add_cells({format_number(pt.rho_star), format_number(pt.D_prime), format_number(pt.large_seed), pt.status});
      zs[id][ir] = pt.small_seed;
      zl[id][ir] = pt.large_seed;
    }
  std::vector<double> cx, cy;
  for (const auto& [r, d] : pd.critical_curve) {
    cx.push_back(r);
    cy.push_back(d);
  }
  std::vector<svg::Series> over{series("D'_0", cx, cy)};
  if (std::isfinite(pd.mu_crossing))
    over.push_back(series("mu = 0", {pd.mu_crossing, pd.mu_crossing}, {Ds.front(), Ds.back()}, false, true));
  env.plot("phase_small_seed", small,
           svg::heatmap({"delta rho / rho*, small seed", "rho*", "D'*", false, false}, rhos, Ds, zs, over));
  env.plot("phase_large_seed", large,
           svg::heatmap({"delta rho / rho*, large seed", "rho*", "D'*", false, false}, rhos, Ds, zl, over));
  CsvTable crit({"rho_star", "D_prime_critical"});
  for (const auto& [r, d] : pd.critical_curve) crit.add({r, d});
  env.csv("critical_curve.csv", crit);
  int failed = 0;
  for (const auto& pt : pd.points) failed += pt.status != "ok";
  env.json_file("phase.json", json{{"mu_crossing", num(pd.mu_crossing)}, {"points", pd.points.size()}, {"failed", failed}});
}

struct StokesOptions {
  std::string study = "late-terms";
  int j_max = 0;
  double s = 0.5;
  double r = 0.5;
  std::vector<double> eps;
  double theta_halfwidth = 0.5;
  int theta_points = 201;
  std::string seed_kind = "singular";
  double pole_amplitude = 1.0;
};

void cmd_stokes(Env& env, const StokesOptions& o) {
  const auto base = env.base();
  const auto rep = wna_report(base);
  const auto sctx = SeriesContext::make(base, Wavenumber::mode(1, env.params.L), rep.D_prime_critical);
  const auto ctx = stokes::StokesContext::from_series(sctx);
  stokes::Seed seed;
  if (o.seed_kind == "singular") seed = stokes::Seed::singular_pole(o.pole_amplitude);
  else if (o.seed_kind == "smooth") seed = stokes::Seed::smooth();
  else throw ConfigError("--seed-kind must be singular or smooth");
  json j{{"study", o.study}, {"h0", ctx.h0()}, {"gamma_expected", ctx.h0() - 1.5}, {"seed_kind", o.seed_kind}};

  if (o.study == "late-terms") {
    const int jm = o.j_max > 0 ? o.j_max : 60;
    const auto seq = stokes::generate_late_terms(ctx, jm + 1, seed);
    const auto st = stokes::study_late_terms(seq, {o.s, 0.0}, jm / 2, jm);
    CsvTable t({"j", "log_abs_q", "ratio_re", "ratio_im", "ratio_model"});
    std::vector<double> jx, rr, rm;
    for (int jj = 0; jj <= jm; ++jj) {
      const bool has_ratio = jj < static_cast<int>(st.ratio.size());
      const double model = jj > 0 ? ((static_cast<double>(jj) + st.fit.gamma_hat + 1.0) / (ctx.lambda * st.fit.v_hat) +
                                     st.fit.c_coefficient / static_cast<double>(jj)).real()
                                  : kNaN;
      t.add({static_cast<double>(jj), st.log_abs_q[jj], has_ratio ? st.ratio[jj].real() : kNaN,
             has_ratio ? st.ratio[jj].imag() : kNaN, model});
      if (has_ratio) {
        jx.push_back(jj);
        rr.push_back(st.ratio[jj].real());
        rm.push_back(model);
      }
    }
    svg::Axes ax{"Late-term ratio q_{j+1}/q_j", "j", "ratio", false, false};
    env.plot("late_terms", t, svg::line_plot(ax, {series("ratio", jx, rr, true), series("fit", jx, rm, false, true)}));
    j["s"] = o.s;
    j["j_lo"] = st.j_lo;
    j["j_hi"] = st.j_hi;
    j["v_hat"] = {st.fit.v_hat.real(), st.fit.v_hat.imag()};
    j["v_expected"] = st.v_expected.real();
    j["v_rel_error"] = std::abs(st.fit.v_hat - st.v_expected) / std::abs(st.v_expected);
    j["gamma_hat"] = {st.fit.gamma_hat.real(), st.fit.gamma_hat.imag()};
    j["gamma_rel_error"] = std::abs(st.fit.gamma_hat - st.gamma_expected) / std::abs(st.gamma_expected);
    j["fit_residual"] = st.fit.residual;
  } else if (o.study == "truncation") {
    auto eps = o.eps.empty() ? std::vector<double>{0.02, 0.015, 0.01, 0.0075, 0.005, 0.004, 0.003, 0.0025} : o.eps;
    const double e_min = *std::min_element(eps.begin(), eps.end());
    const int need = stokes::optimal_truncation_index(ctx.lambda, o.r, e_min) + 8;
    const auto seq = stokes::generate_late_terms(ctx, std::max(o.j_max, need), seed);
    CsvTable t({"epsilon", "N_opt", "N_empirical", "log_min_term", "log_term_at_N", "near_minimal"});
    for (double e : eps) {
      const auto tp = stokes::optimal_truncation(seq, o.r, e);
      t.add({e, static_cast<double>(tp.N_opt), static_cast<double>(tp.N_empirical), tp.log_min_term,
             tp.log_term_at_N, tp.near_minimal ? 1.0 : 0.0});
    }
    env.csv("truncation.csv", t);
    const auto rs = stokes::remainder_scaling(seq, o.r, eps);
    CsvTable rt({"inv_epsilon", "log_min_term", "fit"});
    double c = 0.0;
    for (std::size_t i = 0; i < rs.epsilon.size(); ++i)
      c += rs.log_min_term[i] - rs.slope / rs.epsilon[i] - rs.power * std::log(rs.epsilon[i]);
    c /= static_cast<double>(rs.epsilon.size());
    std::vector<double> ix, ly, lf;
    for (std::size_t i = 0; i < rs.epsilon.size(); ++i) {
      const double e = rs.epsilon[i];
      const double f = rs.slope / e + rs.power * std::log(e) + c;
      rt.add({1.0 / e, rs.log_min_term[i], f});
      ix.push_back(1.0 / e);
      ly.push_back(rs.log_min_term[i]);
      lf.push_back(f);
    }
    svg::Axes ax{"Minimal term at optimal truncation", "1 / epsilon", "log min term", false, false};
    env.plot("remainder", rt, svg::line_plot(ax, {series("measured", ix, ly, true), series("fit", ix, lf, false, true)}));
    j["r"] = o.r;
    j["slope"] = rs.slope;
    j["expected_slope"] = rs.expected_slope;
    j["power"] = rs.power;
    j["slope_rel_error"] = rs.relative_error;
  } else if (o.study == "smoothing") {
    const double e = o.eps.empty() ? 1e-3 : o.eps.front();
    if (o.eps.size() > 1) throw ConfigError("smoothing takes a single --eps value");
    if (o.theta_points < 3 || !(o.theta_halfwidth > 0)) throw ConfigError("smoothing needs --theta-points >= 3 and a positive half-width");
    const int need = stokes::optimal_truncation_index(ctx.lambda, o.r, e) + 4;
    const auto seq = stokes::generate_late_terms(ctx, std::max(o.j_max, need), seed);
    const auto th = linspace(std::numbers::pi / 2 - o.theta_halfwidth, std::numbers::pi / 2 + o.theta_halfwidth,
                             o.theta_points);
    const auto sp = stokes::stokes_smoothing_profile(seq, o.r, e, th);
    CsvTable t({"theta", "measured", "predicted", "raw_re", "raw_im"});
    for (std::size_t i = 0; i < th.size(); ++i)
      t.add({th[i], sp.measured[i], sp.predicted[i], sp.measured_raw[i].real(), sp.measured_raw[i].imag()});
    svg::Axes ax{"Stokes multiplier across the Stokes line", "theta", "normalised multiplier", false, false};
    env.plot("smoothing", t,
             svg::line_plot(ax, {series("measured", th, sp.measured, true), series("erf", th, sp.predicted, false, true)}));
    j["epsilon"] = e;
    j["r"] = o.r;
    j["N"] = sp.N;
    j["correlation"] = sp.correlation;
  } else {
    throw ConfigError("--study must be late-terms, truncation or smoothing");
  }
  env.json_file("stokes_" + o.study + ".json", j);
}

int dispatch_replay(const RunManifest& m);

void cmd_report(Env& env, const std::string& from, bool replay, int& exit_code) {
  const auto base = env.base();
  json j;
  j["params"] = params_to_json(env.params);
  j["steady_state"] = {{"c_star", base.steady.c_star}, {"u_star", base.steady.u_star}, {"N", base.steady.N}};
  j["wna"] = wna_json(wna_report(base));
  if (!from.empty()) {
    const fs::path dir(from);
    if (fs::weakly_canonical(dir) == fs::weakly_canonical(env.out))
      throw ConfigError("report --from must differ from --out");
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError("no manifest.json in " + from);
    json mj;
    try {
      mj = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    auto m = RunManifest::from_json(mj);
    json missing = json::array();
    for (const auto& f : m.outputs)
      if (!fs::exists(dir / f)) missing.push_back(f);
    json chk{{"subcommand", m.subcommand}, {"outputs", m.outputs.size()}, {"missing", missing}};
    if (replay && !missing.empty()) {
      const int rc = dispatch_replay(m);
      chk["replay_exit_code"] = rc;
      json still = json::array();
      for (const auto& f : m.outputs)
        if (!fs::exists(dir / f)) still.push_back(f);
      chk["missing_after_replay"] = still;
      if (rc != 0) exit_code = rc;
    }
    j["manifest_check"] = chk;
  }
  env.json_file("report.json", j);
}

int dispatch_replay(const RunManifest& m) {
  std::optional<ModelParams> p;
  try {
    p = params_from_json(m.config);
  } catch (const ConfigError&) {
    return kConfigError;
  }
  return run(m.arguments, p);
}

template <class E>
int fail(int code, const E& e) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::optional<ModelParams> params_override) {
  CLI::App app{"Structured quorum-sensing population model: analysis and simulation", "qsp"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string params_path, out_dir = "qsp_out";
  int threads = 1;
  std::uint64_t seed = 0;
  GridOptions grid;
  SolverOptions solver;
  std::string linear = "sparselu", quadrature = "midpoint";
  app.add_option("--params", params_path, "Parameter file (JSON); defaults to the built-in set");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for sweeps")->capture_default_str();
  app.add_option("--seed", seed, "Seed for random perturbations")->capture_default_str();
  app.add_option("--nx", grid.nx, "x cells")->capture_default_str();
  app.add_option("--cells-per-width", grid.cells_per_width, "u cells per Gaussian width")->capture_default_str();
  app.add_option("--stretch", grid.stretch, "u grid growth ratio outside the core")->capture_default_str();
  app.add_option("--linear-solver", linear, "sparselu or bicgstab")->capture_default_str();
  app.add_option("--quadrature", quadrature, "midpoint, trapezoid or simpson")->capture_default_str();

  std::optional<double> c_max;
  auto* c_ss = app.add_subcommand("steady-state", "Uniform steady states");
  c_ss->add_option("--c-max", c_max, "Upper end of the root search");

  int modes = 8, samples = 200;
  auto* c_disp = app.add_subcommand("dispersion", "Growth rates of no-flux modes");
  c_disp->add_option("--modes", modes)->capture_default_str();
  c_disp->add_option("--samples", samples, "Continuous-k samples for the curve")->capture_default_str();

  int crit_modes = 4;
  std::vector<double> crit_rho;
  auto* c_crit = app.add_subcommand("critical", "Critical motility slope per mode");
  c_crit->add_option("--modes", crit_modes)->capture_default_str();
  c_crit->add_option("--rho-range", crit_rho, "lo,hi,n sweep of rho*")->delimiter(',');

  std::string kind = "q";
  int j_max = 4, l_max = 10;
  bool check = false;
  auto* c_ser = app.add_subcommand("series", "Local power-series coefficient tables");
  c_ser->add_option("--kind", kind, "q, w, wtilde or s")->capture_default_str();
  c_ser->add_option("--jmax", j_max)->capture_default_str();
  c_ser->add_option("--lmax", l_max)->capture_default_str();
  c_ser->add_flag("--check", check, "Compare against the dense oracle");

  std::vector<double> wna_rho;
  auto* c_wna = app.add_subcommand("wna", "Weakly nonlinear coefficients");
  c_wna->add_option("--rho-range", wna_rho, "lo,hi,n sweep of mu over rho*")->delimiter(',');

  SimOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Time integration from a perturbed uniform state");
  c_sim->add_option("--D-prime", sim.D_prime, "Motility slope D'*");
  c_sim->add_option("--factor", sim.factor, "D'* as a multiple of the critical value");
  c_sim->add_option("--t-end", sim.t_end)->capture_default_str();
  c_sim->add_option("--dt", sim.dt)->capture_default_str();
  c_sim->add_option("--amplitude", sim.amplitude, "cos perturbation amplitude")->capture_default_str();
  c_sim->add_option("--noise", sim.noise, "Random multiplicative noise amplitude")->capture_default_str();
  c_sim->add_option("--every", sim.every, "Record every n steps")->capture_default_str();
  c_sim->add_option("--scheme", sim.scheme, "implicit or imex")->capture_default_str();

  std::optional<double> st_D, st_factor;
  double st_amp = 0.05;
  int st_sign = 1;
  bool st_stab = false;
  auto* c_st = app.add_subcommand("steady", "Newton solve for a steady state");
  c_st->add_option("--D-prime", st_D);
  c_st->add_option("--factor", st_factor);
  c_st->add_option("--amplitude", st_amp, "Initial cos perturbation")->capture_default_str();
  c_st->add_option("--sign", st_sign, "+1 or -1")->capture_default_str();
  c_st->add_flag("--stability", st_stab, "Also compute the leading eigenvalue");

  ContinueOptions co;
  auto* c_co = app.add_subcommand("continue", "Pseudo-arclength continuation in D'*");
  c_co->add_option("--range", co.range, "a,b")->delimiter(',');
  c_co->add_option("--branch", co.branch, "uniform or auto")->capture_default_str();
  c_co->add_option("--max-points", co.max_points)->capture_default_str();
  c_co->add_option("--step", co.step, "Initial arclength step")->capture_default_str();
  c_co->add_option("--switch-amplitude", co.amplitude, "Pinned amplitude / rho* for branch switching")
      ->capture_default_str();

  std::vector<double> sweep_eps;
  int fit_points = 10;
  auto* c_eps = app.add_subcommand("epsilon-sweep", "Bifurcation point and b against epsilon");
  c_eps->add_option("--eps", sweep_eps, "Comma-separated epsilon values")->delimiter(',');
  c_eps->add_option("--fit-points", fit_points)->capture_default_str();

  std::vector<double> pd_rho{0.3, 0.8, 6}, pd_d{-2.0, -1.0, 6};
  double pd_t = 1500.0;
  auto* c_pd = app.add_subcommand("phase-diagram", "Relaxation over a (rho*, D'*) grid");
  c_pd->add_option("--rho", pd_rho, "lo,hi,n")->delimiter(',');
  c_pd->add_option("--dprime", pd_d, "lo,hi,n")->delimiter(',');
  c_pd->add_option("--t-max", pd_t)->capture_default_str();

  StokesOptions so;
  auto* c_sk = app.add_subcommand("stokes", "Late terms, optimal truncation and Stokes smoothing");
  c_sk->add_option("--study", so.study, "late-terms, truncation or smoothing")->capture_default_str();
  c_sk->add_option("--jmax", so.j_max, "Highest order generated");
  c_sk->add_option("--s", so.s, "Offset u - u* for the ratio study")->capture_default_str();
  c_sk->add_option("--r", so.r, "Radius |u - u*|")->capture_default_str();
  c_sk->add_option("--eps", so.eps, "epsilon values")->delimiter(',');
  c_sk->add_option("--theta-halfwidth", so.theta_halfwidth)->capture_default_str();
  c_sk->add_option("--theta-points", so.theta_points)->capture_default_str();
  c_sk->add_option("--seed-kind", so.seed_kind, "singular or smooth")->capture_default_str();
  c_sk->add_option("--pole-amplitude", so.pole_amplitude)->capture_default_str();

  std::string from;
  bool replay = false;
  auto* c_rep = app.add_subcommand("report", "Theory summary; optionally audits another run directory");
  c_rep->add_option("--from", from, "Run directory whose manifest to check");
  c_rep->add_flag("--replay", replay, "Re-run that command if outputs are missing");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  RunManifest manifest;
  manifest.started_utc = utc_now();
  manifest.arguments = args;
  manifest.seed = seed;
  try {
    Env env;
    env.params = params_override ? *params_override : (params_path.empty() ? ModelParams{} : load_params(params_path));
    env.params.validate();
    if (threads < 1) throw ConfigError("--threads must be >= 1");
    if (grid.nx < 4 || !(grid.cells_per_width > 0) || !(grid.stretch >= 1.0))
      throw ConfigError("grid needs --nx >= 4, --cells-per-width > 0, --stretch >= 1");
    if (linear == "bicgstab") solver.linear_solver = LinearSolverKind::BiCGSTAB;
    else if (linear != "sparselu") throw ConfigError("--linear-solver must be sparselu or bicgstab");
    if (quadrature == "trapezoid") solver.quadrature = QuadratureRule::Trapezoid;
    else if (quadrature == "simpson") solver.quadrature = QuadratureRule::Simpson;
    else if (quadrature != "midpoint") throw ConfigError("--quadrature must be midpoint, trapezoid or simpson");
    solver.validate();
    env.out = out_dir;
    env.threads = threads;
    env.seed = seed;
    env.study.grid = grid;
    env.study.solver = solver;
    fs::create_directories(env.out);

    int code = kOk;
    auto* sub = app.get_subcommands().front();
    manifest.subcommand = sub->get_name();
    if (sub == c_ss) cmd_steady_state(env, c_max);
    else if (sub == c_disp) cmd_dispersion(env, modes, samples);
    else if (sub == c_crit) cmd_critical(env, crit_modes, crit_rho);
    else if (sub == c_ser) cmd_series(env, kind, j_max, l_max, check);
    else if (sub == c_wna) cmd_wna(env, wna_rho);
    else if (sub == c_sim) cmd_simulate(env, sim);
    else if (sub == c_st) cmd_steady(env, st_D, st_factor, st_amp, st_sign, st_stab);
    else if (sub == c_co) cmd_continue(env, co);
    else if (sub == c_eps) cmd_epsilon_sweep(env, sweep_eps, fit_points);
    else if (sub == c_pd) cmd_phase_diagram(env, pd_rho, pd_d, pd_t);
    else if (sub == c_sk) cmd_stokes(env, so);
    else if (sub == c_rep) cmd_report(env, from, replay, code);

    manifest.config = params_to_json(env.params);
    manifest.outputs = env.outputs;
    manifest.finished_utc = utc_now();
    svg::write_file(env.path("manifest.json"), manifest.to_json().dump(2) + "\n");
    return code;
  } catch (const ConfigError& e) {
    return fail(kConfigError, e);
  } catch (const DomainError& e) {
    return fail(kConfigError, e);
  } catch (const PreconditionError& e) {
    return fail(kConfigError, e);
  } catch (const NumericalFailure& e) {
    return fail(kNumericalFailure, e);
  } catch (const std::exception& e) {
    return fail(kFailure, e);
  }
}

}  // namespace qsp::cli

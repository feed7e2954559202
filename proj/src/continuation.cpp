#include "qsp/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace qsp {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void remove_mass(const std::vector<double>& w, double ww, std::vector<double>& x) {
  const double a = dot(w, x) / ww;
  for (std::size_t r = 0; r < x.size(); ++r) x[r] -= a * w[r];
}

SparseMatrix shifted(const SparseMatrix& J, double shift) {
  SparseMatrix I(J.rows(), J.cols());
  I.setIdentity();
  SparseMatrix A = J - shift * I;
  A.makeCompressed();
  return A;
}

// [A col; row^T corner] as one sparse matrix.
SparseMatrix bordered(const SparseMatrix& A, const std::vector<double>& col, const std::vector<double>& row,
                      double corner) {
  const auto n = static_cast<int>(A.rows());
  std::vector<Eigen::Triplet<double>> T;
  T.reserve(A.nonZeros() + 2 * col.size() + 1);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) T.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < n; ++r) {
    if (col[r] != 0.0) T.emplace_back(r, n, col[r]);
    if (row[r] != 0.0) T.emplace_back(n, r, row[r]);
  }
  if (corner != 0.0) T.emplace_back(n, n, corner);
  SparseMatrix B(n + 1, n + 1);
  B.setFromTriplets(T.begin(), T.end());
  B.makeCompressed();
  return B;
}

std::vector<double> start_vector(const PdeSystem& system, const std::vector<double>& y) {
  const auto& g = system.grid();
  std::vector<double> v(y.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    const double t = std::numbers::pi * g.x[i] / g.L;
    const double m = std::cos(t) + 0.3 * std::cos(2.0 * t) + 0.1 * std::cos(3.0 * t);
    for (int j = 0; j < g.nu; ++j) v[g.n_index(i, j)] = y[g.n_index(i, j)] * m;
    v[g.c_index(i)] = 0.1 * m;
  }
  return v;
}

BranchPoint make_point(const PdeSystem& system, const Field& f, double D_prime, bool with_stability) {
  BranchPoint pt;
  pt.D_prime = D_prime;
  const auto obs = observables(f);
  pt.delta_rho = obs.delta_rho;
  pt.rho_amplitude = obs.rho_cos_amplitude;
  pt.residual = steady_residual_norm(system, f.y);
  pt.solution = std::make_shared<const Field>(f);
  pt.eigenvalue = std::numeric_limits<double>::quiet_NaN();
  pt.eigen_converged = false;
  if (with_stability) {
    const auto eig = leading_eigenvalue(system, f.y);
    pt.eigen_converged = eig.converged;
    if (eig.converged) {
      pt.eigenvalue = eig.value;
    } else {
      auto dir = eig.vector.empty() ? start_vector(system, f.y) : eig.vector;
      pt.eigenvalue = stability_probe(system, f.y, dir);
    }
    pt.stable = pt.eigenvalue < 0.0;
  }
  return pt;
}

}  // namespace

std::string to_string(BranchLabel label) {
  switch (label) {
    case BranchLabel::Uniform: return "uniform";
    case BranchLabel::Plus: return "plus";
    case BranchLabel::Minus: return "minus";
  }
  return "?";
}

EigenEstimate leading_eigenvalue(const PdeSystem& system, const std::vector<double>& y, double shift, int max_iter,
                                 double tol) {
  const auto& w = system.mass_weights();
  const double ww = dot(w, w);
  const SparseMatrix J = system.jacobian(y);
  LinearSolver solver(LinearSolverKind::SparseLU);
  solver.factorize(shifted(J, shift));

  EigenEstimate est;
  std::vector<double> x = start_vector(system, y);
  remove_mass(w, ww, x);
  double nx = norm2(x);
  for (auto& v : x) v /= nx;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= max_iter; ++it) {
    std::vector<double> z = solver.solve(x);
    remove_mass(w, ww, z);
    const double theta = dot(x, z);
    const double nz = norm2(z);
    if (nz == 0.0 || !std::isfinite(nz)) break;
    for (std::size_t r = 0; r < z.size(); ++r) x[r] = z[r] / nz;
    // Sign of theta fixes the orientation; keep x continuous across iterations.
    if (theta < 0.0)
      for (auto& v : x) v = -v;
    const double lam = shift + 1.0 / theta;
    est.iterations = it;
    if (std::isfinite(prev) && std::abs(lam - prev) < tol * std::max(1.0, std::abs(lam))) {
      // Rayleigh quotient with the converged vector.
      Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
      est.value = xv.dot(J * xv);
      est.converged = std::abs(est.value - lam) < 1e-6 * std::max(1.0, std::abs(lam));
      if (!est.converged) est.value = lam;
      est.vector = x;
      return est;
    }
    prev = lam;
  }
  est.value = prev;
  est.vector = x;
  est.converged = false;
  return est;
}

double stability_probe(const PdeSystem& system, const std::vector<double>& y, const std::vector<double>& direction,
                       int steps, double dt, double probe_size) {
  auto dir = direction;
  const auto& w = system.mass_weights();
  remove_mass(w, dot(w, w), dir);
  const double scale = probe_size * std::max(1.0, inf_norm(y)) / std::max(inf_norm(dir), 1e-300);
  Field f{system.grid_ptr(), y, 0.0};
  for (std::size_t r = 0; r < y.size(); ++r) f.y[r] += scale * dir[r];
  SolverOptions opt = system.options();
  opt.dt = dt;
  TimeStepper stepper(system, opt);
  auto distance = [&](const Field& g) {
    double s = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) s += (g.y[r] - y[r]) * (g.y[r] - y[r]);
    return std::sqrt(s);
  };
  // Let fast transients decay before measuring the trend.
  const int settle = std::max(1, steps / 5);
  double d0 = 0.0;
  for (int k = 0; k < steps; ++k) {
    f = stepper.step(f);
    if (k + 1 == settle) d0 = distance(f);
  }
  const double d1 = distance(f);
  if (d0 <= 0.0 || d1 <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(d1 / d0) / ((steps - settle) * dt);
}

std::vector<double> rho_amplitude_weights(const Grid2D& g, int mode) {
  std::vector<double> a(g.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    const double ci = 2.0 * g.hx / g.L * std::cos(mode * std::numbers::pi * g.x[i] / g.L);
    for (int j = 0; j < g.nu; ++j) a[g.n_index(i, j)] = ci * g.du[j];
  }
  return a;
}

namespace {

double eigen_at(PdeSystem& system, const Field& uniform, double D, std::vector<double>* vec) {
  system.set_D_prime(D);
  const auto st = newton_steady(system, uniform);
  const auto eig = leading_eigenvalue(system, st.field.y);
  if (!eig.converged) throw NumericalFailure("eigenvalue iteration stagnated on the uniform branch");
  if (vec) *vec = eig.vector;
  return eig.value;
}

}  // namespace

BifurcationPoint detect_bifurcation(PdeSystem& system, const Field& uniform, double lo, double hi, int samples,
                                    double tol) {
  if (!(lo < hi) || samples < 2) throw PreconditionError("detect_bifurcation needs lo < hi and >= 2 samples");
  BifurcationPoint out;
  std::vector<double> Ds(samples), es(samples);
  for (int s = 0; s < samples; ++s) {
    Ds[s] = lo + (hi - lo) * s / (samples - 1);
    es[s] = eigen_at(system, uniform, Ds[s], nullptr);
    out.samples.emplace_back(Ds[s], es[s]);
  }
  int k = -1;
  for (int s = 0; s + 1 < samples; ++s) {
    if ((es[s] > 0.0) != (es[s + 1] > 0.0)) {
      k = s;
      break;
    }
  }
  if (k < 0) throw NotBracketed("leading eigenvalue keeps one sign on the scanned interval");
  // Illinois-modified regula falsi.
  double a = Ds[k], b = Ds[k + 1], fa = es[k], fb = es[k + 1];
  int side = 0;
  double c = a;
  for (int it = 0; it < 100; ++it) {
    c = (a * fb - b * fa) / (fb - fa);
    const double fc = eigen_at(system, uniform, c, nullptr);
    out.samples.emplace_back(c, fc);
    if (fc == 0.0 || std::abs(b - a) < tol * std::max(1.0, std::abs(c))) break;
    if ((fc > 0.0) == (fb > 0.0)) {
      b = c;
      fb = fc;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = c;
      fa = fc;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
    if (std::abs(fc) < 1e-14) break;
  }
  out.D_prime = c;
  system.set_D_prime(c);
  auto st = newton_steady(system, uniform);
  out.uniform = std::make_shared<const Field>(st.field);
  std::vector<double> vec;
  eigen_at(system, uniform, c, &vec);
  const auto aw = rho_amplitude_weights(system.grid());
  if (dot(aw, vec) < 0.0)
    for (auto& v : vec) v = -v;
  out.eigenvector = std::move(vec);
  return out;
}

BifurcationPoint detect_bifurcation(PdeSystem& system, const Branch& uniform_branch) {
  const auto& pts = uniform_branch.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (std::isnan(pts[i].eigenvalue) || std::isnan(pts[i + 1].eigenvalue)) continue;
    if (pts[i].stable != pts[i + 1].stable) {
      const double lo = std::min(pts[i].D_prime, pts[i + 1].D_prime);
      const double hi = std::max(pts[i].D_prime, pts[i + 1].D_prime);
      return detect_bifurcation(system, *pts[i].solution, lo, hi, 2);
    }
  }
  throw NotBracketed("no stability change recorded along the uniform branch");
}

PinnedSolution solve_amplitude_pinned(PdeSystem& system, const Field& guess, double D_prime_guess,
                                      double target_amplitude) {
  const auto& opt = system.options();
  const auto a = rho_amplitude_weights(system.grid());
  const std::size_t n = guess.y.size();
  std::vector<double> y = guess.y;
  double p = D_prime_guess;
  std::vector<double> F;

  auto eval = [&](const std::vector<double>& yy, double pp, std::vector<double>& out) {
    system.set_D_prime(pp);
    system.steady_residual(yy, out);
    out.push_back(dot(a, yy) - target_amplitude);
    return inf_norm(out) / std::max(1.0, inf_norm(yy));
  };

  double norm = eval(y, p, F);
  LinearSolver solver(LinearSolverKind::SparseLU);
  for (int it = 0; it < opt.newton_max_iter; ++it) {
    if (norm < opt.newton_tol) return PinnedSolution{Field{guess.grid, y, 0.0}, p, it, norm};
    system.set_D_prime(p);
    auto Fp = system.parameter_derivative(y);
    Fp[system.pinned_row()] = 0.0;
    solver.factorize(bordered(system.steady_jacobian(y), Fp, a, 0.0));
    for (auto& v : F) v = -v;
    const auto delta = solver.solve(F);
    double alpha = 1.0, trial_norm = 0.0;
    std::vector<double> ty(n);
    double tp = p;
    for (int ls = 0; ls < 12; ++ls) {
      for (std::size_t r = 0; r < n; ++r) ty[r] = y[r] + alpha * delta[r];
      tp = p + alpha * delta[n];
      try {
        trial_norm = eval(ty, tp, F);
      } catch (const NumericalFailure&) {
        trial_norm = std::numeric_limits<double>::infinity();
      }
      if (trial_norm < norm) break;
      alpha *= 0.5;
    }
    if (!std::isfinite(trial_norm) || trial_norm >= norm) break;
    y = ty;
    p = tp;
    norm = trial_norm;
  }
  if (norm < opt.newton_tol) return PinnedSolution{Field{guess.grid, y, 0.0}, p, opt.newton_max_iter, norm};
  system.set_D_prime(p);
  throw NewtonFailure("amplitude-pinned Newton did not converge", Field{guess.grid, y, 0.0}, norm);
}

PinnedSolution switch_branch(PdeSystem& system, const BifurcationPoint& bif, int direction, double amplitude,
                             double max_amplitude) {
  if (direction != 1 && direction != -1) throw PreconditionError("direction must be +1 or -1");
  if (!(amplitude > 0.0)) throw PreconditionError("switch_branch amplitude must be positive");
  const auto aw = rho_amplitude_weights(system.grid());
  const double proj = dot(aw, bif.eigenvector);
  if (std::abs(proj) < 1e-300) throw NumericalFailure("critical mode has no cos component");
  double amp = amplitude;
  for (;;) {
    Field guess = *bif.uniform;
    const double scale = direction * amp / proj;
    for (std::size_t r = 0; r < guess.y.size(); ++r) guess.y[r] += scale * bif.eigenvector[r];
    try {
      auto sol = solve_amplitude_pinned(system, guess, bif.D_prime, direction * amp);
      if (observables(sol.field).delta_rho > 0.5 * amp) return sol;
    } catch (const NumericalFailure&) {
      if (amp * 2.0 > max_amplitude) throw;
    }
    amp *= 2.0;
    if (amp > max_amplitude) throw NumericalFailure("branch switching collapsed up to the amplitude cap");
  }
}

Branch continue_branch(PdeSystem& system, const Field& start, double start_D_prime, double D_lo, double D_hi,
                       const StepPolicy& policy, int direction, BranchLabel label) {
  if (direction != 1 && direction != -1) throw PreconditionError("direction must be +1 or -1");
  if (!(policy.min > 0.0 && policy.min <= policy.initial && policy.initial <= policy.max))
    throw PreconditionError("step policy needs 0 < min <= initial <= max");
  const auto& opt = system.options();
  const std::size_t n = start.y.size();
  system.set_D_prime(start_D_prime);
  if (steady_residual_norm(system, start.y) > std::max(opt.newton_tol, 1e-8))
    throw PreconditionError("continuation start is not a converged steady state");

  const double y_scale = std::max(1.0, inf_norm(start.y));
  const double wy = 1.0 / (static_cast<double>(n) * y_scale * y_scale);
  const double wp = 1.0 / (policy.param_scale * policy.param_scale);
  auto metric_norm = [&](const std::vector<double>& t) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += wy * t[r] * t[r];
    return std::sqrt(s + wp * t[n] * t[n]);
  };

  Branch br;
  br.label = label;
  std::vector<double> y = start.y;
  double p = start_D_prime;
  br.points.push_back(make_point(system, Field{start.grid, y, 0.0}, p, policy.record_stability));

  LinearSolver solver(LinearSolverKind::SparseLU);
  // Initial tangent: Js z = -Fp, t = (z, 1).
  std::vector<double> t(n + 1);
  {
    auto Fp = system.parameter_derivative(y);
    Fp[system.pinned_row()] = 0.0;
    solver.factorize(system.steady_jacobian(y));
    for (auto& v : Fp) v = -v;
    const auto z = solver.solve(Fp);
    for (std::size_t r = 0; r < n; ++r) t[r] = z[r];
    t[n] = 1.0;
    const double nt = metric_norm(t);
    for (auto& v : t) v *= direction / nt;
  }

  double ds = policy.initial;
  double s = 0.0;
  while (static_cast<int>(br.points.size()) < policy.max_points) {
    // Predictor.
    std::vector<double> yn(n);
    for (std::size_t r = 0; r < n; ++r) yn[r] = y[r] + ds * t[r];
    double pn = p + ds * t[n];
    std::vector<double> row(n);
    for (std::size_t r = 0; r < n; ++r) row[r] = wy * t[r];
    const double corner = wp * t[n];

    bool ok = false;
    int iters = 0;
    std::vector<double> F;
    for (int it = 0; it < opt.newton_max_iter; ++it) {
      system.set_D_prime(pn);
      system.steady_residual(yn, F);
      double arc = corner * (pn - p) - ds;
      for (std::size_t r = 0; r < n; ++r) arc += row[r] * (yn[r] - y[r]);
      const double res = inf_norm(F) / std::max(1.0, inf_norm(yn));
      if (!std::isfinite(res)) break;
      if (res < opt.newton_tol && std::abs(arc) < 1e-10 * ds) {
        ok = true;
        iters = it;
        break;
      }
      auto Fp = system.parameter_derivative(yn);
      Fp[system.pinned_row()] = 0.0;
      try {
        solver.factorize(bordered(system.steady_jacobian(yn), Fp, row, corner));
      } catch (const NumericalFailure&) {
        break;
      }
      F.push_back(arc);
      for (auto& v : F) v = -v;
      const auto delta = solver.solve(F);
      for (std::size_t r = 0; r < n; ++r) yn[r] += delta[r];
      pn += delta[n];
    }
    if (!ok) {
      ds *= 0.5;
      if (ds < policy.min) {
        br.status = "step underflow";
        break;
      }
      continue;
    }
    // New tangent from the bordered system with the old tangent row: [Js Fp; t^T] t' = [0; 1].
    std::vector<double> tn(n + 1);
    {
      system.set_D_prime(pn);
      auto Fp = system.parameter_derivative(yn);
      Fp[system.pinned_row()] = 0.0;
      solver.factorize(bordered(system.steady_jacobian(yn), Fp, row, corner));
      std::vector<double> rhs(n + 1, 0.0);
      rhs[n] = 1.0;
      const auto z = solver.solve(rhs);
      for (std::size_t r = 0; r <= n; ++r) tn[r] = z[r];
      const double nt = metric_norm(tn);
      double align = wp * tn[n] * t[n];
      for (std::size_t r = 0; r < n; ++r) align += wy * tn[r] * t[r];
      const double sgn = align < 0.0 ? -1.0 : 1.0;
      for (auto& v : tn) v *= sgn / nt;
    }
    if (pn < D_lo || pn > D_hi) {
      br.status = "left parameter range";
      break;
    }
    if ((tn[n] > 0.0) != (t[n] > 0.0)) br.folds.push_back(br.points.size());
    s += ds;
    y = yn;
    p = pn;
    t = tn;
    auto pt = make_point(system, Field{start.grid, y, 0.0}, p, policy.record_stability);
    pt.s = s;
    br.points.push_back(std::move(pt));
    if (iters <= policy.target_newton_iters / 2) ds = std::min(policy.max, ds * 2.0);
    else if (iters > policy.target_newton_iters) ds = std::max(policy.min, ds * 0.5);
  }
  system.set_D_prime(p);
  return br;
}

PitchforkFit fit_b(const std::vector<std::pair<double, double>>& data, double D_hat, double rho_star,
                   double window_lo, double window_hi) {
  if (!(rho_star > 0.0)) throw PreconditionError("rho_star must be positive");
  std::vector<double> xs, ys;
  for (const auto& [D, dr] : data) {
    const double d = std::abs(D - D_hat);
    if (d >= window_lo && d <= window_hi && dr > 0.0) {
      xs.push_back(std::sqrt(d));
      ys.push_back(dr / rho_star);
    }
  }
  if (xs.size() < 6) throw PreconditionError("fit window holds fewer than 6 branch points");
  // Relative weights 1/y^2.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = 1.0 / (ys[i] * ys[i]);
    num += w * xs[i] * ys[i];
    den += w * xs[i] * xs[i];
  }
  PitchforkFit fit;
  fit.D_prime_bif_hat = D_hat;
  fit.b_hat = num / den;
  fit.window_lo = window_lo;
  fit.window_hi = window_hi;
  fit.n_points = static_cast<int>(xs.size());
  double rel = 0.0, ss_res = 0.0, ss_tot = 0.0, ymean = 0.0;
  for (double v : ys) ymean += v;
  ymean /= static_cast<double>(ys.size());
  double lx = 0.0, ly = 0.0, lxx = 0.0, lxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double model = fit.b_hat * xs[i];
    rel += (ys[i] - model) * (ys[i] - model) / (ys[i] * ys[i]);
    ss_res += (ys[i] - model) * (ys[i] - model);
    ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    const double X = std::log(xs[i] * xs[i]), Y = std::log(ys[i]);
    lx += X;
    ly += Y;
    lxx += X * X;
    lxy += X * Y;
  }
  const double m = static_cast<double>(xs.size());
  fit.fit_residual = std::sqrt(rel / m);
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  const double det = m * lxx - lx * lx;
  if (det > 0.0) {
    fit.free_exponent = (m * lxy - lx * ly) / det;
    fit.free_prefactor = std::exp((ly - fit.free_exponent * lx) / m);
  }
  return fit;
}

PitchforkFit fit_b(const Branch& branch, double D_hat, double rho_star, double window_lo, double window_hi) {
  std::vector<std::pair<double, double>> data;
  for (const auto& pt : branch.points) data.emplace_back(pt.D_prime, pt.delta_rho);
  return fit_b(data, D_hat, rho_star, window_lo, window_hi);
}

Branch sample_branch_for_fit(PdeSystem& system, const BifurcationPoint& bif, int direction, double b_guess,
                             double D_scale, const FitSamplingPolicy& policy) {
  if (policy.points < 2 || !(policy.lo > 0.0 && policy.lo < policy.hi))
    throw PreconditionError("fit sampling needs >= 2 points and 0 < lo < hi");
  if (!(b_guess > 0.0)) throw PreconditionError("b_guess must be positive");
  const double rho_star = system.params().rho_star;
  Branch br;
  br.label = direction > 0 ? BranchLabel::Plus : BranchLabel::Minus;
  double b_est = b_guess;
  std::shared_ptr<const Field> prev;
  double prev_amp = 0.0, prev_D = bif.D_prime;
  for (int i = 0; i < policy.points; ++i) {
    const double delta =
        D_scale * policy.lo * std::pow(policy.hi / policy.lo, static_cast<double>(i) / (policy.points - 1));
    // drho ~ 2 |amplitude| for a cos profile.
    const double amp = 0.5 * rho_star * b_est * std::sqrt(delta);
    PinnedSolution sol;
    if (!prev) {
      sol = switch_branch(system, bif, direction, amp, 100.0 * amp);
    } else {
      Field guess = *prev;
      const double r = amp / prev_amp;
      for (std::size_t k = 0; k < guess.y.size(); ++k)
        guess.y[k] = bif.uniform->y[k] + r * (prev->y[k] - bif.uniform->y[k]);
      const double D_guess = bif.D_prime + r * r * (prev_D - bif.D_prime);
      sol = solve_amplitude_pinned(system, guess, D_guess, direction * amp);
    }
    auto pt = make_point(system, sol.field, sol.D_prime, false);
    const double got = std::abs(sol.D_prime - bif.D_prime);
    if (got > 0.0 && pt.delta_rho > 0.0) b_est = pt.delta_rho / rho_star / std::sqrt(got);
    prev = pt.solution;
    prev_amp = std::abs(pt.rho_amplitude);
    prev_D = sol.D_prime;
    br.points.push_back(std::move(pt));
  }
  return br;
}

}  // namespace qsp

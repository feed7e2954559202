#include "qsp/stokes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "qsp/errors.hpp"

namespace qsp::stokes {

namespace {

std::complex<double> to_double(const complex_t& z) {
  return {static_cast<double>(z.real()), static_cast<double>(z.imag())};
}

complex_t to_mp(std::complex<double> z) { return complex_t(real_t(z.real()), real_t(z.imag())); }

}  // namespace

StokesContext StokesContext::from_series(const SeriesContext& ctx) {
  StokesContext s;
  s.lambda = ctx.lambda;
  s.k = ctx.k;
  s.forcing = ctx.rho_star * ctx.g1 * std::sqrt(std::pow(ctx.lambda, 3) / (2.0 * std::numbers::pi));
  s.h.resize(ctx.D.size());
  for (std::size_t m = 0; m < ctx.D.size(); ++m) s.h[m] = ctx.D[m] * ctx.k * ctx.k / ctx.lambda;
  return s;
}

StokesContext StokesContext::constant_motility(double lambda, double k, double D0, double forcing) {
  StokesContext s;
  s.lambda = lambda;
  s.k = k;
  s.forcing = forcing;
  s.h = {D0 * k * k / lambda};
  return s;
}

LateTermSequence::LateTermSequence(StokesContext ctx, int j_max, Seed seed, LateTermOptions options)
    : ctx_(std::move(ctx)), j_max_(j_max), seed_(seed), K_(options.offsets) {
  if (ctx_.h.empty() || !(ctx_.h0() > 0.0)) throw PreconditionError("h0 = D(u*) k^2 / lambda must be positive");
  if (!(ctx_.lambda > 0.0)) throw PreconditionError("lambda must be positive");
  if (j_max < 0 || K_ < 4) throw PreconditionError("late terms need j_max >= 0 and at least 4 offsets");
  if (seed_.start_order < 0 || seed_.start_order > j_max) throw PreconditionError("seed start order out of range");
  P_ = K_ / 2 + 3;
  const real_t lam = ctx_.lambda;
  const real_t h0 = ctx_.h0();
  auto hm = [&](int m) { return m < static_cast<int>(ctx_.h.size()) ? real_t(ctx_.h[m]) : real_t(0); };

  hom_.assign(K_ + 1, real_t(0));
  hom_[0] = 1;
  for (int k = 1; k <= K_; ++k) {
    real_t acc = 0;
    for (int m = 1; m <= k; ++m) acc += hm(m) * hom_[k - m];
    hom_[k] = -acc / k;
  }

  // Regular family.
  const int LB = 2 * j_max + K_ + 2;
  smooth_.resize(j_max + 1);
  for (int j = 0; j <= j_max; ++j) {
    const int len = LB - 2 * j + 1;
    auto& b = smooth_[j];
    b.assign(len, real_t(0));
    for (int l = 0; l < len; ++l) {
      real_t rhs = 0;
      if (j == 0) {
        if (l == 1) rhs = real_t(seed_.smooth_weight) * real_t(ctx_.forcing);
      } else {
        rhs = real_t((l + 2) * (l + 1)) * smooth_[j - 1][l + 2];
      }
      for (int m = 1; m <= l; ++m) rhs -= lam * hm(m) * b[l - m];
      b[l] = rhs / (lam * (real_t(l) + h0));
    }
  }

  // Singular family from start_order on.
  if (seed_.pole_amplitude != 0.0) {
    const int levels = j_max - seed_.start_order + 1;
    sing_.assign(levels, std::vector<real_t>(static_cast<std::size_t>(K_ + 1) * P_, real_t(0)));
    for (int k = 0; k <= K_; ++k) sing_[0][k * P_] = real_t(seed_.pole_amplitude) * hom_[k];
    std::vector<real_t> f(static_cast<std::size_t>(K_ + 1) * P_);
    for (int n = 1; n < levels; ++n) {
      const auto& prev = sing_[n - 1];
      auto& c = sing_[n];
      for (int k = 0; k <= K_; ++k) {
        const real_t a = real_t(k - 2 * (n - 1)) - h0;
        for (int p = 0; p < P_; ++p) {
          real_t v = a * (a - 1) * prev[k * P_ + p];
          if (p + 1 < P_) v += real_t(p + 1) * (2 * a - 1) * prev[k * P_ + p + 1];
          if (p + 2 < P_) v += real_t((p + 2) * (p + 1)) * prev[k * P_ + p + 2];
          f[k * P_ + p] = v;
        }
      }
      for (int k = 0; k <= K_; ++k) {
        const int shift = k - 2 * n;
        auto R = [&](int p) {
          real_t r = f[k * P_ + p];
          for (int m = 1; m <= k; ++m) r -= lam * hm(m) * c[(k - m) * P_ + p];
          return r;
        };
        if (shift != 0) {
          for (int p = P_ - 1; p >= 0; --p) {
            real_t r = R(p);
            if (p + 1 < P_) r -= lam * real_t(p + 1) * c[k * P_ + p + 1];
            c[k * P_ + p] = r / (lam * shift);
          }
        } else {
          // Resonance: the free multiple of q_h is set to zero, logs absorb the rest.
          c[k * P_] = 0;
          for (int p = 0; p + 1 < P_; ++p) c[k * P_ + p + 1] = R(p) / (lam * real_t(p + 1));
          if (R(P_ - 1) != 0) throw NumericalFailure("log power table too small for late-term recursion");
        }
      }
    }
  }
}

complex_t LateTermSequence::homogeneous(const complex_t& s) const {
  const complex_t L = log(s);
  complex_t acc(0);
  for (int k = K_; k >= 0; --k) acc = acc * s + complex_t(hom_[k]);
  return acc * exp(complex_t(-real_t(ctx_.h0())) * L);
}

complex_t LateTermSequence::eval_singular(int j, const complex_t& s, int d) const {
  const int n = j - seed_.start_order;
  if (sing_.empty() || n < 0) return complex_t(0);
  std::vector<real_t> c = sing_[n];
  const real_t h0 = ctx_.h0();
  for (int q = 0; q < d; ++q) {
    std::vector<real_t> nc(c.size(), real_t(0));
    for (int k = 0; k <= K_; ++k) {
      const real_t E = real_t(k - 2 * n - q) - h0;
      for (int p = 0; p < P_; ++p) {
        real_t v = E * c[k * P_ + p];
        if (p + 1 < P_) v += real_t(p + 1) * c[k * P_ + p + 1];
        nc[k * P_ + p] = v;
      }
    }
    c.swap(nc);
  }
  const complex_t L = log(s);
  complex_t acc(0);
  for (int k = K_; k >= 0; --k) {
    complex_t inner(0);
    for (int p = P_ - 1; p >= 0; --p) inner = inner * L + complex_t(c[k * P_ + p]);
    acc = acc * s + inner;
  }
  return acc * exp(complex_t(real_t(-2 * n - d) - h0) * L);
}

complex_t LateTermSequence::eval_smooth(int j, const complex_t& s, int d) const {
  const auto& b = smooth_[j];
  complex_t acc(0);
  const int len = static_cast<int>(b.size());
  for (int l = len - 1; l >= d; --l) {
    real_t coef = b[l];
    for (int q = 0; q < d; ++q) coef *= (l - q);
    acc = acc * s + complex_t(coef);
  }
  return acc;
}

complex_t LateTermSequence::value(int j, const complex_t& s, int derivative) const {
  if (j < 0 || j > j_max_) throw DomainError("late term index out of range");
  if (derivative < 0 || derivative > 2) throw DomainError("late term derivative order must be 0, 1 or 2");
  return eval_singular(j, s, derivative) + eval_smooth(j, s, derivative);
}

std::complex<double> LateTermSequence::value_double(int j, std::complex<double> s) const {
  return to_double(value(j, to_mp(s)));
}

std::complex<double> LateTermSequence::ratio(int j, std::complex<double> s) const {
  const complex_t S = to_mp(s);
  const complex_t a = value(j, S);
  if (a == complex_t(0)) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  return to_double(value(j + 1, S) / a);
}

double LateTermSequence::log_abs(int j, std::complex<double> s) const {
  const complex_t z = value(j, to_mp(s));
  const real_t m = abs(z);
  if (m == 0) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(log(m));
}

LateTermSequence generate_late_terms(const StokesContext& ctx, int j_max, const Seed& seed,
                                     const LateTermOptions& options) {
  return LateTermSequence(ctx, j_max, seed, options);
}

SingulantFit estimate_singulant(const LateTermSequence& seq, std::complex<double> s, int j_lo, int j_hi) {
  if (j_hi > seq.j_max() || j_lo < 1 || j_hi - j_lo < 5)
    throw PreconditionError("singulant fit needs 1 <= j_lo, j_hi <= j_max and at least 5 ratios");
  if (j_hi < 20) throw PreconditionError("singulant fit needs at least 20 late terms");
  const int n = j_hi - j_lo;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd yr(n), yi(n);
  double scale = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = j_lo + i;
    const auto R = seq.ratio(j, s);
    if (!std::isfinite(R.real()) || !std::isfinite(R.imag())) throw NotDivergent("late terms vanish");
    X(i, 0) = j;
    X(i, 1) = 1.0;
    X(i, 2) = 1.0 / j;
    yr(i) = R.real();
    yi(i) = R.imag();
    scale = std::max(scale, std::abs(R));
  }
  const auto qr = X.colPivHouseholderQr();
  const Eigen::Vector3d cr = qr.solve(yr), ci = qr.solve(yi);
  const std::complex<double> A(cr(0), ci(0)), B(cr(1), ci(1)), C(cr(2), ci(2));
  double res = 0.0, tot = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::complex<double> model = A * X(i, 0) + B + C * X(i, 2);
    const std::complex<double> y(yr(i), yi(i));
    res += std::norm(y - model);
    tot += std::norm(y);
  }
  SingulantFit fit;
  fit.j_lo = j_lo;
  fit.j_hi = j_hi;
  fit.residual = std::sqrt(res / tot);
  if (std::abs(A) * j_hi < 0.5 * scale || fit.residual > 0.1)
    throw NotDivergent("late-term ratios do not grow linearly in j");
  fit.v_hat = 1.0 / (seq.context().lambda * A);
  fit.gamma_hat = B / A - 1.0;
  fit.c_coefficient = C;
  return fit;
}

LateTermStudy study_late_terms(const LateTermSequence& seq, std::complex<double> s, int j_lo, int j_hi) {
  LateTermStudy st;
  st.s = s;
  st.j_lo = j_lo;
  st.j_hi = j_hi;
  st.h0 = seq.context().h0();
  for (int j = 0; j <= j_hi; ++j) st.log_abs_q.push_back(seq.log_abs(j, s));
  for (int j = 0; j < j_hi; ++j) st.ratio.push_back(seq.ratio(j, s));
  st.fit = estimate_singulant(seq, s, j_lo, j_hi);
  st.v_expected = -s * s / 2.0;
  st.gamma_expected = st.h0 - 1.5;
  return st;
}

int optimal_truncation_index(double lambda, double r, double epsilon, int N0) {
  if (!(epsilon > 0.0) || !(r > 0.0)) throw PreconditionError("optimal truncation needs eps > 0 and r > 0");
  return static_cast<int>(std::lround(lambda * r * r / (2.0 * epsilon))) + N0;
}

TruncationProfile optimal_truncation(const LateTermSequence& seq, double r, double epsilon, int N0) {
  TruncationProfile tp;
  tp.epsilon = epsilon;
  tp.r = r;
  tp.N_opt = optimal_truncation_index(seq.context().lambda, r, epsilon, N0);
  if (tp.N_opt < 3) throw PreconditionError("epsilon too large: optimal truncation index below 3");
  if (tp.N_opt + 3 > seq.j_max()) throw PreconditionError("late-term sequence too short for the truncation index");
  const double le = std::log(epsilon);
  tp.log_min_term = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= seq.j_max(); ++j) {
    const double t = j * le + seq.log_abs(j, {r, 0.0});
    tp.log_terms.push_back(t);
    if (j >= 1 && t < tp.log_min_term) {
      tp.log_min_term = t;
      tp.N_empirical = j;
    }
  }
  tp.log_term_at_N = tp.log_terms[tp.N_opt];
  tp.near_minimal = tp.log_term_at_N - tp.log_min_term <= std::log(2.0);
  return tp;
}

RemainderScaling remainder_scaling(const LateTermSequence& seq, double r, const std::vector<double>& epsilon) {
  if (epsilon.size() < 4) throw PreconditionError("remainder scaling needs at least 4 epsilon values");
  RemainderScaling rs;
  rs.epsilon = epsilon;
  const int n = static_cast<int>(epsilon.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const auto tp = optimal_truncation(seq, r, epsilon[i]);
    if (tp.N_empirical >= seq.j_max() - 1) throw PreconditionError("minimal term not interior to the sequence");
    rs.log_min_term.push_back(tp.log_min_term);
    X(i, 0) = 1.0 / epsilon[i];
    X(i, 1) = std::log(epsilon[i]);
    X(i, 2) = 1.0;
    y(i) = tp.log_min_term;
  }
  const Eigen::Vector3d c = X.colPivHouseholderQr().solve(y);
  rs.slope = c(0);
  rs.power = c(1);
  rs.expected_slope = -seq.context().lambda * r * r / 2.0;
  rs.relative_error = std::abs(rs.slope - rs.expected_slope) / std::abs(rs.expected_slope);
  return rs;
}

std::vector<double> erf_switching(double lambda, double r, double epsilon, const std::vector<double>& theta,
                                  double S_const) {
  const double a = std::sqrt(lambda / epsilon) * r;
  std::vector<double> out;
  out.reserve(theta.size());
  for (double t : theta) out.push_back(S_const - std::erf(a * (std::numbers::pi / 2.0 - t)));
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SmoothingProfile stokes_smoothing_profile(const LateTermSequence& seq, double r, double epsilon,
                                          const std::vector<double>& theta) {
  const double half_pi = std::numbers::pi / 2.0;
  if (theta.size() < 3 || theta.front() >= half_pi || theta.back() <= half_pi)
    throw PreconditionError("theta grid must straddle pi/2");
  if (!std::is_sorted(theta.begin(), theta.end())) throw PreconditionError("theta grid must be increasing");
  const auto& ctx = seq.context();
  SmoothingProfile sp;
  sp.epsilon = epsilon;
  sp.r = r;
  sp.theta = theta;
  sp.N = optimal_truncation_index(ctx.lambda, r, epsilon);
  if (sp.N < 3) throw PreconditionError("epsilon too large: optimal truncation index below 3");
  if (sp.N - 1 > seq.j_max()) throw PreconditionError("late-term sequence too short for the truncation index");

  const real_t eps_N = pow(real_t(epsilon), sp.N);
  const real_t lam = ctx.lambda;
  const complex_t I(real_t(0), real_t(1));
  auto integrand = [&](double th) {
    const complex_t s = complex_t(real_t(r * std::cos(th)), real_t(r * std::sin(th)));
    const complex_t q2 = seq.value(sp.N - 1, s, 2);
    const complex_t dSdu = -complex_t(eps_N / lam) * q2 * seq.homogeneous(s) *
                           exp(-complex_t(lam / (2 * real_t(epsilon))) * s * s);
    return dSdu * I * s;
  };
  // Four-point Gauss-Legendre per interval.
  static const double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static const double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
  std::vector<complex_t> S(theta.size(), complex_t(0));
  for (std::size_t i = 1; i < theta.size(); ++i) {
    const double a = theta[i - 1], b = theta[i];
    complex_t acc(0);
    for (int q = 0; q < 4; ++q) acc += complex_t(real_t(gw[q])) * integrand(0.5 * (a + b) + 0.5 * (b - a) * gx[q]);
    S[i] = S[i - 1] + acc * complex_t(real_t(0.5 * (b - a)));
  }
  const complex_t jump = S.back() - S.front();
  if (jump == complex_t(0)) throw NumericalFailure("no switching measured across the theta grid");
  const auto pred_raw = erf_switching(ctx.lambda, r, epsilon, theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto z = to_double((S[i] - S.front()) / jump);
    sp.measured_raw.push_back(z);
    sp.measured.push_back(z.real());
    sp.predicted.push_back((pred_raw[i] - pred_raw.front()) / (pred_raw.back() - pred_raw.front()));
  }
  sp.correlation = pearson(sp.measured, sp.predicted);
  return sp;
}

}  // namespace qsp::stokes

#pragma once

#include <complex>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_complex.hpp>

#include "qsp/series.hpp"

namespace qsp::stokes {

using real_t = boost::multiprecision::cpp_bin_float_50;
using complex_t = boost::multiprecision::cpp_complex_50;

/// Data of lambda s q_j' + lambda h(u) q_j = q_{j-1}'' with s = u - u*,
/// h = D(u) k^2 / lambda expanded as sum_m h_m s^m.
struct StokesContext {
  double lambda = 1.0;
  double k = 0.0;
  double forcing = 0.0;  // right-hand side of the j = 0 equation is forcing * s
  std::vector<double> h;

  double h0() const { return h.at(0); }

  static StokesContext from_series(const SeriesContext& ctx);
  static StokesContext constant_motility(double lambda, double k, double D0, double forcing);
};

struct Seed {
  /// Multiple of the homogeneous solution q_h ~ s^{-h0} added at start_order.
  double pole_amplitude = 0.0;
  /// Multiple of the smooth particular solution at j = 0.
  double smooth_weight = 1.0;
  int start_order = 0;

  static Seed smooth() { return Seed{0.0, 1.0, 0}; }
  static Seed singular_pole(double amplitude = 1.0, int start_order = 0) { return Seed{amplitude, 1.0, start_order}; }
};

struct LateTermOptions {
  /// Laurent terms kept per order beyond the leading pole.
  int offsets = 80;
};

/// q_0 .. q_{j_max} held exactly as
///   q_j = sum_{k,p} a_{jkp} s^{k - 2(j - j0) - h0} (log s)^p + sum_l b_{jl} s^l
/// in 50-digit arithmetic (principal branch of log s).
class LateTermSequence {
 public:
  LateTermSequence(StokesContext ctx, int j_max, Seed seed, LateTermOptions options = {});

  int j_max() const { return j_max_; }
  const StokesContext& context() const { return ctx_; }
  const Seed& seed() const { return seed_; }

  /// d-th derivative (d <= 2) of q_j at offset s.
  complex_t value(int j, const complex_t& s, int derivative = 0) const;
  std::complex<double> value_double(int j, std::complex<double> s) const;
  /// q_{j+1}(s) / q_j(s).
  std::complex<double> ratio(int j, std::complex<double> s) const;
  /// Natural log of |q_j(s)|.
  double log_abs(int j, std::complex<double> s) const;
  /// Homogeneous solution normalized to s^{-h0} (1 + O(s)).
  complex_t homogeneous(const complex_t& s) const;

 private:
  complex_t eval_singular(int j, const complex_t& s, int derivative) const;
  complex_t eval_smooth(int j, const complex_t& s, int derivative) const;

  StokesContext ctx_;
  int j_max_;
  Seed seed_;
  int K_;
  int P_;
  // sing_[j - j0][k * P_ + p]
  std::vector<std::vector<real_t>> sing_;
  std::vector<std::vector<real_t>> smooth_;
  std::vector<real_t> hom_;
};

LateTermSequence generate_late_terms(const StokesContext& ctx, int j_max, const Seed& seed,
                                     const LateTermOptions& options = {});

struct SingulantFit {
  std::complex<double> v_hat;
  std::complex<double> gamma_hat;
  std::complex<double> c_coefficient;
  double residual = 0.0;  // relative RMS misfit of the ratio model
  int j_lo = 0;
  int j_hi = 0;
};

/// Least squares of q_{j+1}/q_j = (j + gamma + 1) / (lambda v) + c / j over
/// j_lo <= j < j_hi. Throws NotDivergent when the ratio does not grow linearly.
SingulantFit estimate_singulant(const LateTermSequence& seq, std::complex<double> s, int j_lo, int j_hi);

struct LateTermStudy {
  std::complex<double> s;
  int j_lo = 0;
  int j_hi = 0;
  double h0 = 0.0;
  std::vector<double> log_abs_q;           // j = 0 .. j_hi
  std::vector<std::complex<double>> ratio; // j = 0 .. j_hi - 1
  SingulantFit fit;
  std::complex<double> v_expected;
  double gamma_expected = 0.0;
};

LateTermStudy study_late_terms(const LateTermSequence& seq, std::complex<double> s, int j_lo, int j_hi);

struct TruncationProfile {
  double epsilon = 0.0;
  double r = 0.0;
  int N_opt = 0;
  int N_empirical = 0;
  std::vector<double> log_terms;  // log |eps^j q_j(u* + r)|
  double log_min_term = 0.0;
  double log_term_at_N = 0.0;
  bool near_minimal = false;  // term at N_opt within a factor 2 of the minimum
};

int optimal_truncation_index(double lambda, double r, double epsilon, int N0 = 0);
TruncationProfile optimal_truncation(const LateTermSequence& seq, double r, double epsilon, int N0 = 0);

struct RemainderScaling {
  std::vector<double> epsilon;
  std::vector<double> log_min_term;
  double slope = 0.0;           // coefficient of 1/eps
  double expected_slope = 0.0;  // -lambda r^2 / 2
  double power = 0.0;           // nuisance coefficient of log eps
  double relative_error = 0.0;
};

/// Fits log(min_j |eps^j q_j|) = slope / eps + power log eps + const.
RemainderScaling remainder_scaling(const LateTermSequence& seq, double r, const std::vector<double>& epsilon);

/// S - erf(sqrt(lambda / eps) r (pi/2 - theta)).
std::vector<double> erf_switching(double lambda, double r, double epsilon, const std::vector<double>& theta,
                                  double S_const = 0.0);

struct SmoothingProfile {
  double epsilon = 0.0;
  double r = 0.0;
  int N = 0;
  std::vector<double> theta;
  std::vector<double> predicted;  // erf profile rescaled to run 0 -> 1 over the grid
  std::vector<double> measured;   // switching multiplier rescaled the same way
  std::vector<std::complex<double>> measured_raw;
  double correlation = 0.0;
};

/// Integrates dS/du = -eps^N q_{N-1}'' q_h exp(-lambda s^2 / (2 eps)) / lambda
/// along u = u* + r e^{i theta} with the exact late terms and compares the
/// accumulated switching multiplier with the error-function profile.
SmoothingProfile stokes_smoothing_profile(const LateTermSequence& seq, double r, double epsilon,
                                          const std::vector<double>& theta);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace qsp::stokes

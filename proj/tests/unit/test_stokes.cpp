#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "qsp/errors.hpp"
#include "qsp/stokes.hpp"
#include "qsp/wna.hpp"

using namespace qsp;
using namespace qsp::stokes;
using cplx = std::complex<double>;

namespace {

struct Setup {
  BaseState base;
  double D0 = 0.0;
  SeriesContext series;
  StokesContext ctx;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup out;
    out.base = make_base_state(ModelParams{});
    out.D0 = wna_report(out.base).D_prime_critical;
    out.series = SeriesContext::make(out.base, Wavenumber::mode(1, out.base.params.L), out.D0);
    out.ctx = StokesContext::from_series(out.series);
    return out;
  }();
  return s;
}

cplx to_cplx(const complex_t& z) { return {static_cast<double>(z.real()), static_cast<double>(z.imag())}; }

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("late terms satisfy the recursion with the exact tanh motility at complex s") {
  const auto& S = setup();
  const auto seq = generate_late_terms(S.ctx, 10, Seed::singular_pole(0.7));
  const auto motility = S.base.params.motility.with_slope(S.D0);
  const double k2 = S.ctx.k * S.ctx.k;
  for (cplx s : {cplx(0.3, 0.1), cplx(-0.2, 0.25), std::polar(0.4, 2.5)}) {
    const complex_t sz(s.real(), s.imag());
    const cplx D = qsp::testing::motility_complex(motility, S.series.u_star + s);
    for (int j = 0; j <= 10; ++j) {
      const cplx q = to_cplx(seq.value(j, sz));
      const cplx dq = to_cplx(seq.value(j, sz, 1));
      const cplx lhs = S.ctx.lambda * s * dq + D * k2 * q;
      const cplx rhs = j == 0 ? S.ctx.forcing * s : to_cplx(seq.value(j - 1, sz, 2));
      const double scale = std::abs(S.ctx.lambda * s * dq) + std::abs(rhs);
      CHECK(std::abs(lhs - rhs) < 1e-10 * scale);
    }
  }
}

TEST_CASE("derivatives and the homogeneous normalization") {
  const auto& S = setup();
  const auto seq = generate_late_terms(S.ctx, 6, Seed::singular_pole());
  const cplx s(0.35, 0.2);
  const double h = 1e-5;
  for (int j : {0, 3, 6}) {
    auto v = [&](cplx z) { return to_cplx(seq.value(j, complex_t(z.real(), z.imag()))); };
    const cplx fd = (v(s + h) - v(s - h)) / (2 * h);
    CHECK(std::abs(to_cplx(seq.value(j, complex_t(s.real(), s.imag()), 1)) - fd) < 1e-7 * std::abs(fd));
    CHECK(std::abs(seq.value_double(j, s) - v(s)) < 1e-14 * std::abs(v(s)));
  }
  const double tiny = 1e-8;
  const cplx hom = to_cplx(seq.homogeneous(complex_t(tiny, 0.0)));
  CHECK(std::abs(hom * std::pow(tiny, S.ctx.h0()) - 1.0) < 1e-6);
}

TEST_CASE("constant motility: smooth late terms reduce to the terminating series") {
  const auto& S = setup();
  auto sc = S.series;
  const double d0 = sc.d(0);
  sc.D.assign(sc.D.size(), 0.0);
  sc.D[0] = d0;
  const auto ctx = StokesContext::from_series(sc);
  const auto seq = generate_late_terms(ctx, 24, Seed::smooth());
  const auto q = q_table(sc, 4, 8);
  for (double s : {0.1, 0.3, -0.4}) {
    for (int j = 0; j <= 4; ++j) {
      const double row = j == 0 ? eval_series(q, sc.u_star + s, 0, 8, 1.0).value : 0.0;
      double table = 0.0;
      for (int l = 0; l <= 8; ++l) table += q.at(j, l) * std::pow(s, l);
      CHECK(table == doctest::Approx(row).scale(1e-14));
      CHECK(std::abs(seq.value_double(j, s) - table) < 1e-13 * (1.0 + std::abs(table)));
    }
  }
  CHECK_THROWS_AS(estimate_singulant(seq, {0.5, 0.0}, 10, 24), NotDivergent);
}

TEST_CASE("singular seed: singulant and prefactor exponent") {
  const auto& S = setup();
  const auto seq = generate_late_terms(S.ctx, 61, Seed::singular_pole());
  const auto at40 = study_late_terms(seq, {0.5, 0.0}, 20, 40);
  CHECK(std::abs(at40.fit.v_hat - at40.v_expected) < 0.02 * std::abs(at40.v_expected));
  const auto at60 = study_late_terms(seq, {0.5, 0.0}, 30, 60);
  CHECK(std::abs(at60.fit.gamma_hat - at60.gamma_expected) < 0.05 * std::abs(at60.gamma_expected));
  CHECK(at60.gamma_expected == doctest::Approx(S.ctx.h0() - 1.5));

  SUBCASE("ratio grows linearly in j") {
    const double r30 = std::abs(at60.ratio[30]), r59 = std::abs(at60.ratio[59]);
    CHECK(r59 / r30 == doctest::Approx(60.0 / 31.0).epsilon(0.1));
  }
  SUBCASE("doubling s quadruples the singulant") {
    const auto small = study_late_terms(seq, {0.25, 0.0}, 20, 40);
    CHECK(std::abs(at40.fit.v_hat) / std::abs(small.fit.v_hat) == doctest::Approx(4.0).epsilon(0.02));
  }
  SUBCASE("pole strength does not matter") {
    const auto weak = generate_late_terms(S.ctx, 41, Seed::singular_pole(0.05));
    const auto st = study_late_terms(weak, {0.5, 0.0}, 20, 40);
    CHECK(std::abs(st.fit.v_hat - at40.fit.v_hat) < 1e-3 * std::abs(at40.fit.v_hat));
  }
  SUBCASE("a seed started later shifts the index") {
    const auto late = generate_late_terms(S.ctx, 61, Seed::singular_pole(1.0, 2));
    const auto st = study_late_terms(late, {0.5, 0.0}, 30, 60);
    CHECK(std::abs(st.fit.v_hat - st.v_expected) < 0.02 * std::abs(st.v_expected));
    CHECK(std::abs(st.fit.gamma_hat + 2.0 - st.gamma_expected) < 0.10 * std::abs(st.gamma_expected));
  }
  SUBCASE("with the tanh motility the smooth seed also diverges") {
    const auto smooth = generate_late_terms(S.ctx, 41, Seed::smooth());
    const double r20 = std::abs(smooth.ratio(20, {0.5, 0.0})), r39 = std::abs(smooth.ratio(39, {0.5, 0.0}));
    MESSAGE("smooth ratios " << r20 << " " << r39);
    CHECK(r39 > 1.5 * r20);
  }
}

TEST_CASE("optimal truncation") {
  const auto& S = setup();
  CHECK(optimal_truncation_index(1.0, 0.5, 0.005) == 25);
  CHECK(optimal_truncation_index(1.0, 0.5, 0.005, 3) == 28);
  CHECK_THROWS_AS(optimal_truncation_index(1.0, 0.5, 0.0), PreconditionError);
  const auto seq = generate_late_terms(S.ctx, 70, Seed::singular_pole());
  const auto a = optimal_truncation(seq, 0.5, 0.005);
  const auto b = optimal_truncation(seq, 0.5, 0.0025);
  CHECK(std::abs(b.N_opt - 2 * a.N_opt) <= 1);
  for (const auto& tp : {a, b}) {
    CHECK(std::abs(tp.N_empirical - tp.N_opt) <= 2);
    CHECK(tp.near_minimal);
  }
  CHECK_THROWS_AS(optimal_truncation(seq, 0.5, 0.001), PreconditionError);

  const auto rs = remainder_scaling(seq, 0.5, {0.02, 0.015, 0.01, 0.0075, 0.005, 0.004, 0.003, 0.0025});
  CHECK(rs.expected_slope == doctest::Approx(-0.125));
  CHECK(std::abs(rs.slope - rs.expected_slope) < 0.1 * std::abs(rs.expected_slope));
}

TEST_CASE("error-function switching") {
  const auto th = std::vector<double>{0.2, std::numbers::pi / 2, 2.9};
  const auto v = erf_switching(1.0, 0.5, 1e-3, th, 1.0);
  CHECK(v[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[2] == doctest::Approx(2.0));
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("Stokes smoothing follows the error function and its width scales with sqrt(eps)") {
  const auto& S = setup();
  const auto th = linspace(std::numbers::pi / 2 - 0.5, std::numbers::pi / 2 + 0.5, 201);
  auto width = [&](const std::vector<double>& v) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (a == 0.0 && (v[i - 1] - 0.25) * (v[i] - 0.25) <= 0) a = th[i];
      if (b == 0.0 && (v[i - 1] - 0.75) * (v[i] - 0.75) <= 0) b = th[i];
    }
    return std::abs(b - a);
  };
  std::vector<double> widths;
  for (double eps : {4e-3, 1e-3}) {
    const int need = optimal_truncation_index(S.ctx.lambda, 0.5, eps) + 4;
    const auto seq = generate_late_terms(S.ctx, need, Seed::singular_pole());
    const auto sp = stokes_smoothing_profile(seq, 0.5, eps, th);
    CHECK(sp.correlation > 0.99);
    CHECK(sp.measured.front() == doctest::Approx(0.0).scale(1.0).epsilon(0.02));
    CHECK(sp.measured.back() == doctest::Approx(1.0).epsilon(0.02));
    widths.push_back(width(sp.measured));
  }
  CHECK(widths[0] / widths[1] == doctest::Approx(2.0).epsilon(0.2));
}

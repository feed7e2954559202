#include "qsp/series.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include "qsp/errors.hpp"

namespace qsp {

double SeriesContext::d(int m) const {
  if (m < 0 || m >= static_cast<int>(D.size())) {
    throw DomainError("SeriesContext: motility Taylor coefficient " + std::to_string(m) + " not stored");
  }
  return D[m];
}

SeriesContext SeriesContext::with_k(double k_new) const {
  SeriesContext out = *this;
  out.k = k_new;
  return out;
}

SeriesContext SeriesContext::make(const BaseState& base, const Wavenumber& k, double D_prime,
                                  int taylor_terms) {
  const auto& p = base.params;
  SeriesContext ctx;
  ctx.k = k.value();
  ctx.lambda = p.lambda;
  ctx.rho_star = p.rho_star;
  ctx.alpha0 = p.alpha0;
  ctx.u_star = base.steady.u_star;
  ctx.g1 = derivatives_of_g(p.production, base.steady.c_star, 1);
  ctx.g2 = derivatives_of_g(p.production, base.steady.c_star, 2);
  ctx.D = motility_taylor_normalized(p.motility.with_slope(D_prime), ctx.u_star, taylor_terms - 1);
  return ctx;
}

std::string to_string(SeriesKind kind) {
  switch (kind) {
    case SeriesKind::Q:
      return "q";
    case SeriesKind::W:
      return "w";
    case SeriesKind::Wtilde:
      return "wtilde";
    case SeriesKind::S:
      return "s";
  }
  return "?";
}

int row_length(int j, int j_max, int l_max) { return l_max + 1 + 2 * (j_max - j); }

SeriesTable::SeriesTable(SeriesKind kind, int j_max, int l_max, SeriesContext ctx,
                         std::vector<std::vector<double>> rows, double c22)
    : kind_(kind), j_max_(j_max), l_max_(l_max), ctx_(std::move(ctx)), rows_(std::move(rows)), c22_(c22) {}

bool SeriesTable::available(int j, int l) const {
  return j >= 0 && j <= j_max_ && l >= 0 && l < static_cast<int>(rows_[j].size());
}

double SeriesTable::at(int j, int l) const {
  if (!available(j, l)) {
    throw DomainError("series table " + to_string(kind_) + ": entry (j=" + std::to_string(j) +
                      ", l=" + std::to_string(l) + ") not available");
  }
  return rows_[j][l];
}

namespace {

void check_dims(int j_max, int l_max) {
  if (j_max < 0 || l_max < 0) throw DomainError("series table: j_max and l_max must be >= 0");
}

// (D0 k^2 + l lambda) y_l = (l+1)(l+2) prev_{l+2} - k^2 sum_{m=1}^{l} D_m y_{l-m} + F_l
std::vector<double> solve_row(const SeriesContext& ctx, const std::vector<double>* prev,
                              const std::vector<double>& forcing) {
  const int n = static_cast<int>(forcing.size());
  const double k2 = ctx.k * ctx.k;
  std::vector<double> y(n, 0.0);
  for (int l = 0; l < n; ++l) {
    double rhs = forcing[l];
    if (prev) rhs += (l + 1.0) * (l + 2.0) * (*prev)[l + 2];
    double conv = 0.0;
    for (int m = 1; m <= l; ++m) conv += ctx.d(m) * y[l - m];
    rhs -= k2 * conv;
    const double denom = ctx.d(0) * k2 + l * ctx.lambda;
    if (!(denom > 0.0)) throw NumericalFailure("series recursion: non-positive denominator");
    y[l] = rhs / denom;
  }
  return y;
}

double gaussian_weight(const SeriesContext& ctx) {
  return std::sqrt(ctx.lambda * ctx.lambda * ctx.lambda / (2.0 * std::numbers::pi));
}

std::vector<std::vector<double>> w_rows(const SeriesContext& ctx, int j_max, int l_max) {
  std::vector<std::vector<double>> rows;
  for (int j = 0; j <= j_max; ++j) {
    std::vector<double> f(row_length(j, j_max, l_max), 0.0);
    if (j == 0) {
      f[0] = ctx.alpha0 * ctx.u_star;
      if (f.size() > 1) f[1] = ctx.alpha0;
    }
    rows.push_back(solve_row(ctx, j ? &rows.back() : nullptr, f));
  }
  return rows;
}

}  // namespace

SeriesTable q_table(const SeriesContext& ctx, int j_max, int l_max) {
  check_dims(j_max, l_max);
  std::vector<std::vector<double>> rows;
  for (int j = 0; j <= j_max; ++j) {
    std::vector<double> f(row_length(j, j_max, l_max), 0.0);
    if (j == 0 && f.size() > 1) f[1] = ctx.rho_star * ctx.g1 * gaussian_weight(ctx);
    rows.push_back(solve_row(ctx, j ? &rows.back() : nullptr, f));
  }
  return SeriesTable(SeriesKind::Q, j_max, l_max, ctx, std::move(rows));
}

SeriesTable w_table(const SeriesContext& ctx, int j_max, int l_max, int k_multiplier) {
  check_dims(j_max, l_max);
  if (k_multiplier != 1 && k_multiplier != 2) throw DomainError("w_table: k_multiplier must be 1 or 2");
  const auto kind = k_multiplier == 1 ? SeriesKind::W : SeriesKind::Wtilde;
  const auto local = ctx.with_k(k_multiplier * ctx.k);
  return SeriesTable(kind, j_max, l_max, ctx, w_rows(local, j_max, l_max));
}

SeriesTable s_table(const SeriesContext& ctx, const SeriesTable& q, double c22, int j_max, int l_max) {
  check_dims(j_max, l_max);
  if (q.kind() != SeriesKind::Q) throw DomainError("s_table: expected a q table");
  if (q.j_max() < j_max || q.l_max() < l_max) {
    throw DomainError("s_table: q table too shallow for the requested s table");
  }
  const double half_g1 = 0.5 * ctx.g1;
  const double pulse = ctx.rho_star * gaussian_weight(ctx) * (ctx.g1 * c22 + 0.25 * ctx.g2);
  const auto local = ctx.with_k(2.0 * ctx.k);
  std::vector<std::vector<double>> rows;
  for (int j = 0; j <= j_max; ++j) {
    const int n = row_length(j, j_max, l_max);
    std::vector<double> f(n, 0.0);
    for (int l = 1; l < n; ++l) {
      if (j == 0) {
        f[l] = half_g1 * ctx.lambda * q.at(0, l - 1);
      } else {
        f[l] = -half_g1 * ((l + 1.0) * q.at(j - 1, l + 1) - ctx.lambda * q.at(j, l - 1));
      }
    }
    if (j >= 1) f[0] = -half_g1 * q.at(j - 1, 1);
    if (j == 1 && n > 1) f[1] += pulse;
    rows.push_back(solve_row(local, j ? &rows.back() : nullptr, f));
  }
  return SeriesTable(SeriesKind::S, j_max, l_max, ctx, std::move(rows), c22);
}

namespace {

using Poly = std::vector<double>;

Poly poly_derivative(const Poly& p) {
  if (p.size() <= 1) return {};
  Poly d(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
  return d;
}

Poly poly_shift_up(const Poly& p) {
  Poly out(p.size() + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) out[i + 1] = p[i];
  return out;
}

Poly truncated(Poly p, std::size_t n) {
  p.resize(n, 0.0);
  return p;
}

// Coefficients of lambda s y' + D(u) k^2 y for unknown y, first n powers.
using Mp = boost::multiprecision::cpp_bin_float_50;
using MatrixMp = Eigen::Matrix<Mp, Eigen::Dynamic, Eigen::Dynamic>;
using VectorMp = Eigen::Matrix<Mp, Eigen::Dynamic, 1>;

Eigen::MatrixXd operator_matrix(const SeriesContext& ctx, double k_eff, int n) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int col = 0; col < n; ++col) {
    Poly basis(n, 0.0);
    basis[col] = 1.0;
    Poly image(n, 0.0);
    const Poly dy = poly_derivative(basis);
    const Poly s_dy = poly_shift_up(dy);
    for (int r = 0; r < n && r < static_cast<int>(s_dy.size()); ++r) image[r] += ctx.lambda * s_dy[r];
    for (int r = 0; r < n; ++r) {
      for (int i = 0; i <= r; ++i) image[r] += k_eff * k_eff * ctx.d(r - i) * basis[i];
    }
    A.col(col) = Eigen::Map<Eigen::VectorXd>(image.data(), n);
  }
  return A;
}

}  // namespace

SeriesTable oracle_series(const AmplitudeOdeSpec& spec, const SeriesContext& ctx, int j_max, int l_max) {
  check_dims(j_max, l_max);
  if (spec.wavenumber_multiplier != 1 && spec.wavenumber_multiplier != 2) {
    throw DomainError("oracle_series: wavenumber multiplier must be 1 or 2");
  }
  const double k_eff = spec.wavenumber_multiplier * ctx.k;
  const double gw = gaussian_weight(ctx);

  std::vector<Poly> q_rows;
  if (spec.kind == SeriesKind::S) {
    AmplitudeOdeSpec qs{SeriesKind::Q, 1, 1.0, 0.0};
    const auto q = oracle_series(qs, ctx, j_max + 1, l_max + 2);
    for (int j = 0; j <= j_max + 1; ++j) q_rows.push_back(q.row(j));
  }

  std::vector<std::vector<double>> rows;
  for (int j = 0; j <= j_max; ++j) {
    const int n = row_length(j, j_max, l_max);
    Poly rhs(n, 0.0);
    if (j > 0) {
      const Poly dd = poly_derivative(poly_derivative(rows.back()));
      for (int i = 0; i < n && i < static_cast<int>(dd.size()); ++i) rhs[i] += dd[i];
    }
    Poly forcing(n, 0.0);
    switch (spec.kind) {
      case SeriesKind::Q:
        if (j == 0 && n > 1) forcing[1] = ctx.rho_star * ctx.g1 * gw;
        break;
      case SeriesKind::W:
      case SeriesKind::Wtilde:
        if (j == 0) {
          forcing[0] = ctx.alpha0 * ctx.u_star;
          if (n > 1) forcing[1] = ctx.alpha0;
        }
        break;
      case SeriesKind::S: {
        // -(g'/2) (q_{j-1}' - lambda s q_j) + delta_{j1} pulse * s
        const Poly s_qj = truncated(poly_shift_up(q_rows[j]), n);
        for (int i = 0; i < n; ++i) forcing[i] += 0.5 * ctx.g1 * ctx.lambda * s_qj[i];
        if (j > 0) {
          const Poly dq = truncated(poly_derivative(q_rows[j - 1]), n);
          for (int i = 0; i < n; ++i) forcing[i] -= 0.5 * ctx.g1 * dq[i];
        }
        if (j == 1 && n > 1) forcing[1] += ctx.rho_star * gw * (ctx.g1 * spec.c22 + 0.25 * ctx.g2);
        break;
      }
    }
    for (int i = 0; i < n; ++i) rhs[i] += spec.forcing_scale * forcing[i];

    const Eigen::MatrixXd A = operator_matrix(ctx, k_eff, n);
    if (std::abs(A.diagonal().prod()) == 0.0) throw NumericalFailure("oracle_series: resonant coefficient");
    // Steep motility profiles make the off-diagonal entries dwarf the diagonal, and pivoting in
    // double then loses several digits; eliminate in 50 digits instead.
    const MatrixMp Amp = A.cast<Mp>();
    VectorMp b(n);
    for (int i = 0; i < n; ++i) b[i] = rhs[i];
    const VectorMp y = Amp.partialPivLu().solve(b);
    Poly row(n);
    for (int i = 0; i < n; ++i) row[i] = static_cast<double>(y[i]);
    rows.push_back(std::move(row));
  }
  return SeriesTable(spec.kind, j_max, l_max, ctx, std::move(rows), spec.c22);
}

namespace {

double envelope_factor(const SeriesTable& t, double s, double eps) {
  const double lam = t.context().lambda;
  const double gauss = std::exp(-lam * s * s / (2.0 * eps));
  switch (t.kind()) {
    case SeriesKind::Q:
      return std::pow(eps, -1.5) * gauss;
    case SeriesKind::S:
      return std::pow(eps, -2.5) * gauss;
    default:
      return 1.0;
  }
}

}  // namespace

SeriesValue eval_series(const SeriesTable& table, double u, int j_cutoff, int l_cutoff, double epsilon,
                        bool envelope) {
  const double s = u - table.context().u_star;
  SeriesValue out;
  double eps_pow = 1.0;
  for (int j = 0; j <= j_cutoff; ++j) {
    double row_sum = 0.0;
    double s_pow = 1.0;
    for (int l = 0; l <= l_cutoff; ++l) {
      const double term = table.at(j, l) * s_pow;
      row_sum += term;
      s_pow *= s;
    }
    out.value += eps_pow * row_sum;
    eps_pow *= epsilon;
  }
  if (l_cutoff >= 1) {
    const double before = std::abs(table.at(0, l_cutoff - 1) * std::pow(s, l_cutoff - 1));
    const double last = std::abs(table.at(0, l_cutoff) * std::pow(s, l_cutoff));
    out.terms_growing = last > before && last > 0.0;
  }
  if (envelope) out.value *= envelope_factor(table, s, epsilon);
  return out;
}

double eval_series_derivative(const SeriesTable& table, double u, int j_cutoff, int l_cutoff,
                              double epsilon) {
  const double s = u - table.context().u_star;
  double total = 0.0;
  double eps_pow = 1.0;
  for (int j = 0; j <= j_cutoff; ++j) {
    double row_sum = 0.0;
    double s_pow = 1.0;
    for (int l = 1; l <= l_cutoff; ++l) {
      row_sum += l * table.at(j, l) * s_pow;
      s_pow *= s;
    }
    total += eps_pow * row_sum;
    eps_pow *= epsilon;
  }
  return total;
}

double max_relative_difference(const SeriesTable& a, const SeriesTable& b, int j_max, int l_max) {
  double scale = 0.0;
  for (int j = 0; j <= j_max; ++j)
    for (int l = 0; l <= l_max; ++l) scale = std::max(scale, std::abs(b.at(j, l)));
  const double floor = 1e-6 * scale;
  // Differences at the rounding level of the table are not resolvable; structural zeros land here.
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  double worst = 0.0;
  for (int j = 0; j <= j_max; ++j)
    for (int l = 0; l <= l_max; ++l) {
      const double d = std::abs(a.at(j, l) - b.at(j, l));
      if (d > noise) worst = std::max(worst, d / std::max(std::abs(b.at(j, l)), floor));
    }
  return worst;
}

}  // namespace qsp

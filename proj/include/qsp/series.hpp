#pragma once

#include <string>
#include <vector>

#include "qsp/dispersion.hpp"
#include "qsp/model.hpp"

namespace qsp {

/// Everything the local power-series recursions need, frozen at u*.
struct SeriesContext {
  double k = 0.0;
  double lambda = 1.0;
  double rho_star = 1.0;
  double alpha0 = 1.0;
  double u_star = 1.0;
  double g1 = 0.0;  // g'(c*)
  double g2 = 0.0;  // g''(c*)
  /// D^{(m)}(u*) / m!, m = 0..size-1.
  std::vector<double> D;

  double d(int m) const;
  SeriesContext with_k(double k_new) const;

  /// Context for the motility family evaluated with D'(u*) = D_prime.
  static SeriesContext make(const BaseState& base, const Wavenumber& k, double D_prime,
                            int taylor_terms = 160);
};

enum class SeriesKind { Q, W, Wtilde, S };
std::string to_string(SeriesKind kind);

/// Triangular coefficient table a^{(j)}_l of sum_j eps^j sum_l a^{(j)}_l (u - u*)^l.
///
/// Row j is stored on l = 0 .. l_max + 2 (j_max - j) so that the requested
/// block is complete; entries outside a row are unavailable, not zero.
class SeriesTable {
 public:
  SeriesTable(SeriesKind kind, int j_max, int l_max, SeriesContext ctx,
              std::vector<std::vector<double>> rows, double c22 = 0.0);

  SeriesKind kind() const { return kind_; }
  int j_max() const { return j_max_; }
  int l_max() const { return l_max_; }
  const SeriesContext& context() const { return ctx_; }
  double c22() const { return c22_; }

  bool available(int j, int l) const;
  /// Throws DomainError naming the missing entry.
  double at(int j, int l) const;
  const std::vector<double>& row(int j) const { return rows_.at(j); }

 private:
  SeriesKind kind_;
  int j_max_;
  int l_max_;
  SeriesContext ctx_;
  std::vector<std::vector<double>> rows_;
  double c22_;
};

/// Stored row length for row j of a (j_max, l_max) table.
int row_length(int j, int j_max, int l_max);

SeriesTable q_table(const SeriesContext& ctx, int j_max, int l_max);
SeriesTable w_table(const SeriesContext& ctx, int j_max, int l_max, int k_multiplier = 1);
/// Needs a Q table built from the same context with at least the same depth.
SeriesTable s_table(const SeriesContext& ctx, const SeriesTable& q, double c22, int j_max, int l_max);

/// Which amplitude equation lambda s y_j' + D(u) (m k)^2 y_j = y_{j-1}'' + F_j an
/// oracle table solves. forcing_scale multiplies the inhomogeneity.
struct AmplitudeOdeSpec {
  SeriesKind kind = SeriesKind::Q;
  int wavenumber_multiplier = 1;
  double forcing_scale = 1.0;
  double c22 = 0.0;
};

/// Independent check of the recursions: dense coefficient matching with
/// generic polynomial arithmetic and an LU solve per order.
SeriesTable oracle_series(const AmplitudeOdeSpec& spec, const SeriesContext& ctx, int j_max, int l_max);

/// Largest entrywise relative difference over j <= j_max, l <= l_max.
/// Denominators are floored at 1e-6 of the largest |b| entry, and absolute
/// differences below 64 ulp of that entry count as equal, so structural
/// zeros against solver roundoff do not dominate.
double max_relative_difference(const SeriesTable& a, const SeriesTable& b, int j_max, int l_max);

struct SeriesValue {
  double value = 0.0;
  /// Set when the last retained terms are not decreasing.
  bool terms_growing = false;
};

/// sum_{j <= j_cutoff} eps^j sum_{l <= l_cutoff} a^{(j)}_l (u - u*)^l, optionally times
/// the Gaussian envelope (eps^{-3/2} for Q, eps^{-5/2} for S; none for W kinds).
SeriesValue eval_series(const SeriesTable& table, double u, int j_cutoff, int l_cutoff, double epsilon,
                        bool envelope = false);

/// d/du of the same truncated sum (no envelope).
double eval_series_derivative(const SeriesTable& table, double u, int j_cutoff, int l_cutoff,
                              double epsilon);

}  // namespace qsp

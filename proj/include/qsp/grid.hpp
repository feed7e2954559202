#pragma once

#include <cstddef>
#include <vector>

#include "qsp/model.hpp"

namespace qsp {

struct GridOptions {
  int nx = 64;
  /// Cells per Gaussian width sqrt(eps/lambda) in the uniform core.
  double cells_per_width = 12.0;
  /// Core half-width in Gaussian widths around u*.
  double core_widths = 8.0;
  /// Extra absolute half-width added to the core (room for shifted peaks).
  double core_margin = 0.0;
  /// Geometric growth ratio of cell widths outside the core.
  double stretch = 1.1;
  /// Upper truncation; <= 0 selects u* + max(12 sqrt(eps/lambda), u*/2).
  double u_max = 0.0;
  /// Smallest epsilon the grid must resolve; <= 0 uses params.epsilon.
  double epsilon_min = 0.0;
};

/// Tensor grid of cells on [0, L] x [0, u_max]: uniform in x, graded in u.
struct Grid2D {
  int nx = 0;
  int nu = 0;
  double L = 0.0;
  double u_min = 0.0;
  double u_max = 0.0;
  double hx = 0.0;
  std::vector<double> x;        // cell centres
  std::vector<double> u_faces;  // nu + 1
  std::vector<double> u;        // cell centres
  std::vector<double> du;       // cell widths

  static Grid2D uniform(double L, int nx, double u_max, int nu);
  static Grid2D graded(const ModelParams& params, double u_star, const GridOptions& opt);

  /// Unknown index of n(i, j) and c(i); block i is [n_{i,0..nu-1}, c_i].
  std::size_t n_index(int i, int j) const {
    return static_cast<std::size_t>(i) * (nu + 1) + static_cast<std::size_t>(j);
  }
  std::size_t c_index(int i) const { return static_cast<std::size_t>(i) * (nu + 1) + nu; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * (nu + 1); }
};

}  // namespace qsp

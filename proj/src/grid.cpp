#include "qsp/grid.hpp"

#include <algorithm>
#include <cmath>

#include "qsp/errors.hpp"

namespace qsp {

namespace {

void finish_u(Grid2D& g) {
  g.nu = static_cast<int>(g.u_faces.size()) - 1;
  g.u.resize(g.nu);
  g.du.resize(g.nu);
  for (int j = 0; j < g.nu; ++j) {
    g.du[j] = g.u_faces[j + 1] - g.u_faces[j];
    if (!(g.du[j] > 0.0)) throw DomainError("grid: u faces must be strictly increasing");
    g.u[j] = 0.5 * (g.u_faces[j] + g.u_faces[j + 1]);
  }
  g.u_min = g.u_faces.front();
  g.u_max = g.u_faces.back();
}

void fill_x(Grid2D& g, double L, int nx) {
  if (nx < 2) throw DomainError("grid: nx must be >= 2");
  if (!(L > 0.0)) throw DomainError("grid: L must be > 0");
  g.nx = nx;
  g.L = L;
  g.hx = L / nx;
  g.x.resize(nx);
  for (int i = 0; i < nx; ++i) g.x[i] = (i + 0.5) * g.hx;
}

// Faces from `start` outward to `stop` with widths h, h r, h r^2, ...; the
// last cell is merged into its neighbour when it would be thinner than h/2.
std::vector<double> stretched(double start, double stop, double h, double ratio) {
  std::vector<double> faces;
  const double dir = stop > start ? 1.0 : -1.0;
  double pos = start;
  double w = h;
  while (dir * (stop - pos) > 1e-12 * std::max(1.0, std::abs(stop))) {
    w *= ratio;
    double next = pos + dir * w;
    if (dir * (stop - next) < 0.5 * w) next = stop;
    faces.push_back(next);
    pos = next;
  }
  return faces;
}

}  // namespace

Grid2D Grid2D::uniform(double L, int nx, double u_max, int nu) {
  if (nu < 2 || !(u_max > 0.0)) throw DomainError("grid: need nu >= 2 and u_max > 0");
  Grid2D g;
  fill_x(g, L, nx);
  g.u_faces.resize(nu + 1);
  for (int j = 0; j <= nu; ++j) g.u_faces[j] = u_max * j / nu;
  finish_u(g);
  return g;
}

Grid2D Grid2D::graded(const ModelParams& params, double u_star, const GridOptions& opt) {
  const double eps = opt.epsilon_min > 0.0 ? opt.epsilon_min : params.epsilon;
  const double width = std::sqrt(eps / params.lambda);
  const double u_max = opt.u_max > 0.0 ? opt.u_max : u_star + std::max(12.0 * width, 0.5 * u_star);
  if (!(u_max >= u_star + 12.0 * width - 1e-12)) {
    throw DomainError("grid: u_max must be at least u* + 12 sqrt(eps/lambda)");
  }
  if (!(opt.cells_per_width > 0.0) || !(opt.stretch >= 1.0)) throw DomainError("grid: bad grading options");

  const double h = width / opt.cells_per_width;
  const double half = opt.core_widths * width + opt.core_margin;
  const int m = std::max(1, static_cast<int>(std::ceil(half / h)));
  double lo = u_star - m * h;
  double hi = u_star + m * h;
  // Keep the core inside the domain; clip on whole cells.
  int m_lo = m;
  while (lo < h && m_lo > 0) {
    --m_lo;
    lo = u_star - m_lo * h;
  }
  int m_hi = m;
  while (hi > u_max - h && m_hi > 0) {
    --m_hi;
    hi = u_star + m_hi * h;
  }

  std::vector<double> faces;
  auto left = stretched(lo, 0.0, h, opt.stretch);
  for (auto it = left.rbegin(); it != left.rend(); ++it) faces.push_back(*it);
  for (int k = -m_lo; k <= m_hi; ++k) faces.push_back(u_star + k * h);
  auto right = stretched(hi, u_max, h, opt.stretch);
  faces.insert(faces.end(), right.begin(), right.end());
  faces.front() = 0.0;

  Grid2D g;
  fill_x(g, params.L, opt.nx);
  g.u_faces = std::move(faces);
  finish_u(g);
  return g;
}

}  // namespace qsp

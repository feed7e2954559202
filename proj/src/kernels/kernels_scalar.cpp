#include "qsp/kernels.hpp"

namespace qsp::kernels {

namespace {

void x_stencil(const double* left, const double* mid, const double* right, const double* coef, double* out,
               std::size_t len) {
  for (std::size_t j = 0; j < len; ++j) out[j] += coef[j] * ((left[j] + right[j]) - 2.0 * mid[j]);
}

void flux_divergence(const double* n, const double* up, const double* down, const double* inv_du, double* out,
                     std::size_t len) {
  double j_lo = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    const double j_hi = j + 1 < len ? up[j + 1] * n[j + 1] - down[j + 1] * n[j] : 0.0;
    out[j] += (j_hi - j_lo) * inv_du[j];
    j_lo = j_hi;
  }
}

double dot(const double* a, const double* b, std::size_t len) {
  double s = 0.0;
  for (std::size_t j = 0; j < len; ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", x_stencil, flux_divergence, dot};
  return table;
}

}  // namespace qsp::kernels

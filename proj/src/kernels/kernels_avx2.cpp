#include <immintrin.h>

#include "qsp/kernels.hpp"

namespace qsp::kernels {

namespace {

void x_stencil(const double* left, const double* mid, const double* right, const double* coef, double* out,
               std::size_t len) {
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    const __m256d sum = _mm256_add_pd(_mm256_loadu_pd(left + j), _mm256_loadu_pd(right + j));
    const __m256d lap = _mm256_sub_pd(sum, _mm256_mul_pd(two, _mm256_loadu_pd(mid + j)));
    _mm256_storeu_pd(out + j, _mm256_fmadd_pd(_mm256_loadu_pd(coef + j), lap, _mm256_loadu_pd(out + j)));
  }
  for (; j < len; ++j) out[j] += coef[j] * ((left[j] + right[j]) - 2.0 * mid[j]);
}

// Face fluxes first (vectorised over faces), then the divergence.
void flux_divergence(const double* n, const double* up, const double* down, const double* inv_du, double* out,
                     std::size_t len) {
  if (len == 0) return;
  constexpr std::size_t kStack = 1024;
  double stack_buf[kStack + 1];
  double* flux = stack_buf;
  double* heap = nullptr;
  if (len + 1 > kStack + 1) {
    heap = new double[len + 1];
    flux = heap;
  }
  flux[0] = 0.0;
  flux[len] = 0.0;
  std::size_t f = 1;
  for (; f + 4 <= len; f += 4) {
    const __m256d a = _mm256_mul_pd(_mm256_loadu_pd(up + f), _mm256_loadu_pd(n + f));
    const __m256d b = _mm256_mul_pd(_mm256_loadu_pd(down + f), _mm256_loadu_pd(n + f - 1));
    _mm256_storeu_pd(flux + f, _mm256_sub_pd(a, b));
  }
  for (; f < len; ++f) flux[f] = up[f] * n[f] - down[f] * n[f - 1];

  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(flux + j + 1), _mm256_loadu_pd(flux + j));
    _mm256_storeu_pd(out + j, _mm256_fmadd_pd(diff, _mm256_loadu_pd(inv_du + j), _mm256_loadu_pd(out + j)));
  }
  for (; j < len; ++j) out[j] += (flux[j + 1] - flux[j]) * inv_du[j];
  delete[] heap;
}

double dot(const double* a, const double* b, std::size_t len) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= len; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4), acc1);
  }
  for (; j + 4 <= len; j += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; j < len; ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{"avx2", x_stencil, flux_divergence, dot};
  return table;
}

}  // namespace qsp::kernels

#pragma once

#include <cstddef>
#include <string>

namespace qsp::kernels {

/// out[j] += coef[j] * ((left[j] + right[j]) - 2 mid[j])
using XStencilFn = void (*)(const double* left, const double* mid, const double* right, const double* coef,
                            double* out, std::size_t len);

/// Conservative u-flux divergence on one row of `len` cells. Interior face f
/// (1 <= f < len) carries J_f = up[f] n[f] - down[f] n[f-1]; the boundary
/// faces carry no flux. out[j] += (J_{j+1} - J_j) * inv_du[j].
using FluxDivergenceFn = void (*)(const double* n, const double* up, const double* down, const double* inv_du,
                                  double* out, std::size_t len);

/// sum_j a[j] b[j]
using DotFn = double (*)(const double* a, const double* b, std::size_t len);

struct KernelTable {
  const char* name;
  XStencilFn x_stencil;
  FluxDivergenceFn flux_divergence;
  DotFn dot;
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

/// Table selected at first use: AVX2 when supported unless QSP_SIMD=scalar.
const KernelTable& active();

}  // namespace qsp::kernels

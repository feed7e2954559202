#include <cstdlib>
#include <cstring>

#include "qsp/kernels.hpp"

namespace qsp::kernels {

#if defined(QSP_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

const KernelTable* avx2_table() {
#if defined(QSP_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &avx2_kernels();
#endif
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("QSP_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_table();
    const KernelTable* fast = avx2_table();
    return fast ? fast : &scalar_table();
  }();
  return *chosen;
}

}  // namespace qsp::kernels

// AVX2+FMA variants of the inner-loop kernels. Compiled into every x86-64
// build via function target attributes; dispatched only after a cpuid check,
// so the binary stays runnable on pre-AVX2 machines.

#include "kernels_internal.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace nnmrom::kernels {

namespace {

__attribute__((target("avx2,fma"))) double dot_avx2(const double* x,
                                                    const double* y,
                                                    std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  acc0 = _mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3));
  __m128d lo = _mm256_castpd256_pd128(acc0);
  __m128d hi = _mm256_extractf128_pd(acc0, 1);
  lo = _mm_add_pd(lo, hi);
  double s = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

__attribute__((target("avx2,fma"))) void axpy_avx2(double a, const double* x,
                                                   double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    _mm256_storeu_pd(y + i, y0);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

// Weight row stays hot in L1 while it is dotted against every sample row.
__attribute__((target("avx2,fma"))) void gemm_xwt_avx2(
    const double* X, std::size_t ldx, const double* W, std::size_t ldw,
    const double* bias, double* C, std::size_t ldc, std::size_t m,
    std::size_t n, std::size_t k) {
  for (std::size_t o = 0; o < n; ++o) {
    const double* w = W + o * ldw;
    const double b = bias ? bias[o] : 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      C[s * ldc + o] = b + dot_avx2(X + s * ldx, w, k);
    }
  }
}

__attribute__((target("avx2,fma"))) void gemm_acc_gw_avx2(
    const double* G, std::size_t ldg, const double* W, std::size_t ldw,
    double* Y, std::size_t ldy, std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    const double* w = W + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_avx2(G[s * ldg + g], w, Y + s * ldy, n);
    }
  }
}

__attribute__((target("avx2,fma"))) void gemm_acc_gtx_avx2(
    const double* G, std::size_t ldg, const double* X, std::size_t ldx,
    double* dW, std::size_t ldw, std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    double* w = dW + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_avx2(G[s * ldg + g], X + s * ldx, w, n);
    }
  }
}

constexpr KernelTable kAvx2 = {
    "avx2",        dot_avx2,         axpy_avx2,
    gemm_xwt_avx2, gemm_acc_gw_avx2, gemm_acc_gtx_avx2,
};

}  // namespace

const KernelTable* avx2_table() {
  static const bool ok =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &kAvx2 : nullptr;
}

}  // namespace nnmrom::kernels

#else

namespace nnmrom::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace nnmrom::kernels

#endif

// NEON variants for aarch64, where 128-bit SIMD is baseline. Same loop
// structure as the AVX2 unit with two-lane vectors.

#include "kernels_internal.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace nnmrom::kernels {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  float64x2_t acc2 = vdupq_n_f64(0.0);
  float64x2_t acc3 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    acc2 = vfmaq_f64(acc2, vld1q_f64(x + i + 4), vld1q_f64(y + i + 4));
    acc3 = vfmaq_f64(acc3, vld1q_f64(x + i + 6), vld1q_f64(y + i + 6));
  }
  for (; i + 2 <= n; i += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
  }
  acc0 = vaddq_f64(vaddq_f64(acc0, acc1), vaddq_f64(acc2, acc3));
  double s = vaddvq_f64(acc0);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t y0 = vld1q_f64(y + i);
    float64x2_t y1 = vld1q_f64(y + i + 2);
    y0 = vfmaq_f64(y0, va, vld1q_f64(x + i));
    y1 = vfmaq_f64(y1, va, vld1q_f64(x + i + 2));
    vst1q_f64(y + i, y0);
    vst1q_f64(y + i + 2, y1);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void gemm_xwt_neon(const double* X, std::size_t ldx, const double* W,
                   std::size_t ldw, const double* bias, double* C,
                   std::size_t ldc, std::size_t m, std::size_t n,
                   std::size_t k) {
  for (std::size_t o = 0; o < n; ++o) {
    const double* w = W + o * ldw;
    const double b = bias ? bias[o] : 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      C[s * ldc + o] = b + dot_neon(X + s * ldx, w, k);
    }
  }
}

void gemm_acc_gw_neon(const double* G, std::size_t ldg, const double* W,
                      std::size_t ldw, double* Y, std::size_t ldy,
                      std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    const double* w = W + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_neon(G[s * ldg + g], w, Y + s * ldy, n);
    }
  }
}

void gemm_acc_gtx_neon(const double* G, std::size_t ldg, const double* X,
                       std::size_t ldx, double* dW, std::size_t ldw,
                       std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    double* w = dW + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_neon(G[s * ldg + g], X + s * ldx, w, n);
    }
  }
}

constexpr KernelTable kNeon = {
    "neon",        dot_neon,         axpy_neon,
    gemm_xwt_neon, gemm_acc_gw_neon, gemm_acc_gtx_neon,
};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

}  // namespace nnmrom::kernels

#else

namespace nnmrom::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace nnmrom::kernels

#endif

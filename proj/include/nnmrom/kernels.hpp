#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nnmrom::kernels {

// Data-parallel inner loops behind the simulator, filters and network code.
// Each entry has a scalar reference implementation plus SIMD variants (AVX2
// on x86-64, NEON on aarch64) selected once at startup from CPU features.
// Variants may reassociate and fuse (FMA), so cross-variant results agree to
// rounding, not bit-exactly; the equivalence tests assert a tight relative
// tolerance. Within one process the selected variant is fixed, which keeps
// repeated runs bit-deterministic.
struct KernelTable {
  const char* name;

  // sum_i x[i]*y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  // y[i] += a*x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // C[m x n] = X[m x k] * W[n x k]^T (+ bias[n] unless bias == nullptr).
  // Row-major with explicit leading dimensions (ldx/ldw/ldc >= k/k/n).
  void (*gemm_xwt)(const double* X, std::size_t ldx, const double* W,
                   std::size_t ldw, const double* bias, double* C,
                   std::size_t ldc, std::size_t m, std::size_t n,
                   std::size_t k);

  // Y[m x n] += G[m x p] * W[p x n]. Weight-row outer loop so each W row is
  // streamed once per call.
  void (*gemm_acc_gw)(const double* G, std::size_t ldg, const double* W,
                      std::size_t ldw, double* Y, std::size_t ldy,
                      std::size_t m, std::size_t p, std::size_t n);

  // dW[p x n] += G[m x p]^T * X[m x n].
  void (*gemm_acc_gtx)(const double* G, std::size_t ldg, const double* X,
                       std::size_t ldx, double* dW, std::size_t ldw,
                       std::size_t m, std::size_t p, std::size_t n);
};

// The active table. Resolved once: the NNMROM_KERNELS environment variable
// ("scalar", "avx2", "neon") wins, otherwise the best variant the CPU
// supports.
const KernelTable& active();

// Force a variant by name; returns false if it is not available on this
// machine. Intended for tests and benchmarks, not thread-safe against
// concurrent kernel use.
bool select(std::string_view name);

std::vector<std::string> available();

// Convenience forwarders.
inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}

}  // namespace nnmrom::kernels

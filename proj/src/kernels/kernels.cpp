#include "nnmrom/kernels.hpp"

#include <atomic>
#include <cstdlib>

#include "kernels_internal.hpp"

namespace nnmrom::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemm_xwt_scalar(const double* X, std::size_t ldx, const double* W,
                     std::size_t ldw, const double* bias, double* C,
                     std::size_t ldc, std::size_t m, std::size_t n,
                     std::size_t k) {
  for (std::size_t o = 0; o < n; ++o) {
    const double* w = W + o * ldw;
    const double b = bias ? bias[o] : 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      C[s * ldc + o] = b + dot_scalar(X + s * ldx, w, k);
    }
  }
}

void gemm_acc_gw_scalar(const double* G, std::size_t ldg, const double* W,
                        std::size_t ldw, double* Y, std::size_t ldy,
                        std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    const double* w = W + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_scalar(G[s * ldg + g], w, Y + s * ldy, n);
    }
  }
}

void gemm_acc_gtx_scalar(const double* G, std::size_t ldg, const double* X,
                         std::size_t ldx, double* dW, std::size_t ldw,
                         std::size_t m, std::size_t p, std::size_t n) {
  for (std::size_t g = 0; g < p; ++g) {
    double* w = dW + g * ldw;
    for (std::size_t s = 0; s < m; ++s) {
      axpy_scalar(G[s * ldg + g], X + s * ldx, w, n);
    }
  }
}

constexpr KernelTable kScalar = {
    "scalar",        dot_scalar,          axpy_scalar,
    gemm_xwt_scalar, gemm_acc_gw_scalar,  gemm_acc_gtx_scalar,
};

const KernelTable* find(std::string_view name) {
  if (name == "scalar") return &kScalar;
  if (const KernelTable* t = avx2_table(); t && name == t->name) return t;
  if (const KernelTable* t = neon_table(); t && name == t->name) return t;
  return nullptr;
}

const KernelTable* resolve() {
  if (const char* env = std::getenv("NNMROM_KERNELS")) {
    if (const KernelTable* t = find(env)) return t;
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = resolve();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

bool select(std::string_view name) {
  const KernelTable* t = find(name);
  if (!t) return false;
  g_active.store(t, std::memory_order_release);
  return true;
}

std::vector<std::string> available() {
  std::vector<std::string> out{"scalar"};
  if (const KernelTable* t = avx2_table()) out.emplace_back(t->name);
  if (const KernelTable* t = neon_table()) out.emplace_back(t->name);
  return out;
}

}  // namespace nnmrom::kernels

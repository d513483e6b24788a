#pragma once

// Dense double-precision inner loops used by the tensor and optimizer code.
//
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active table is chosen once at startup from CPU features and
// may be overridden with CEGM_SIMD=scalar|avx2 or set_backend().
//
// Elementwise kernels and the three matrix products are bitwise identical
// across backends: the vector code performs the same multiply and add in the
// same order per output element, without fused multiply-add. Only the
// reductions (dot, sum_squares) reassociate, so results there agree to
// rounding, not bit for bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace cegm::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = alpha * x
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[m,n] (+)= A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[k,n] (+)= A[m,k]^T * B[m,n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c, bool accumulate);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table() noexcept;

bool cpu_has_avx2() noexcept;

// Currently selected table.
const KernelTable& active() noexcept;
Backend backend() noexcept;
// Throws cegm::ConfigError if the backend is unavailable on this machine.
void set_backend(Backend b);
std::string_view backend_name(Backend b) noexcept;

// Thin span wrappers over active().
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum_squares(std::span<const double> a) {
  return active().sum_squares(a.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void scale(double alpha, std::span<const double> x, std::span<double> out) {
  active().scale(alpha, x.data(), out.data(), x.size());
}

}  // namespace cegm::kernels

#include <atomic>
#include <cstdlib>
#include <string>

#include "cegm/error.hpp"
#include "kernels_impl.hpp"

namespace cegm::kernels {
namespace {

const KernelTable& initial_table() noexcept {
  if (const char* env = std::getenv("CEGM_SIMD")) {
    const std::string_view v(env);
    if (v == "scalar") return scalar_table();
    if (v == "avx2" && avx2_table() != nullptr) return *avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> s{&initial_table()};
  return s;
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable t{scalar::dot,  scalar::sum_squares, scalar::axpy,
                             scalar::scale, scalar::add,        scalar::sub,
                             scalar::mul,  scalar::gemm_nn,     scalar::gemm_nt,
                             scalar::gemm_tn};
  return t;
}

bool cpu_has_avx2() noexcept {
#if defined(CEGM_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() noexcept {
#if defined(CEGM_HAVE_AVX2)
  if (cpu_has_avx2()) return &avx2::table();
#endif
  return nullptr;
}

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

Backend backend() noexcept {
  return &active() == &scalar_table() ? Backend::kScalar : Backend::kAvx2;
}

void set_backend(Backend b) {
  if (b == Backend::kScalar) {
    slot().store(&scalar_table(), std::memory_order_release);
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw ConfigError("AVX2 kernels are not available on this machine");
  slot().store(t, std::memory_order_release);
}

std::string_view backend_name(Backend b) noexcept {
  return b == Backend::kScalar ? "scalar" : "avx2";
}

}  // namespace cegm::kernels

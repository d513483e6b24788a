#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"
#include "cegm/rng.hpp"

using namespace cegm;
namespace k = cegm::kernels;

namespace {

std::vector<double> draw(std::size_t n, SplitMix64& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

const k::KernelTable* simd() {
  const k::KernelTable* t = k::avx2_table();
  return (t && k::cpu_has_avx2()) ? t : nullptr;
}

}  // namespace

TEST_CASE("splitmix64 reference sequence") {
  // First outputs for seed 0 of the published SplitMix64 generator.
  SplitMix64 g(0);
  CHECK(g.next_u64() == 0xe220a8397b1dcdafULL);
  CHECK(g.next_u64() == 0x6e789e6aa1b965f4ULL);
  CHECK(g.next_u64() == 0x06c45d188009454fULL);
}

TEST_CASE("splitmix64 distributions stay in range") {
  SplitMix64 g(42);
  for (int i = 0; i < 10000; ++i) {
    const double u = g.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(g.below(7) < 7);
  }
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("scalar kernels match direct loops") {
  const auto& s = k::scalar_table();
  const double a[3] = {1, 2, 3}, b[3] = {4, -5, 6};
  CHECK(s.dot(a, b, 3) == doctest::Approx(12.0));
  CHECK(s.sum_squares(a, 3) == doctest::Approx(14.0));
  // [1 2; 3 4] * [5 6; 7 8]
  const double m1[4] = {1, 2, 3, 4}, m2[4] = {5, 6, 7, 8};
  double c[4];
  s.gemm_nn(2, 2, 2, m1, m2, c, false);
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);
  s.gemm_nt(2, 2, 2, m1, m2, c, false);  // m1 * m2^T
  CHECK(c[0] == 17);
  CHECK(c[1] == 23);
  CHECK(c[2] == 39);
  CHECK(c[3] == 53);
  s.gemm_tn(2, 2, 2, m1, m2, c, false);  // m1^T * m2
  CHECK(c[0] == 26);
  CHECK(c[1] == 30);
  CHECK(c[2] == 38);
  CHECK(c[3] == 44);
}

TEST_CASE("avx2 elementwise kernels are bitwise equal to scalar") {
  const k::KernelTable* v = simd();
  if (!v) {
    MESSAGE("AVX2 unavailable; skipping");
    return;
  }
  const auto& s = k::scalar_table();
  SplitMix64 rng(11);
  for (std::size_t n = 0; n <= 67; ++n) {
    CAPTURE(n);
    const auto x = draw(n, rng), y = draw(n, rng);
    std::vector<double> o1(n), o2(n);

    s.add(x.data(), y.data(), o1.data(), n);
    v->add(x.data(), y.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));
    s.sub(x.data(), y.data(), o1.data(), n);
    v->sub(x.data(), y.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));
    s.mul(x.data(), y.data(), o1.data(), n);
    v->mul(x.data(), y.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));
    s.scale(-0.37, x.data(), o1.data(), n);
    v->scale(-0.37, x.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));

    o1 = y;
    o2 = y;
    s.axpy(1.7, x.data(), o1.data(), n);
    v->axpy(1.7, x.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));
  }
}

TEST_CASE("avx2 reductions agree with scalar to rounding") {
  const k::KernelTable* v = simd();
  if (!v) return;
  const auto& s = k::scalar_table();
  SplitMix64 rng(12);
  for (std::size_t n = 0; n <= 67; ++n) {
    CAPTURE(n);
    const auto x = draw(n, rng), y = draw(n, rng);
    double mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
    CHECK(std::abs(s.dot(x.data(), y.data(), n) - v->dot(x.data(), y.data(), n)) <= 1e-14 * (mag + 1.0));
    const double ss = s.sum_squares(x.data(), n);
    CHECK(std::abs(ss - v->sum_squares(x.data(), n)) <= 1e-14 * (ss + 1.0));
  }
}

TEST_CASE("avx2 matrix products are bitwise equal to scalar") {
  const k::KernelTable* v = simd();
  if (!v) return;
  const auto& s = k::scalar_table();
  SplitMix64 rng(13);
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 16, 17};
  for (std::size_t m : sizes)
    for (std::size_t kk : sizes)
      for (std::size_t n : sizes) {
        CAPTURE(m);
        CAPTURE(kk);
        CAPTURE(n);
        for (bool acc : {false, true}) {
          const auto a = draw(m * kk, rng);
          const auto bnn = draw(kk * n, rng);
          const auto bnt = draw(n * kk, rng);
          const auto btn = draw(m * n, rng);
          const auto init = draw(std::max(m, kk) * n, rng);

          std::vector<double> c1(init.begin(), init.begin() + m * n), c2 = c1;
          s.gemm_nn(m, kk, n, a.data(), bnn.data(), c1.data(), acc);
          v->gemm_nn(m, kk, n, a.data(), bnn.data(), c2.data(), acc);
          CHECK(bitwise_equal(c1, c2));

          c1.assign(init.begin(), init.begin() + m * n);
          c2 = c1;
          s.gemm_nt(m, kk, n, a.data(), bnt.data(), c1.data(), acc);
          v->gemm_nt(m, kk, n, a.data(), bnt.data(), c2.data(), acc);
          CHECK(bitwise_equal(c1, c2));

          c1.assign(init.begin(), init.begin() + kk * n);
          c2 = c1;
          s.gemm_tn(m, kk, n, a.data(), btn.data(), c1.data(), acc);
          v->gemm_tn(m, kk, n, a.data(), btn.data(), c2.data(), acc);
          CHECK(bitwise_equal(c1, c2));
        }
      }
}

TEST_CASE("backend override") {
  const k::Backend before = k::backend();
  k::set_backend(k::Backend::kScalar);
  CHECK(k::backend() == k::Backend::kScalar);
  CHECK(&k::active() == &k::scalar_table());
  if (simd()) {
    k::set_backend(k::Backend::kAvx2);
    CHECK(k::backend() == k::Backend::kAvx2);
  } else {
    CHECK_THROWS_AS(k::set_backend(k::Backend::kAvx2), ConfigError);
  }
  k::set_backend(before);
}

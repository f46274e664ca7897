#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cavenet/kernels.hpp"
#include "cavenet/rng.hpp"

using namespace cavenet;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Plain triple loop with double accumulation.
std::vector<float> naive_gemm(std::size_t m, std::size_t n, std::size_t k,
                              const std::vector<float>& a, const std::vector<float>& b) {
  std::vector<float> c(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

}  // namespace

TEST(Kernels, ScalarGemmMatchesNaive) {
  Rng rng(1);
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(9), n = 1 + rng.below(37), k = 1 + rng.below(23);
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<float> c(m * n);
    kernels::scalar_table().gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
    auto ref = naive_gemm(m, n, k, a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-5 * (1 + std::abs(ref[i])));
  }
}

TEST(Kernels, TransposedVariantsAgreeWithNN) {
  Rng rng(2);
  const std::size_t m = 5, n = 7, k = 11;
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  std::vector<float> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  std::vector<float> nn(m * n), tn(m * n), nt(m * n);
  kernels::gemm_nn(m, n, k, a, b, nn);
  kernels::gemm_tn(m, n, k, at, b, tn);
  kernels::gemm_nt(m, n, k, a, bt, nt);
  EXPECT_EQ(nn, tn);
  EXPECT_EQ(nn, nt);
}

TEST(Kernels, AccumulateAddsIntoOutput) {
  std::vector<float> a{1, 2}, b{3, 4};
  std::vector<float> c{10};
  kernels::gemm_nn(1, 1, 2, a, b, c, true);
  EXPECT_FLOAT_EQ(c[0], 21.0f);
}

TEST(Kernels, Avx2GemmIsBitwiseEqualToScalar) {
  if (!kernels::isa_available(kernels::Isa::avx2)) GTEST_SKIP() << "no AVX2 on this host";
  const auto& simd = kernels::table(kernels::Isa::avx2);
  const auto& ref = kernels::scalar_table();
  Rng rng(3);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(16), n = 1 + rng.below(70), k = 1 + rng.below(40);
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    auto at = random_vec(k * m, rng);
    std::vector<float> c1(m * n), c2(m * n);
    simd.gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
    ref.gemm_nn(m, n, k, a.data(), b.data(), c2.data(), false);
    ASSERT_EQ(c1, c2);
    simd.gemm_tn(m, n, k, at.data(), b.data(), c1.data(), true);
    ref.gemm_tn(m, n, k, at.data(), b.data(), c2.data(), true);
    ASSERT_EQ(c1, c2);
  }
}

TEST(Kernels, Avx2ReductionsMatchScalarToRounding) {
  if (!kernels::isa_available(kernels::Isa::avx2)) GTEST_SKIP() << "no AVX2 on this host";
  const auto& simd = kernels::table(kernels::Isa::avx2);
  const auto& ref = kernels::scalar_table();
  Rng rng(4);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 64u, 1000u, 1031u}) {
    auto a = random_vec(n, rng);
    auto b = random_vec(n, rng);
    const double d_ref = ref.dot(a.data(), b.data(), n);
    const double d_simd = simd.dot(a.data(), b.data(), n);
    EXPECT_NEAR(d_simd, d_ref, 1e-12 * (1.0 + std::abs(d_ref)) * (1.0 + n));
    const double s_ref = ref.squared_distance(a.data(), b.data(), n);
    const double s_simd = simd.squared_distance(a.data(), b.data(), n);
    EXPECT_NEAR(s_simd, s_ref, 1e-12 * (1.0 + s_ref));
  }
}

TEST(Kernels, DispatchCanBePinned) {
  const auto before = kernels::active().isa;
  kernels::set_active(kernels::Isa::scalar);
  EXPECT_EQ(kernels::active().isa, kernels::Isa::scalar);
  kernels::set_active(before);
  EXPECT_EQ(kernels::active().isa, before);
}

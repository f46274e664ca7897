#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "cavenet/error.hpp"
#include "cavenet/kernels.hpp"
#include "kernels_impl.hpp"

namespace cavenet::kernels {
namespace {

const KernelTable kScalar{Isa::scalar, &scalar::dot, &scalar::squared_distance, &scalar::gemm_nn,
                          &scalar::gemm_tn};

#if defined(CAVENET_HAVE_AVX2)
const KernelTable kAvx2{Isa::avx2, &avx2::dot, &avx2::squared_distance, &avx2::gemm_nn,
                        &avx2::gemm_tn};
#endif

bool cpu_has_avx2() {
#if defined(CAVENET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("CAVENET_ISA");
  if (env != nullptr && std::string(env) == "scalar") return &kScalar;
  return isa_available(Isa::avx2) ? &table(Isa::avx2) : &kScalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

void check_size(std::size_t have, std::size_t need, const char* what) {
  if (have < need) {
    throw ShapeError(std::string("kernel operand ") + what + " too small: " +
                     std::to_string(have) + " < " + std::to_string(need));
  }
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(CAVENET_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool has = cpu_has_avx2();
  return has;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError(std::string("instruction set not available: ") + std::string(isa_name(isa)));
  }
#if defined(CAVENET_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("squared_distance: length mismatch");
  return active().squared_distance(a.data(), b.data(), a.size());
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate) {
  check_size(a.size(), m * k, "a");
  check_size(b.size(), k * n, "b");
  check_size(c.size(), m * n, "c");
  active().gemm_nn(m, n, k, a.data(), b.data(), c.data(), accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate) {
  check_size(a.size(), m * k, "a");
  check_size(b.size(), k * n, "b");
  check_size(c.size(), m * n, "c");
  active().gemm_tn(m, n, k, a.data(), b.data(), c.data(), accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate) {
  check_size(a.size(), m * k, "a");
  check_size(b.size(), n * k, "b");
  check_size(c.size(), m * n, "c");
  std::vector<float> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  active().gemm_nn(m, n, k, a.data(), bt.data(), c.data(), accumulate);
}

}  // namespace cavenet::kernels

#pragma once

// Inner-loop arithmetic used by the tensor engine and the classical models.
// Each kernel has a portable scalar reference and an AVX2+FMA variant; the
// variant is chosen once at startup from CPUID and can be pinned with the
// CAVENET_ISA environment variable (`scalar` or `avx2`).
//
// All kernels read 32-bit floats and accumulate in 64-bit doubles. The product
// of two floats is exact in double precision, so the fused multiply-add used by
// the AVX2 GEMM rounds identically to the scalar `acc += a * b`; the GEMM
// variants therefore agree bitwise. Dot products use lane-parallel partial
// sums on AVX2 and agree with the scalar reference only to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace cavenet::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const float* a, const float* b, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const float* a, const float* b, std::size_t n);
  // c[m,n] (+)= a[m,k] * b[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
                  float* c, bool accumulate);
  // c[m,n] (+)= a[k,m]^T * b[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
                  float* c, bool accumulate);
};

const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in

bool isa_available(Isa isa);
const KernelTable& table(Isa isa);
const KernelTable& active();
// Pins the active table. Throws ConfigError when the ISA is unavailable.
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

double dot(std::span<const float> a, std::span<const float> b);
double squared_distance(std::span<const float> a, std::span<const float> b);

// c = a * b with a [m,k], b [k,n], c [m,n], all row-major.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate = false);
// c = a^T * b with a stored [k,m].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate = false);
// c = a * b^T with b stored [n,k]. Transposes b and reuses gemm_nn.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a,
             std::span<const float> b, std::span<float> c, bool accumulate = false);

}  // namespace cavenet::kernels

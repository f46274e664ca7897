#pragma once

#include <cstddef>

namespace cavenet::kernels::scalar {
double dot(const float* a, const float* b, std::size_t n);
double squared_distance(const float* a, const float* b, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate);
}  // namespace cavenet::kernels::scalar

#if defined(CAVENET_HAVE_AVX2)
namespace cavenet::kernels::avx2 {
double dot(const float* a, const float* b, std::size_t n);
double squared_distance(const float* a, const float* b, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate);
}  // namespace cavenet::kernels::avx2
#endif

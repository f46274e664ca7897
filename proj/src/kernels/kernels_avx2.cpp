// Compiled with -mavx2 -mfma. Only reached after a CPUID check.
#include "kernels_impl.hpp"

#include <immintrin.h>

#include <vector>

namespace cavenet::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline __m256d load4(const float* p) { return _mm256_cvtps_pd(_mm_loadu_ps(p)); }

// acc[0..n) += av * row[0..n), double accumulators.
inline void axpy_row(double av, const float* row, double* acc, std::size_t n) {
  const __m256d va = _mm256_set1_pd(av);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256 r = _mm256_loadu_ps(row + j);
    const __m256d r0 = _mm256_cvtps_pd(_mm256_castps256_ps128(r));
    const __m256d r1 = _mm256_cvtps_pd(_mm256_extractf128_ps(r, 1));
    _mm256_storeu_pd(acc + j, _mm256_fmadd_pd(va, r0, _mm256_loadu_pd(acc + j)));
    _mm256_storeu_pd(acc + j + 4, _mm256_fmadd_pd(va, r1, _mm256_loadu_pd(acc + j + 4)));
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(acc + j, _mm256_fmadd_pd(va, load4(row + j), _mm256_loadu_pd(acc + j)));
  }
  for (; j < n; ++j) acc[j] += av * row[j];
}

inline void store_row(const double* acc, float* out, std::size_t n) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) _mm_storeu_ps(out + j, _mm256_cvtpd_ps(_mm256_loadu_pd(acc + j)));
  for (; j < n; ++j) out[j] = static_cast<float>(acc[j]);
}

}  // namespace

double dot(const float* a, const float* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(load4(a + i), load4(b + i), s0);
    s1 = _mm256_fmadd_pd(load4(a + i + 4), load4(b + i + 4), s1);
  }
  double acc = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double squared_distance(const float* a, const float* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(load4(a + i), load4(b + i));
    const __m256d d1 = _mm256_sub_pd(load4(a + i + 4), load4(b + i + 4));
    s0 = _mm256_fmadd_pd(d0, d0, s0);
    s1 = _mm256_fmadd_pd(d1, d1, s1);
  }
  double acc = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] = accumulate ? crow[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      axpy_row(av, b + p * n, acc.data(), n);
    }
    store_row(acc.data(), crow, n);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
             bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] = accumulate ? crow[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      axpy_row(av, b + p * n, acc.data(), n);
    }
    store_row(acc.data(), crow, n);
  }
}

}  // namespace cavenet::kernels::avx2

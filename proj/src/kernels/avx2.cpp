#include <immintrin.h>

#include "choicealign/kernels.hpp"

namespace choicealign::kernels::avx2 {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  __m256d sum = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    // mul then add, never fmadd: must match the scalar reference exactly
    sum = _mm256_add_pd(sum, _mm256_mul_pd(va, vb));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, sum);
  double acc = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

}  // namespace choicealign::kernels::avx2

#include <arm_neon.h>

#include "choicealign/kernels.hpp"

namespace choicealign::kernels::neon {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  // lanes 0,1 in lo; lanes 2,3 in hi
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double acc = (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
               (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
  for (; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

}  // namespace choicealign::kernels::neon

#include "choicealign/kernels.hpp"

namespace choicealign::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lane[0] += a[i] * b[i];
    lane[1] += a[i + 1] * b[i + 1];
    lane[2] += a[i + 2] * b[i + 2];
    lane[3] += a[i + 3] * b[i + 3];
  }
  double acc = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

}  // namespace choicealign::kernels::scalar

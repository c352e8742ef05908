#include <cmath>

#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"

namespace choicealign::estimator {
namespace {
constexpr double kZ975 = 1.96;
}

std::vector<double> OlsResult::flat() const {
  std::vector<double> out;
  out.reserve(kNumActivities * kNumFeatures);
  for (const auto& row : coef) out.insert(out.end(), row.begin(), row.end());
  return out;
}

OlsResult fit_ols(std::span<const Observation> data, const FeatureMask& active) {
  check_design_rank(data, active);
  std::vector<std::size_t> cols;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (active[f]) cols.push_back(f);
  }
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto k = static_cast<Eigen::Index>(cols.size());
  if (n <= k) throw_data("OLS needs more records than regressors");

  Eigen::MatrixXd X(n, k);
  Eigen::MatrixXd Y(n, static_cast<Eigen::Index>(kNumActivities));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& obs = data[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < k; ++c) X(i, c) = obs.x[cols[static_cast<std::size_t>(c)]];
    for (std::size_t j = 0; j < kNumActivities; ++j) Y(i, static_cast<Eigen::Index>(j)) = obs.shares[j];
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::MatrixXd B = qr.solve(Y);
  // (X^T X)^{-1} from the triangular factor: P R^{-1} R^{-T} P^T
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd xtx_inv_perm = Rinv * Rinv.transpose();
  const auto perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * xtx_inv_perm * perm.transpose();

  OlsResult out;
  out.n_obs = data.size();
  out.active = active;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd resid = Y.col(jj) - X * B.col(jj);
    const double rss = resid.squaredNorm();
    const double mean = Y.col(jj).mean();
    const double tss = (Y.col(jj).array() - mean).matrix().squaredNorm();
    const double sigma2 = rss / static_cast<double>(n - k);
    out.r_squared[j] = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const std::size_t f = cols[static_cast<std::size_t>(c)];
      out.coef[j][f] = B(c, jj);
      out.se[j][f] = std::sqrt(std::max(0.0, sigma2 * xtx_inv(c, c)));
      out.margin[j][f] = kZ975 * out.se[j][f];
    }
  }
  return out;
}

}  // namespace choicealign::estimator

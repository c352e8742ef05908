#pragma once

// Parameter recovery for the structural share model (nonlinear least squares
// via Levenberg-Marquardt) and the reduced-form OLS baseline.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "choicealign/model.hpp"
#include "choicealign/records.hpp"

namespace choicealign::estimator {

/// Shares are clamped into [kShareClamp, 1 - kShareClamp] and renormalized before fitting.
inline constexpr double kShareClamp = 1e-6;

/// Relative SSE change treated as evaluation noise: a step inside this band is
/// accepted only if it lowers the gradient norm.
inline constexpr double kSseNoiseFloor = 1e-13;

struct Observation {
  FeatureVector x;
  std::array<double, kNumActivities> shares{};
  bool clamped = false;
};

/// Converts records with observed allocations into observations.
std::vector<Observation> observations(const Records& records);

using FeatureMask = std::array<bool, kNumFeatures>;
inline constexpr FeatureMask kAllFeatures = {true, true, true, true, true, true,
                                             true, true, true, true, true};

struct FitOptions {
  int max_iterations = 500;
  double relative_sse_tol = 1e-10;
  double gradient_tol = 1e-8;  // infinity norm of J^T r
  double initial_lambda = 1e-3;
  double lambda_factor = 10.0;
  double max_lambda = 1e16;  // beyond this no step can make progress

  /// Perturbed starts in addition to theta = 0 (0 disables multi-start).
  int extra_starts = 0;
  double start_scale = 0.5;
  std::uint64_t seed = 0;

  /// Inactive features are pinned at zero and excluded from the fit.
  FeatureMask active = kAllFeatures;

  /// When set, starts from this point instead of zero.
  std::optional<ThetaMatrix> initial;

  /// Fixed work partition: results never depend on how many threads ran.
  std::size_t chunks = 16;
  std::size_t max_threads = 0;
};

struct Coefficient {
  Activity activity;
  Feature feature;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool active = true;
};

struct FitResult {
  std::string label;
  ThetaMatrix theta_hat;
  Eigen::MatrixXd covariance;  // kNumCoefficients square, flat (activity, feature) order
  ThetaMatrix ci_low;
  ThetaMatrix ci_high;
  std::string ci_method = "asymptotic";
  double sse = 0.0;
  std::size_t n_obs = 0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::size_t clamped_records = 0;
  FeatureMask active = kAllFeatures;
  std::vector<double> sse_trace;  // SSE after each accepted step, starting point first

  double standard_error(Activity a, Feature f) const;
  std::vector<Coefficient> coefficients() const;
};

/// d predicted_share / d theta: 4n x 33, rows record-major in canonical
/// activity order, columns in flat (activity, feature) order.
Eigen::MatrixXd jacobian(const ThetaMatrix& theta, std::span<const Observation> data);

/// Sum over records and all four activities of squared share residuals.
double sse(const ThetaMatrix& theta, std::span<const Observation> data);

/// Throws Error(kData) naming the collinear columns if the active design is
/// rank deficient.
void check_design_rank(std::span<const Observation> data, const FeatureMask& active = kAllFeatures);

FitResult fit_structural(std::span<const Observation> data, const FitOptions& options = {});
FitResult fit_structural(const Records& records, const FitOptions& options = {});

struct BootstrapResult {
  ThetaMatrix ci_low;
  ThetaMatrix ci_high;
  int replicates = 0;
  int failures = 0;
};

/// Percentile (2.5 / 97.5) intervals from B resampled refits.
BootstrapResult bootstrap_ci(std::span<const Observation> data, const FitOptions& options, int replicates,
                             std::uint64_t seed);

/// Replaces the asymptotic intervals of `fit` with bootstrap intervals.
void attach_bootstrap(FitResult& fit, const BootstrapResult& boot);

struct OlsResult {
  std::string label;
  /// One coefficient row per activity, Other included.
  std::array<std::array<double, kNumFeatures>, kNumActivities> coef{};
  std::array<std::array<double, kNumFeatures>, kNumActivities> se{};
  std::array<std::array<double, kNumFeatures>, kNumActivities> margin{};  // 1.96 * se
  std::array<double, kNumActivities> r_squared{};
  std::size_t n_obs = 0;
  FeatureMask active = kAllFeatures;

  /// 44 coefficients, activity-major over (L, W, S, O).
  std::vector<double> flat() const;
};

OlsResult fit_ols(std::span<const Observation> data, const FeatureMask& active = kAllFeatures);

// Serialization. Field names are stable; alignment and shift tooling read them.
nlohmann::json to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OlsResult& ols);
OlsResult ols_result_from_json(const nlohmann::json& j);
std::string coefficients_csv(const FitResult& fit);
std::string coefficients_csv(const OlsResult& ols);

FeatureMask feature_mask_from_names(const std::vector<std::string>& excluded);

}  // namespace choicealign::estimator

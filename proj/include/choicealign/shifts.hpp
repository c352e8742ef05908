#pragma once

// Counterfactual covariate shifts and parameter drift between pre- and
// post-shift estimates.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicealign/estimator.hpp"
#include "choicealign/ingest.hpp"
#include "choicealign/records.hpp"

namespace choicealign::shifts {

enum class ShiftKind { kEarningsQuantileLift, kAgeBandShift, kRaceMix, kSpouseMix };

inline constexpr std::array<ShiftKind, 4> kAllShifts = {ShiftKind::kEarningsQuantileLift, ShiftKind::kAgeBandShift,
                                                        ShiftKind::kRaceMix, ShiftKind::kSpouseMix};

std::string_view shift_kind_name(ShiftKind k);  // "earnings_quantile_lift", ...
std::optional<ShiftKind> shift_kind_from_name(std::string_view name);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::kEarningsQuantileLift;
  std::uint64_t seed = 0;

  double lift_sd = 0.5;  // earnings: lift in sample sds for records at or below the median

  double age_fraction = 0.1;  // age: fraction of band members moved
  double age_delta = 10.0;
  double age_low = 25.0;  // inclusive band
  double age_high = 34.0;

  double asian_pp = 0.02;  // race mix, within (age band, sex) strata
  double white_pp = -0.02;

  double spouse_pp = 0.03;  // spouse mix, within age bands inside [spouse_age_low, spouse_age_high)
  double no_spouse_pp = -0.03;
  double spouse_age_low = 30.0;
  double spouse_age_high = 45.0;

  std::vector<double> cutpoints{kAgeBandCutpoints.begin(), kAgeBandCutpoints.end()};

  /// Throws Error(kUsage) when a magnitude is outside its valid range.
  void validate() const;
  /// Same kind and seed with every magnitude set to zero.
  ShiftSpec zero_magnitude() const;

  nlohmann::json to_json() const;
  static ShiftSpec from_json(const nlohmann::json& j);

  bool operator==(const ShiftSpec&) const = default;
};

ShiftSpec default_spec(ShiftKind kind, std::uint64_t seed = 0);

struct ShiftOutcome {
  Records records;  // raw personas shifted; features are NOT recomputed
  nlohmann::json provenance;  // spec, seed and realized counts
  std::vector<std::string> warnings;
};

/// Adds magnitude * sd(earnings) to every record at or below the median.
ShiftOutcome shift_earnings_quantile_lift(const Records& records, double magnitude = 0.5);

/// Moves round-half-even(p * m) of the m records aged within [low, high] up by
/// delta years. Selection depends only on (seed, record_id).
ShiftOutcome shift_age_band(const Records& records, double p, double delta, double low, double high,
                            std::uint64_t seed);

/// Raking-style resampling of race shares within (age band, sex) strata.
ShiftOutcome shift_race_mix(const Records& records, double asian_pp, double white_pp, std::uint64_t seed,
                            std::span<const double> cutpoints = kAgeBandCutpoints);

/// Raking of spouse-present against no-spouse within the age bands that lie
/// inside [age_low, age_high).
ShiftOutcome shift_spouse_mix(const Records& records, double spouse_pp, double no_spouse_pp, std::uint64_t seed,
                              double age_low = 30.0, double age_high = 45.0,
                              std::span<const double> cutpoints = kAgeBandCutpoints);

ShiftOutcome apply_shift(const Records& records, const ShiftSpec& spec);

/// Target counts for one stratum: adjusted categories move to
/// round-half-even(count + m * pp) (clamped to [0, m]); the rounding residual
/// goes to the largest unadjusted nonempty category (the largest category
/// overall if none). `counts` and `pp` are per category.
std::vector<long long> raking_targets(const std::vector<long long>& counts, const std::vector<double>& pp);

// Drift ----------------------------------------------------------------------

enum class EstimatorKind { kStructural, kOls };
std::string_view estimator_kind_name(EstimatorKind k);  // "structural" / "ols"

struct DriftReport {
  std::string estimator;
  std::string shift;
  double mad = 0.0;
  double rel_l2 = 0.0;
  double one_minus_cos = 0.0;

  bool operator==(const DriftReport&) const = default;
};

/// MAD, relative L2 and 1 - cosine of theta1 against theta0. Throws
/// Error(kData) on length mismatch, empty input, or a zero theta0.
DriftReport drift_metrics(std::span<const double> theta0, std::span<const double> theta1);

struct InvarianceOptions {
  std::vector<EstimatorKind> estimators = {EstimatorKind::kStructural, EstimatorKind::kOls};
  /// Baseline moments; fitted on the input records when absent.
  std::optional<ingest::StandardizationParams> baseline;
  /// Re-fit standardization moments on each shifted sample (sensitivity mode).
  bool refit_standardization = false;
  /// When set, replaces the observed allocations of the baseline and of each
  /// shifted (and standardized) sample, e.g. by re-simulating from a known
  /// truth. Without it shifts edit covariates and outcomes stay as observed.
  std::function<Records(Records)> regenerate_outcomes;
  estimator::FitOptions fit;
};

struct InvarianceResult {
  std::vector<DriftReport> reports;  // shift-major, estimators in option order
  std::vector<ShiftOutcome> shifted;  // one per spec, features standardized as fitted
  std::vector<double> structural_baseline;  // 33 coefficients
  std::vector<double> ols_baseline;  // 44 coefficients
};

InvarianceResult run_invariance(const Records& records, std::span<const ShiftSpec> shifts,
                                const InvarianceOptions& options = {});

/// Long form: estimator, shift, mad, rel_l2, one_minus_cos.
std::string drift_csv(const std::vector<DriftReport>& reports);
std::vector<DriftReport> drift_from_csv(std::string_view text);

/// Wide form with one row per shift and metric-by-estimator columns.
std::string drift_table_csv(const std::vector<DriftReport>& reports);

}  // namespace choicealign::shifts

#pragma once

// Structural time-allocation model: four activities, log utility in minutes,
// a 24-hour budget, and activity weights driven by respondent features.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace choicealign {

inline constexpr double kMinutesPerDay = 1440.0;

/// Canonical activity order. Other is the reference activity.
enum class Activity : std::uint8_t { kLeisure = 0, kWork = 1, kSleep = 2, kOther = 3 };

inline constexpr std::size_t kNumActivities = 4;
/// Activities with free coefficients (all but the reference).
inline constexpr std::size_t kNumFreeActivities = 3;

inline constexpr std::array<Activity, kNumActivities> kActivities = {
    Activity::kLeisure, Activity::kWork, Activity::kSleep, Activity::kOther};

std::string_view activity_name(Activity a);  // "leisure", "work", ...
std::string_view activity_label(Activity a);  // "Leisure", "Work", ...
std::optional<Activity> activity_from_name(std::string_view name);

/// Fixed feature order shared by every module.
enum class Feature : std::uint8_t {
  kIntercept = 0,
  kAgeZ,
  kEduZ,
  kEarnweekZ,
  kMale,
  kSpousePresent,
  kPartnerPresent,
  kRaceBlack,
  kRaceNative,
  kRaceAsian,
  kRacePacific,
};

inline constexpr std::size_t kNumFeatures = 11;
inline constexpr std::size_t kNumCoefficients = kNumFreeActivities * kNumFeatures;

std::string_view feature_name(Feature f);
std::optional<Feature> feature_from_name(std::string_view name);
bool feature_is_binary(Feature f);

inline constexpr std::size_t index_of(Activity a) { return static_cast<std::size_t>(a); }
inline constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

class FeatureVector {
 public:
  /// Intercept-only vector (all covariates zero).
  FeatureVector();

  /// Validates intercept == 1 and binary fields in {0, 1}; throws Error(kData).
  static FeatureVector from_values(const std::array<double, kNumFeatures>& values);

  double operator[](Feature f) const { return values_[index_of(f)]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double, kNumFeatures> values() const { return values_; }

  bool operator==(const FeatureVector&) const = default;

 private:
  std::array<double, kNumFeatures> values_{};
};

/// Coefficients for Leisure, Work and Sleep/Personal over the feature order.
/// The Other row is identically zero and is not stored.
class ThetaMatrix {
 public:
  using Row = std::array<double, kNumFeatures>;

  ThetaMatrix() = default;
  explicit ThetaMatrix(const std::array<Row, kNumFreeActivities>& rows);

  /// Row-major over (L, W, S) x features. Throws on wrong length or non-finite.
  static ThetaMatrix from_flat(std::span<const double> flat);

  double at(Activity a, Feature f) const;
  void set(Activity a, Feature f, double value);

  /// Row for a free activity; the Other row is all zeros.
  Row row(Activity a) const;

  std::array<double, kNumCoefficients> flat() const;
  bool all_finite() const;

  bool operator==(const ThetaMatrix&) const = default;

 private:
  std::array<Row, kNumFreeActivities> rows_{};
};

inline constexpr std::size_t flat_index(Activity a, Feature f) {
  return index_of(a) * kNumFeatures + index_of(f);
}

class ShareVector {
 public:
  /// Validates strictly positive components summing to 1 within 1e-12.
  static ShareVector from_values(const std::array<double, kNumActivities>& shares);

  double operator[](Activity a) const { return shares_[index_of(a)]; }
  const std::array<double, kNumActivities>& values() const { return shares_; }

 private:
  std::array<double, kNumActivities> shares_{};
};

class Allocation {
 public:
  /// Validates strictly positive minutes summing to `budget` within 1e-9.
  static Allocation from_minutes(const std::array<double, kNumActivities>& minutes,
                                 double budget = kMinutesPerDay);

  double operator[](Activity a) const { return minutes_[index_of(a)]; }
  const std::array<double, kNumActivities>& minutes() const { return minutes_; }
  double budget() const;

  ShareVector shares() const;

  bool operator==(const Allocation&) const = default;

 private:
  std::array<double, kNumActivities> minutes_{};
};

/// Softmax is the default. LiteralRatio treats the linear indices themselves as
/// weights, with the Other index fixed at 1, and requires every index > 0.
enum class ModelForm { kSoftmax, kLiteralRatio };

std::string_view model_form_name(ModelForm form);
std::optional<ModelForm> model_form_from_name(std::string_view name);

/// Linear indices theta_j . x in canonical order; the Other entry is 0.
std::array<double, kNumActivities> linear_indices(const ThetaMatrix& theta, const FeatureVector& x);

/// Per-activity weights on ln(h_j) whose budget-constrained maximizer is
/// T * predict_shares(theta, x, form).
std::array<double, kNumActivities> utility_weights(const ThetaMatrix& theta,
                                                   const FeatureVector& x,
                                                   ModelForm form = ModelForm::kSoftmax);

/// sum_j (theta_j . x) ln h_j with theta_O . x = 0.
double utility(const ThetaMatrix& theta, const FeatureVector& x, const Allocation& h);

/// sum_j w_j ln h_j. Throws Error(kData) when any component of h is <= 0.
double utility(std::span<const double, kNumActivities> weights,
               std::span<const double, kNumActivities> minutes);

/// Numerically stable softmax (max-subtracted) with Other as the zero index.
ShareVector predict_shares(const ThetaMatrix& theta, const FeatureVector& x,
                           ModelForm form = ModelForm::kSoftmax);

/// Softmax over four raw indices; exposed for the estimator's hot loop.
std::array<double, kNumActivities> softmax(const std::array<double, kNumActivities>& indices);

Allocation shares_to_minutes(const ShareVector& s, double budget = kMinutesPerDay);

/// Floor applied to shares before taking logs downstream.
inline constexpr double kShareFloor = 1e-12;

}  // namespace choicealign

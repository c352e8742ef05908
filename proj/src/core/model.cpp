#include "choicealign/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/kernels.hpp"

namespace choicealign {
namespace {

constexpr std::array<std::string_view, kNumActivities> kActivityNames = {
    "leisure", "work", "sleep_personal", "other"};
constexpr std::array<std::string_view, kNumActivities> kActivityLabels = {
    "Leisure", "Work", "Sleep and Personal Care", "Other"};

constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "intercept",      "age_z",           "edu_z",      "earnweek_z",
    "male",           "spouse_present",  "partner_present",
    "race_black",     "race_native",     "race_asian", "race_pacific"};

void check_free(Activity a) {
  if (a == Activity::kOther) throw_usage("coefficients of the reference activity are fixed at zero");
}

}  // namespace

std::string_view activity_name(Activity a) { return kActivityNames[index_of(a)]; }
std::string_view activity_label(Activity a) { return kActivityLabels[index_of(a)]; }

std::optional<Activity> activity_from_name(std::string_view name) {
  for (Activity a : kActivities) {
    if (activity_name(a) == name) return a;
  }
  return std::nullopt;
}

std::string_view feature_name(Feature f) { return kFeatureNames[index_of(f)]; }

std::optional<Feature> feature_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

bool feature_is_binary(Feature f) { return index_of(f) >= index_of(Feature::kMale); }

FeatureVector::FeatureVector() { values_[index_of(Feature::kIntercept)] = 1.0; }

FeatureVector FeatureVector::from_values(const std::array<double, kNumFeatures>& values) {
  if (values[0] != 1.0) throw_data("feature vector: intercept must be 1.0");
  for (std::size_t i = 1; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    if (!std::isfinite(values[i])) {
      throw_data(fmt::format("feature vector: {} is not finite", feature_name(f)));
    }
    if (feature_is_binary(f) && values[i] != 0.0 && values[i] != 1.0) {
      throw_data(fmt::format("feature vector: {} must be 0 or 1, got {}", feature_name(f), values[i]));
    }
  }
  FeatureVector x;
  x.values_ = values;
  return x;
}

ThetaMatrix::ThetaMatrix(const std::array<Row, kNumFreeActivities>& rows) : rows_(rows) {
  if (!all_finite()) throw_data("theta: non-finite coefficient");
}

ThetaMatrix ThetaMatrix::from_flat(std::span<const double> flat) {
  if (flat.size() != kNumCoefficients) {
    throw_data(fmt::format("theta: expected {} coefficients, got {}", kNumCoefficients, flat.size()));
  }
  std::array<Row, kNumFreeActivities> rows{};
  for (std::size_t j = 0; j < kNumFreeActivities; ++j) {
    std::copy_n(flat.begin() + j * kNumFeatures, kNumFeatures, rows[j].begin());
  }
  return ThetaMatrix(rows);
}

double ThetaMatrix::at(Activity a, Feature f) const {
  if (a == Activity::kOther) return 0.0;
  return rows_[index_of(a)][index_of(f)];
}

void ThetaMatrix::set(Activity a, Feature f, double value) {
  check_free(a);
  if (!std::isfinite(value)) throw_data("theta: non-finite coefficient");
  rows_[index_of(a)][index_of(f)] = value;
}

ThetaMatrix::Row ThetaMatrix::row(Activity a) const {
  if (a == Activity::kOther) return Row{};
  return rows_[index_of(a)];
}

std::array<double, kNumCoefficients> ThetaMatrix::flat() const {
  std::array<double, kNumCoefficients> out{};
  for (std::size_t j = 0; j < kNumFreeActivities; ++j) {
    std::copy(rows_[j].begin(), rows_[j].end(), out.begin() + j * kNumFeatures);
  }
  return out;
}

bool ThetaMatrix::all_finite() const {
  for (const auto& r : rows_) {
    for (double v : r) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ShareVector ShareVector::from_values(const std::array<double, kNumActivities>& shares) {
  double sum = 0.0;
  for (double s : shares) {
    if (!(s > 0.0) || !(s < 1.0)) throw_data(fmt::format("share vector: component {} outside (0, 1)", s));
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw_data(fmt::format("share vector: sums to {:.17g}", sum));
  ShareVector v;
  v.shares_ = shares;
  return v;
}

Allocation Allocation::from_minutes(const std::array<double, kNumActivities>& minutes,
                                    double budget) {
  if (!(budget > 0.0)) throw_usage("allocation: budget must be positive");
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    if (!(minutes[j] > 0.0) || !std::isfinite(minutes[j])) {
      throw_data(fmt::format("allocation: {} minutes must be positive, got {}",
                             activity_name(kActivities[j]), minutes[j]));
    }
    sum += minutes[j];
  }
  if (std::abs(sum - budget) > 1e-9) {
    throw_data(fmt::format("allocation: minutes sum to {:.12g}, expected {}", sum, budget));
  }
  Allocation h;
  h.minutes_ = minutes;
  return h;
}

double Allocation::budget() const {
  return (minutes_[0] + minutes_[1]) + (minutes_[2] + minutes_[3]);
}

ShareVector Allocation::shares() const {
  const double total = budget();
  std::array<double, kNumActivities> s{};
  for (std::size_t j = 0; j < kNumActivities; ++j) s[j] = minutes_[j] / total;
  return ShareVector::from_values(s);
}

std::string_view model_form_name(ModelForm form) {
  return form == ModelForm::kSoftmax ? "softmax" : "literal_ratio";
}

std::optional<ModelForm> model_form_from_name(std::string_view name) {
  if (name == "softmax") return ModelForm::kSoftmax;
  if (name == "literal_ratio") return ModelForm::kLiteralRatio;
  return std::nullopt;
}

std::array<double, kNumActivities> linear_indices(const ThetaMatrix& theta, const FeatureVector& x) {
  std::array<double, kNumActivities> idx{};
  for (std::size_t j = 0; j < kNumFreeActivities; ++j) {
    const auto row = theta.row(kActivities[j]);
    idx[j] = kernels::dot(row, x.values());
  }
  idx[index_of(Activity::kOther)] = 0.0;
  return idx;
}

std::array<double, kNumActivities> softmax(const std::array<double, kNumActivities>& indices) {
  const double top = *std::max_element(indices.begin(), indices.end());
  std::array<double, kNumActivities> e{};
  double total = 0.0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    e[j] = std::exp(indices[j] - top);
    total += e[j];
  }
  for (double& v : e) v /= total;
  return e;
}

std::array<double, kNumActivities> utility_weights(const ThetaMatrix& theta, const FeatureVector& x,
                                                   ModelForm form) {
  auto idx = linear_indices(theta, x);
  if (form == ModelForm::kSoftmax) {
    for (double& v : idx) v = std::exp(v);
    return idx;
  }
  idx[index_of(Activity::kOther)] = 1.0;
  for (std::size_t j = 0; j < kNumFreeActivities; ++j) {
    if (!(idx[j] > 0.0)) {
      throw_data(fmt::format("literal-ratio model: index for {} is {} (must be positive)",
                             activity_name(kActivities[j]), idx[j]));
    }
  }
  return idx;
}

double utility(std::span<const double, kNumActivities> weights,
               std::span<const double, kNumActivities> minutes) {
  double u = 0.0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    if (!(minutes[j] > 0.0)) {
      throw_data(fmt::format("utility: {} minutes must be positive", activity_name(kActivities[j])));
    }
    u += weights[j] * std::log(minutes[j]);
  }
  return u;
}

double utility(const ThetaMatrix& theta, const FeatureVector& x, const Allocation& h) {
  const auto idx = linear_indices(theta, x);
  return utility(std::span<const double, kNumActivities>(idx),
                 std::span<const double, kNumActivities>(h.minutes()));
}

ShareVector predict_shares(const ThetaMatrix& theta, const FeatureVector& x, ModelForm form) {
  std::array<double, kNumActivities> s{};
  if (form == ModelForm::kSoftmax) {
    s = softmax(linear_indices(theta, x));
  } else {
    const auto w = utility_weights(theta, x, form);
    const double total = (w[0] + w[1]) + (w[2] + w[3]);
    for (std::size_t j = 0; j < kNumActivities; ++j) s[j] = w[j] / total;
  }
  // Floor tiny shares, then let the largest component absorb the difference so
  // the vector still sums to one.
  const auto top = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  double rest = 0.0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    if (j == top) continue;
    s[j] = std::max(s[j], kShareFloor);
    rest += s[j];
  }
  s[top] = 1.0 - rest;
  return ShareVector::from_values(s);
}

Allocation shares_to_minutes(const ShareVector& s, double budget) {
  if (!(budget > 0.0)) throw_usage("shares_to_minutes: budget must be positive");
  const auto& v = s.values();
  const double total = (v[0] + v[1]) + (v[2] + v[3]);
  std::array<double, kNumActivities> m{};
  for (std::size_t j = 0; j < kNumActivities; ++j) m[j] = budget * v[j] / total;
  return Allocation::from_minutes(m, budget);
}

}  // namespace choicealign

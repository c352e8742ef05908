#pragma once

// Parameter-level comparison of decision makers against a human baseline.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicealign/estimator.hpp"
#include "choicealign/records.hpp"

namespace choicealign::alignment {

/// a.b / (|a| |b|). Throws Error(kData) on length mismatch or a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// |theta_model - theta_human| per (free activity, feature) cell.
using DeviationTable = std::array<std::array<double, kNumFeatures>, kNumFreeActivities>;

/// Throws Error(kData) listing the features whose active status differs.
DeviationTable feature_deviations(const estimator::FitResult& human, const estimator::FitResult& model);

enum class CellScope { kAllCells, kExcludeIntercept };

/// Mean of the table over the cells in scope.
double model_divergence(const DeviationTable& delta, CellScope scope = CellScope::kAllCells);
/// Same mean restricted to one activity's row.
std::array<double, kNumFreeActivities> model_divergence_by_activity(const DeviationTable& delta,
                                                                     CellScope scope = CellScope::kAllCells);

/// Cellwise mean over models. Throws Error(kUsage) when `tables` is empty.
DeviationTable attribute_divergence(std::span<const DeviationTable> tables);

struct RankedCell {
  Activity activity;
  Feature feature;
  double value = 0.0;
  bool operator==(const RankedCell&) const = default;
};

/// Cells in descending order of value; ties by activity then feature order.
std::vector<RankedCell> rank_cells(const DeviationTable& table, CellScope scope = CellScope::kAllCells);

/// Cosine between the (L, W, S) coefficient vectors of one feature.
double attribute_activity_cosine(const estimator::FitResult& human, const estimator::FitResult& model, Feature f);

/// Cosine between one activity's coefficient rows.
double activity_cosine(const estimator::FitResult& human, const estimator::FitResult& model, Activity a,
                       CellScope scope = CellScope::kAllCells);

// Subgroups ------------------------------------------------------------------

/// Grouping keys: "sex", "race", "education", "spouse", "age_band", or the
/// name of any binary feature (e.g. "male", "race_black").
struct Group {
  std::string key;  // e.g. "race=Black|sex=male"
  Records records;
  bool unstable = false;  // fewer records than the minimum group size
};

inline constexpr std::size_t kMinGroupSize = 50;

/// Partitions records by the given keys; groups are sorted by key. An empty
/// key list yields a single group "all". Throws Error(kData) on no records and
/// Error(kUsage) on an unknown key.
std::vector<Group> subgroup_aggregate(const Records& records, const std::vector<std::string>& keys,
                                      std::size_t min_size = kMinGroupSize);

/// Mean observed shares; throws Error(kData) on an empty set.
std::array<double, kNumActivities> mean_shares(const Records& records);

/// Features with no variation inside a group, which a per-group fit must drop.
estimator::FeatureMask varying_features(const Records& records);

// Report ---------------------------------------------------------------------

struct ModelComparison {
  std::string model;
  std::array<double, kNumFreeActivities> activity_cosine{};
  std::array<double, kNumFreeActivities> activity_cosine_no_intercept{};
  DeviationTable deviations{};
  double m_all_cells = 0.0;
  double m_no_intercept = 0.0;
  std::array<double, kNumFreeActivities> m_by_activity{};
  /// Empty where either attribute vector is zero (e.g. a dropped feature).
  std::array<std::optional<double>, kNumFeatures> attribute_cosine{};

  bool operator==(const ModelComparison&) const = default;
};

struct WorstRow {
  Activity activity;
  Feature worst_feature;  // largest A_f in this activity
  double worst_feature_value = 0.0;
  std::string worst_model;  // largest single Delta in this activity
  Feature worst_model_feature;
  double worst_model_value = 0.0;

  bool operator==(const WorstRow&) const = default;
};

struct AlignmentReport {
  std::string human;
  std::vector<ModelComparison> models;
  DeviationTable attribute_divergence{};
  std::vector<RankedCell> ranking;
  std::vector<WorstRow> worst;

  bool operator==(const AlignmentReport&) const = default;
};

AlignmentReport compare(const estimator::FitResult& human, std::span<const estimator::FitResult> models);

nlohmann::json to_json(const AlignmentReport& r);
AlignmentReport report_from_json(const nlohmann::json& j);

// Flat tables, one per metric.
std::string cosine_csv(const AlignmentReport& r);  // model, activity, cosine, cosine_no_intercept
std::string deviations_csv(const AlignmentReport& r);  // model, activity, feature, delta
std::string divergence_csv(const AlignmentReport& r);  // model, m_all_cells, m_no_intercept, m_<activity>...
std::string attribute_divergence_csv(const AlignmentReport& r);  // rank, activity, feature, a_f
std::string attribute_cosine_csv(const AlignmentReport& r);  // model, feature, cosine
std::string worst_alignment_csv(const AlignmentReport& r);

}  // namespace choicealign::alignment

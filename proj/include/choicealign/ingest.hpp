#pragma once

// Survey-extract cleaning: recodes raw survey rows into CleanRecords, with an
// auditable rejection funnel, plus feature standardization and summaries.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "choicealign/csv.hpp"
#include "choicealign/records.hpp"

namespace choicealign::ingest {

struct RawSurveyRow {
  std::string record_id;
  long long sex = 0;
  long long race = 0;
  double earnweek = 0.0;
  long long educyrs = 0;
  long long spousepres = 0;
  double age = 0.0;
  double minutes_work = 0.0;
  double minutes_leisure = 0.0;
  double minutes_sleep = 0.0;
  double minutes_other = 0.0;
};

/// Why a row was dropped. Rules fire in declaration order.
enum class RejectReason {
  kSexNiu,               // SEX == 99
  kSpouseNiu,            // SPOUSEPRES == 99
  kMultiracial,          // RACE >= 200
  kMissingEarnings,      // EARNWEEK == 99999.99
  kInvalidCode,          // a code outside the documented vocabularies
  kEducationUnmapped,    // EDUCYRS falls between the documented cutpoints, or NIU
  kNonpositiveMinutes,   // some activity has <= 0 minutes
  kMinutesSumMismatch,   // minutes do not sum to 1440 within 1e-6
  kUnparseable,          // a field could not be parsed
};

inline constexpr std::size_t kNumRejectReasons = 9;

std::string_view reject_reason_name(RejectReason r);

struct Rejection {
  std::string record_id;
  RejectReason reason;
  std::string detail;
};

/// Accepted rows carry the persona and the observed allocation; features are
/// filled in later by apply_standardization.
using CleanOutcome = std::variant<CleanRecord, Rejection>;

CleanOutcome clean_row(const RawSurveyRow& row);

/// Maps canonical field names to the extract's column names.
struct HeaderMap {
  std::string record_id = "CASEID";
  std::string sex = "SEX";
  std::string race = "RACE";
  std::string earnweek = "EARNWEEK";
  std::string educyrs = "EDUCYRS";
  std::string spousepres = "SPOUSEPRES";
  std::string age = "AGE";
  std::string minutes_work = "minutes_work";
  std::string minutes_leisure = "minutes_leisure";
  std::string minutes_sleep = "minutes_sleep";
  std::string minutes_other = "minutes_other";

  /// Overrides any subset of the defaults; unknown keys are an error.
  static HeaderMap from_json(const nlohmann::json& j);
};

struct IngestResult {
  Records accepted;
  std::vector<Rejection> rejected;
  std::size_t raw_rows = 0;

  std::array<std::size_t, kNumRejectReasons> counts_by_reason() const;
};

/// Parses and cleans every row of a raw extract. Unparseable rows become
/// kUnparseable rejections so the funnel always balances.
IngestResult clean_table(const csv::Table& table, const HeaderMap& headers = {});

struct ColumnMoments {
  double mean = 0.0;
  double sd = 1.0;

  bool operator==(const ColumnMoments&) const = default;
};

struct StandardizationParams {
  ColumnMoments age;
  ColumnMoments edu;
  ColumnMoments earnweek;

  nlohmann::json to_json() const;
  static StandardizationParams from_json(const nlohmann::json& j);

  bool operator==(const StandardizationParams&) const = default;
};

/// Sample (n - 1) moments of age, education level and weekly earnings.
/// Throws Error(kData) naming any zero-variance column.
StandardizationParams fit_standardization(const Records& records);

FeatureVector make_features(const PersonaRecord& p, const StandardizationParams& params);

/// Recomputes every record's features from its persona.
Records apply_standardization(Records records, const StandardizationParams& params);

struct VariableSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  bool sd_undefined = false;  // fewer than two records
};

struct Summary {
  std::size_t n = 0;
  std::vector<VariableSummary> variables;  // raw covariates then features
  std::array<double, kNumActivities> mean_minutes{};
};

Summary summarize(const Records& records);
std::string summary_to_csv(const Summary& s);

}  // namespace choicealign::ingest

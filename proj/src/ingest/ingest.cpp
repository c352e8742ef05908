#include "choicealign/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "choicealign/error.hpp"

namespace choicealign::ingest {
namespace {

constexpr double kMissingEarnings = 99999.99;

Rejection reject(const RawSurveyRow& row, RejectReason reason, std::string detail) {
  return Rejection{row.record_id, reason, std::move(detail)};
}

std::optional<Education> recode_education(long long educyrs) {
  if (educyrs >= 999) return std::nullopt;  // NIU
  if (educyrs <= 112) return Education::kNoCollege;
  if (educyrs <= 216) return Education::kSomeCollege;
  if (educyrs == 217) return Education::kBachelor;
  if (educyrs > 300) return Education::kAdvanced;
  return std::nullopt;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
};

template <typename Get>
Moments moments(const Records& records, Get get) {
  Moments m;
  const auto n = records.size();
  if (n == 0) return m;
  m.min = std::numeric_limits<double>::infinity();
  m.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& r : records) {
    const double v = get(r);
    sum += v;
    m.min = std::min(m.min, v);
    m.max = std::max(m.max, v);
  }
  m.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (const auto& r : records) {
      const double d = get(r) - m.mean;
      ss += d * d;
    }
    m.sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return m;
}

double edu_value(const PersonaRecord& p) { return static_cast<double>(static_cast<int>(p.education)); }

}  // namespace

std::string_view reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::kSexNiu:
      return "sex-niu";
    case RejectReason::kSpouseNiu:
      return "spouse-niu";
    case RejectReason::kMultiracial:
      return "multiracial-excluded";
    case RejectReason::kMissingEarnings:
      return "missing-earnings";
    case RejectReason::kInvalidCode:
      return "invalid-code";
    case RejectReason::kEducationUnmapped:
      return "education-unmapped";
    case RejectReason::kNonpositiveMinutes:
      return "nonpositive-minutes";
    case RejectReason::kMinutesSumMismatch:
      return "minutes-sum-mismatch";
    case RejectReason::kUnparseable:
      return "unparseable";
  }
  return "unknown";
}

CleanOutcome clean_row(const RawSurveyRow& row) {
  if (row.sex == 99) return reject(row, RejectReason::kSexNiu, "SEX=99");
  if (row.spousepres == 99) return reject(row, RejectReason::kSpouseNiu, "SPOUSEPRES=99");
  if (row.race >= 200) return reject(row, RejectReason::kMultiracial, fmt::format("RACE={}", row.race));
  if (std::abs(row.earnweek - kMissingEarnings) < 5e-3) {
    return reject(row, RejectReason::kMissingEarnings, "EARNWEEK=99999.99");
  }

  if (row.sex != 1 && row.sex != 2) {
    return reject(row, RejectReason::kInvalidCode, fmt::format("SEX={}", row.sex));
  }
  const auto race = race_from_code(row.race);
  if (!race) return reject(row, RejectReason::kInvalidCode, fmt::format("RACE={}", row.race));
  const auto spouse = spouse_from_code(row.spousepres);
  if (!spouse) {
    return reject(row, RejectReason::kInvalidCode, fmt::format("SPOUSEPRES={}", row.spousepres));
  }
  if (!std::isfinite(row.earnweek) || row.earnweek < 0.0) {
    return reject(row, RejectReason::kInvalidCode, fmt::format("EARNWEEK={}", row.earnweek));
  }
  if (!std::isfinite(row.age) || row.age <= 0.0) {
    return reject(row, RejectReason::kInvalidCode, fmt::format("AGE={}", row.age));
  }
  const auto edu = recode_education(row.educyrs);
  if (!edu) {
    return reject(row, RejectReason::kEducationUnmapped, fmt::format("EDUCYRS={}", row.educyrs));
  }

  // canonical order L, W, S, O
  std::array<double, kNumActivities> minutes = {row.minutes_leisure, row.minutes_work,
                                                row.minutes_sleep, row.minutes_other};
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    if (!(minutes[j] > 0.0) || !std::isfinite(minutes[j])) {
      return reject(row, RejectReason::kNonpositiveMinutes,
                    fmt::format("{}={}", activity_name(kActivities[j]), minutes[j]));
    }
  }
  const double total = (minutes[0] + minutes[1]) + (minutes[2] + minutes[3]);
  if (std::abs(total - kMinutesPerDay) > 1e-6) {
    return reject(row, RejectReason::kMinutesSumMismatch, fmt::format("sum={}", total));
  }
  if (total != kMinutesPerDay) {
    for (double& m : minutes) m = m * kMinutesPerDay / total;
  }

  CleanRecord rec;
  rec.record_id = row.record_id;
  rec.persona.age = row.age;
  rec.persona.gender = row.sex == 1 ? Gender::kMale : Gender::kFemale;
  rec.persona.race = *race;
  rec.persona.education = *edu;
  rec.persona.spouse = *spouse;
  rec.persona.weekly_income = row.earnweek;
  rec.observed = Allocation::from_minutes(minutes);
  return rec;
}

HeaderMap HeaderMap::from_json(const nlohmann::json& j) {
  HeaderMap h;
  if (!j.is_object()) throw_data("header map must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string* slot = nullptr;
    if (key == "record_id") slot = &h.record_id;
    else if (key == "sex") slot = &h.sex;
    else if (key == "race") slot = &h.race;
    else if (key == "earnweek") slot = &h.earnweek;
    else if (key == "educyrs") slot = &h.educyrs;
    else if (key == "spousepres") slot = &h.spousepres;
    else if (key == "age") slot = &h.age;
    else if (key == "minutes_work") slot = &h.minutes_work;
    else if (key == "minutes_leisure") slot = &h.minutes_leisure;
    else if (key == "minutes_sleep") slot = &h.minutes_sleep;
    else if (key == "minutes_other") slot = &h.minutes_other;
    if (!slot) throw_data(fmt::format("header map: unknown field '{}'", key));
    if (!value.is_string()) throw_data(fmt::format("header map: '{}' must map to a string", key));
    *slot = value.get<std::string>();
  }
  return h;
}

std::array<std::size_t, kNumRejectReasons> IngestResult::counts_by_reason() const {
  std::array<std::size_t, kNumRejectReasons> counts{};
  for (const auto& r : rejected) ++counts[static_cast<std::size_t>(r.reason)];
  return counts;
}

IngestResult clean_table(const csv::Table& table, const HeaderMap& headers) {
  const auto id_col = table.column(headers.record_id);
  const std::size_t c_sex = table.require_column(headers.sex);
  const std::size_t c_race = table.require_column(headers.race);
  const std::size_t c_earn = table.require_column(headers.earnweek);
  const std::size_t c_edu = table.require_column(headers.educyrs);
  const std::size_t c_sp = table.require_column(headers.spousepres);
  const std::size_t c_age = table.require_column(headers.age);
  const std::size_t c_w = table.require_column(headers.minutes_work);
  const std::size_t c_l = table.require_column(headers.minutes_leisure);
  const std::size_t c_s = table.require_column(headers.minutes_sleep);
  const std::size_t c_o = table.require_column(headers.minutes_other);

  IngestResult result;
  result.raw_rows = table.size();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& cells = table.rows()[i];
    RawSurveyRow row;
    row.record_id = id_col ? cells[*id_col] : fmt::format("row-{}", i + 1);
    try {
      row.sex = csv::parse_int(cells[c_sex], "SEX");
      row.race = csv::parse_int(cells[c_race], "RACE");
      row.earnweek = csv::parse_double(cells[c_earn], "EARNWEEK");
      row.educyrs = csv::parse_int(cells[c_edu], "EDUCYRS");
      row.spousepres = csv::parse_int(cells[c_sp], "SPOUSEPRES");
      row.age = csv::parse_double(cells[c_age], "AGE");
      row.minutes_work = csv::parse_double(cells[c_w], "work minutes");
      row.minutes_leisure = csv::parse_double(cells[c_l], "leisure minutes");
      row.minutes_sleep = csv::parse_double(cells[c_s], "sleep minutes");
      row.minutes_other = csv::parse_double(cells[c_o], "other minutes");
    } catch (const Error& e) {
      result.rejected.push_back(Rejection{row.record_id, RejectReason::kUnparseable, e.what()});
      continue;
    }
    auto outcome = clean_row(row);
    if (auto* rec = std::get_if<CleanRecord>(&outcome)) {
      result.accepted.push_back(std::move(*rec));
    } else {
      result.rejected.push_back(std::get<Rejection>(std::move(outcome)));
    }
  }
  return result;
}

nlohmann::json StandardizationParams::to_json() const {
  auto col = [](const ColumnMoments& m) { return nlohmann::json{{"mean", m.mean}, {"sd", m.sd}}; };
  return nlohmann::json{{"age", col(age)}, {"edu", col(edu)}, {"earnweek", col(earnweek)}};
}

StandardizationParams StandardizationParams::from_json(const nlohmann::json& j) {
  auto col = [&](const char* name) {
    if (!j.contains(name)) throw_data(fmt::format("standardization params: missing '{}'", name));
    ColumnMoments m{j.at(name).at("mean").get<double>(), j.at(name).at("sd").get<double>()};
    if (!(m.sd > 0.0)) throw_data(fmt::format("standardization params: sd of '{}' must be positive", name));
    return m;
  };
  return StandardizationParams{col("age"), col("edu"), col("earnweek")};
}

StandardizationParams fit_standardization(const Records& records) {
  if (records.size() < 2) throw_data("standardization needs at least two records");
  const auto age = moments(records, [](const CleanRecord& r) { return r.persona.age; });
  const auto edu = moments(records, [](const CleanRecord& r) { return edu_value(r.persona); });
  const auto earn = moments(records, [](const CleanRecord& r) { return r.persona.weekly_income; });
  std::vector<std::string> constant;
  if (!(age.sd > 0.0)) constant.push_back("age");
  if (!(edu.sd > 0.0)) constant.push_back("edu");
  if (!(earn.sd > 0.0)) constant.push_back("earnweek");
  if (!constant.empty()) {
    throw_data(fmt::format("zero variance in column(s): {}", fmt::join(constant, ", ")));
  }
  return StandardizationParams{{age.mean, age.sd}, {edu.mean, edu.sd}, {earn.mean, earn.sd}};
}

FeatureVector make_features(const PersonaRecord& p, const StandardizationParams& params) {
  std::array<double, kNumFeatures> x{};
  x[index_of(Feature::kIntercept)] = 1.0;
  x[index_of(Feature::kAgeZ)] = (p.age - params.age.mean) / params.age.sd;
  x[index_of(Feature::kEduZ)] = (edu_value(p) - params.edu.mean) / params.edu.sd;
  x[index_of(Feature::kEarnweekZ)] = (p.weekly_income - params.earnweek.mean) / params.earnweek.sd;
  x[index_of(Feature::kMale)] = p.gender == Gender::kMale ? 1.0 : 0.0;
  x[index_of(Feature::kSpousePresent)] = p.spouse == SpouseStatus::kSpouse ? 1.0 : 0.0;
  x[index_of(Feature::kPartnerPresent)] = p.spouse == SpouseStatus::kPartner ? 1.0 : 0.0;
  x[index_of(Feature::kRaceBlack)] = p.race == Race::kBlack ? 1.0 : 0.0;
  x[index_of(Feature::kRaceNative)] = p.race == Race::kNative ? 1.0 : 0.0;
  x[index_of(Feature::kRaceAsian)] = p.race == Race::kAsian ? 1.0 : 0.0;
  x[index_of(Feature::kRacePacific)] = p.race == Race::kPacific ? 1.0 : 0.0;
  return FeatureVector::from_values(x);
}

Records apply_standardization(Records records, const StandardizationParams& params) {
  for (auto& r : records) r.features = make_features(r.persona, params);
  return records;
}

Summary summarize(const Records& records) {
  if (records.empty()) throw_data("summarize: no records");
  Summary s;
  s.n = records.size();
  auto add = [&](std::string name, auto get) {
    const auto m = moments(records, get);
    s.variables.push_back(VariableSummary{std::move(name), m.mean, m.sd, m.min, m.max, records.size() < 2});
  };
  add("age", [](const CleanRecord& r) { return r.persona.age; });
  add("edu", [](const CleanRecord& r) { return edu_value(r.persona); });
  add("earnweek", [](const CleanRecord& r) { return r.persona.weekly_income; });
  for (std::size_t f = 1; f < kNumFeatures; ++f) {
    add(std::string(feature_name(static_cast<Feature>(f))),
        [f](const CleanRecord& r) { return r.features[f]; });
  }
  const bool have_minutes =
      std::all_of(records.begin(), records.end(), [](const CleanRecord& r) { return r.observed.has_value(); });
  if (have_minutes) {
    for (Activity a : kActivities) {
      const auto m = moments(records, [a](const CleanRecord& r) { return (*r.observed)[a]; });
      s.mean_minutes[index_of(a)] = m.mean;
      s.variables.push_back(VariableSummary{fmt::format("minutes_{}", activity_name(a)), m.mean, m.sd,
                                            m.min, m.max, records.size() < 2});
    }
  }
  return s;
}

std::string summary_to_csv(const Summary& s) {
  std::ostringstream out;
  csv::write_row(out, {"variable", "n", "mean", "sd", "min", "max", "sd_flag"});
  for (const auto& v : s.variables) {
    csv::write_row(out, {v.name, std::to_string(s.n), csv::format_double(v.mean), csv::format_double(v.sd),
                         csv::format_double(v.min), csv::format_double(v.max),
                         v.sd_undefined ? "single-record" : ""});
  }
  return out.str();
}

}  // namespace choicealign::ingest

#include "choicealign/records.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"

namespace choicealign {

const std::vector<std::string>& records_csv_columns() {
  static const std::vector<std::string> cols = {
      "record_id",      "age",           "sex",             "race",           "edu",
      "spousepres",     "earnweek",      "age_z",           "edu_z",          "earnweek_z",
      "male",           "spouse_present", "partner_present", "race_black",     "race_native",
      "race_asian",     "race_pacific",  "minutes_leisure", "minutes_work",   "minutes_sleep",
      "minutes_other",  "renormalized",  "floored"};
  return cols;
}

void write_records_csv(std::ostream& out, const Records& records) {
  csv::write_row(out, records_csv_columns());
  csv::Row row;
  for (const auto& r : records) {
    row.clear();
    const auto& p = r.persona;
    row.push_back(r.record_id);
    row.push_back(csv::format_double(p.age));
    row.push_back(p.gender == Gender::kMale ? "1" : "2");
    row.push_back(std::to_string(static_cast<int>(p.race)));
    row.push_back(std::to_string(static_cast<int>(p.education)));
    row.push_back(std::to_string(static_cast<int>(p.spouse)));
    row.push_back(csv::format_double(p.weekly_income));
    for (std::size_t f = 1; f < kNumFeatures; ++f) {
      const auto feat = static_cast<Feature>(f);
      row.push_back(feature_is_binary(feat) ? (r.features[f] != 0.0 ? "1" : "0")
                                            : csv::format_double(r.features[f]));
    }
    for (Activity a : kActivities) {
      row.push_back(r.observed ? csv::format_double((*r.observed)[a]) : std::string());
    }
    row.push_back(r.flags.renormalized ? "1" : "0");
    row.push_back(r.flags.floored ? "1" : "0");
    csv::write_row(out, row);
  }
}

std::string records_to_csv(const Records& records) {
  std::ostringstream ss;
  write_records_csv(ss, records);
  return ss.str();
}

void save_records_csv(const std::filesystem::path& path, const Records& records) {
  io::write_atomic(path, records_to_csv(records));
}

Records read_records_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  std::vector<std::size_t> idx;
  for (const auto& name : records_csv_columns()) idx.push_back(table.require_column(name));

  Records out;
  out.reserve(table.size());
  for (const auto& row : table.rows()) {
    auto cell = [&](std::size_t k) -> const std::string& { return row[idx[k]]; };
    CleanRecord r;
    r.record_id = cell(0);
    auto& p = r.persona;
    p.age = csv::parse_double(cell(1), "age");
    const auto sex = csv::parse_int(cell(2), "sex");
    if (sex != 1 && sex != 2) throw_data(fmt::format("record {}: invalid sex code {}", r.record_id, sex));
    p.gender = sex == 1 ? Gender::kMale : Gender::kFemale;
    const auto race = race_from_code(csv::parse_int(cell(3), "race"));
    if (!race) throw_data(fmt::format("record {}: invalid race code '{}'", r.record_id, cell(3)));
    p.race = *race;
    const auto edu = education_from_level(csv::parse_int(cell(4), "edu"));
    if (!edu) throw_data(fmt::format("record {}: invalid edu level '{}'", r.record_id, cell(4)));
    p.education = *edu;
    const auto sp = spouse_from_code(csv::parse_int(cell(5), "spousepres"));
    if (!sp) throw_data(fmt::format("record {}: invalid spousepres code '{}'", r.record_id, cell(5)));
    p.spouse = *sp;
    p.weekly_income = csv::parse_double(cell(6), "earnweek");

    std::array<double, kNumFeatures> x{};
    x[0] = 1.0;
    for (std::size_t f = 1; f < kNumFeatures; ++f) {
      x[f] = csv::parse_double(cell(6 + f), records_csv_columns()[6 + f]);
    }
    r.features = FeatureVector::from_values(x);

    const bool has_minutes = !cell(17).empty();
    if (has_minutes) {
      std::array<double, kNumActivities> m{};
      for (std::size_t j = 0; j < kNumActivities; ++j) {
        m[j] = csv::parse_double(cell(17 + j), records_csv_columns()[17 + j]);
      }
      r.observed = Allocation::from_minutes(m);
    }
    r.flags.renormalized = cell(21) == "1";
    r.flags.floored = cell(22) == "1";
    out.push_back(std::move(r));
  }
  return out;
}

Records load_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data(fmt::format("cannot open records file '{}'", path.string()));
  return read_records_csv(in);
}

std::array<double, kNumActivities> observed_shares(const CleanRecord& r) {
  if (!r.observed) throw_data(fmt::format("record {} has no observed allocation", r.record_id));
  const auto& m = r.observed->minutes();
  const double total = (m[0] + m[1]) + (m[2] + m[3]);
  std::array<double, kNumActivities> s{};
  for (std::size_t j = 0; j < kNumActivities; ++j) s[j] = m[j] / total;
  return s;
}

}  // namespace choicealign

#include "choicealign/persona.hpp"

#include <array>
#include <utility>

#include <fmt/format.h>

#include "choicealign/error.hpp"

namespace choicealign {
namespace {

constexpr std::array<std::pair<Race, std::string_view>, 5> kRaceLabels = {{
    {Race::kWhite, "White"},
    {Race::kBlack, "Black"},
    {Race::kNative, "American Indian or Alaskan Native"},
    {Race::kAsian, "Asian"},
    {Race::kPacific, "Native Hawaiian or Pacific Islander"},
}};

constexpr std::array<std::pair<Education, std::string_view>, 4> kEducationLabels = {{
    {Education::kNoCollege, "no college education"},
    {Education::kSomeCollege, "some college without a bachelor's degree"},
    {Education::kBachelor, "bachelor's degree"},
    {Education::kAdvanced, "advanced degree"},
}};

constexpr std::array<std::pair<SpouseStatus, std::string_view>, 3> kSpouseLabels = {{
    {SpouseStatus::kSpouse, "spouse"},
    {SpouseStatus::kPartner, "unmarried partner"},
    {SpouseStatus::kNone, "no spouse or unmarried partner"},
}};

template <typename E, std::size_t N>
std::string_view label_of(const std::array<std::pair<E, std::string_view>, N>& table, E value,
                          std::string_view what) {
  for (const auto& [v, label] : table) {
    if (v == value) return label;
  }
  throw_data(fmt::format("invalid {} value {}", what, static_cast<int>(value)));
}

template <typename E, std::size_t N>
E value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view label,
           std::string_view what) {
  for (const auto& [v, l] : table) {
    if (l == label) return v;
  }
  throw_data(fmt::format("unknown {} label '{}'", what, label));
}

}  // namespace

std::string_view gender_label(Gender g) { return g == Gender::kMale ? "male" : "female"; }

std::string_view race_label(Race r) { return label_of(kRaceLabels, r, "race"); }

std::string_view education_label(Education e) { return label_of(kEducationLabels, e, "education"); }

std::string_view spouse_label(SpouseStatus s) { return label_of(kSpouseLabels, s, "spouse status"); }

Gender gender_from_label(std::string_view label) {
  if (label == "male") return Gender::kMale;
  if (label == "female") return Gender::kFemale;
  throw_data(fmt::format("unknown gender label '{}'", label));
}

Race race_from_label(std::string_view label) { return value_of(kRaceLabels, label, "race"); }

Education education_from_label(std::string_view label) {
  return value_of(kEducationLabels, label, "education");
}

SpouseStatus spouse_from_label(std::string_view label) {
  return value_of(kSpouseLabels, label, "spouse status");
}

std::optional<Race> race_from_code(long long code) {
  for (const auto& [v, label] : kRaceLabels) {
    if (static_cast<long long>(v) == code) return v;
  }
  return std::nullopt;
}

std::optional<SpouseStatus> spouse_from_code(long long code) {
  if (code >= 1 && code <= 3) return static_cast<SpouseStatus>(code);
  return std::nullopt;
}

std::optional<Education> education_from_level(long long level) {
  if (level >= 1 && level <= 4) return static_cast<Education>(level);
  return std::nullopt;
}

PersonaRecord persona_from_labels(double age, std::string_view gender, std::string_view race,
                                  std::string_view education, std::string_view spouse,
                                  double weekly_income) {
  PersonaRecord p;
  p.age = age;
  p.gender = gender_from_label(gender);
  p.race = race_from_label(race);
  p.education = education_from_label(education);
  p.spouse = spouse_from_label(spouse);
  p.weekly_income = weekly_income;
  return p;
}

static void check_cutpoints(std::span<const double> cut) {
  if (cut.size() < 2) throw_usage("age bands need at least two cutpoints");
  for (std::size_t i = 1; i < cut.size(); ++i) {
    if (!(cut[i] > cut[i - 1])) throw_usage("age-band cutpoints must be strictly increasing");
  }
}

int age_band(double age, std::span<const double> cutpoints) {
  check_cutpoints(cutpoints);
  if (age < cutpoints.front()) return -1;
  const auto last = static_cast<int>(cutpoints.size()) - 2;
  for (int b = 0; b < last; ++b) {
    if (age < cutpoints[static_cast<std::size_t>(b) + 1]) return b;
  }
  return last;
}

std::string age_band_label(int band, std::span<const double> cutpoints) {
  check_cutpoints(cutpoints);
  if (band < 0) return fmt::format("<{}", cutpoints.front());
  const auto b = static_cast<std::size_t>(band);
  if (b + 1 >= cutpoints.size()) throw_usage(fmt::format("no age band {}", band));
  if (b + 2 == cutpoints.size()) return fmt::format("{}+", cutpoints[b]);
  return fmt::format("{}-{}", cutpoints[b], cutpoints[b + 1] - 1);
}

}  // namespace choicealign

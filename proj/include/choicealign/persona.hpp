#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace choicealign {

enum class Gender { kMale, kFemale };

/// Single-race codes; values are the survey RACE codes. White is the reference.
enum class Race { kWhite = 100, kBlack = 110, kNative = 120, kAsian = 131, kPacific = 132 };

/// Values are the survey SPOUSEPRES codes. kNone is the reference.
enum class SpouseStatus { kSpouse = 1, kPartner = 2, kNone = 3 };

/// Four-level collapsed schooling; values are the ordinal codes used as a covariate.
enum class Education { kNoCollege = 1, kSomeCollege = 2, kBachelor = 3, kAdvanced = 4 };

/// Demographics of one respondent, in the raw (unstandardized) scale.
struct PersonaRecord {
  double age = 0.0;  // years
  Gender gender = Gender::kFemale;
  Race race = Race::kWhite;
  Education education = Education::kNoCollege;
  SpouseStatus spouse = SpouseStatus::kNone;
  double weekly_income = 0.0;  // dollars

  bool operator==(const PersonaRecord&) const = default;
};

// Prompt-side vocabularies.
std::string_view gender_label(Gender g);            // "male" / "female"
std::string_view race_label(Race r);                // "White", "Black", ...
std::string_view education_label(Education e);      // "no college education", ...
std::string_view spouse_label(SpouseStatus s);      // "spouse", "unmarried partner", ...

// Inverse lookups; throw Error(kData) naming the offending label.
Gender gender_from_label(std::string_view label);
Race race_from_label(std::string_view label);
Education education_from_label(std::string_view label);
SpouseStatus spouse_from_label(std::string_view label);

std::optional<Race> race_from_code(long long code);
std::optional<SpouseStatus> spouse_from_code(long long code);
std::optional<Education> education_from_level(long long level);

/// Builds a persona from prompt-vocabulary labels (unknown labels throw).
PersonaRecord persona_from_labels(double age, std::string_view gender, std::string_view race,
                                  std::string_view education, std::string_view spouse,
                                  double weekly_income);

/// Default age-band cutpoints. Band i covers [cut[i], cut[i+1]); ages at or
/// above the last cutpoint fall into the last band.
inline constexpr std::array<double, 8> kAgeBandCutpoints = {18, 25, 30, 35, 45, 55, 65, 100};

/// Band index for `age`, or -1 below the first cutpoint. Throws Error(kUsage)
/// unless the cutpoints are strictly increasing with at least two entries.
int age_band(double age, std::span<const double> cutpoints = kAgeBandCutpoints);

/// "18-24", "25-29", ...; "<18" for band -1.
std::string age_band_label(int band, std::span<const double> cutpoints = kAgeBandCutpoints);

}  // namespace choicealign

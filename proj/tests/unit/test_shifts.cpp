#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "choicealign/error.hpp"
#include "choicealign/shifts.hpp"
#include "choicealign/synth.hpp"
#include "fixtures.hpp"

using namespace choicealign;
using namespace choicealign::shifts;

namespace {

CleanRecord person(std::string id, double age, Gender g, Race r, SpouseStatus s = SpouseStatus::kNone,
                   double income = 500) {
  return fixtures::make_record(std::move(id), age, g, r, Education::kBachelor, s, income);
}

std::map<Race, int> race_counts(const Records& recs) {
  std::map<Race, int> out;
  for (const auto& r : recs) ++out[r.persona.race];
  return out;
}

Records sorted_by_id(Records recs) {
  std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
  return recs;
}

Records random_records(std::size_t n, std::uint64_t seed) {
  synth::PopulationConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.race_probs = {0.5, 0.2, 0.05, 0.2, 0.05};
  return synth::generate_population(cfg).records;
}

}  // namespace

TEST(Earnings, FourPointExample) {
  Records recs;
  for (int i = 1; i <= 4; ++i) recs.push_back(person(std::to_string(i), 30, Gender::kMale, Race::kWhite,
                                                    SpouseStatus::kNone, i));
  const auto out = shift_earnings_quantile_lift(recs, 0.5);
  const double lift = 0.5 * std::sqrt(5.0 / 3.0);
  EXPECT_DOUBLE_EQ(out.records[0].persona.weekly_income, 1 + lift);
  EXPECT_DOUBLE_EQ(out.records[1].persona.weekly_income, 2 + lift);
  EXPECT_EQ(out.records[2].persona.weekly_income, 3.0);
  EXPECT_EQ(out.records[3].persona.weekly_income, 4.0);
  EXPECT_NEAR(out.records[0].persona.weekly_income, 1.6455, 5e-5);
}

TEST(AgeBand, MovesRoundedFraction) {
  Records recs;
  for (int i = 0; i < 100; ++i) recs.push_back(person("b" + std::to_string(i), 25 + i % 10, Gender::kMale, Race::kWhite));
  for (int i = 0; i < 20; ++i) recs.push_back(person("o" + std::to_string(i), 50, Gender::kMale, Race::kWhite));
  const auto out = shift_age_band(recs, 0.1, 10, 25, 34, 3);
  int moved = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double d = out.records[i].persona.age - recs[i].persona.age;
    if (d != 0) {
      EXPECT_EQ(d, 10.0);
      EXPECT_EQ(recs[i].record_id[0], 'b');
      ++moved;
    }
  }
  EXPECT_EQ(moved, 10);
  // selection depends only on (seed, id)
  Records reversed(recs.rbegin(), recs.rend());
  EXPECT_EQ(sorted_by_id(shift_age_band(reversed, 0.1, 10, 25, 34, 3).records), sorted_by_id(out.records));
}

TEST(Raking, TargetsForHundredRecordStratum) {
  // Asian, White, Black
  const auto t = raking_targets({10, 50, 40}, {0.02, -0.02, 0.0});
  EXPECT_EQ(t, (std::vector<long long>{12, 48, 40}));
  const auto s = raking_targets({100, 100}, {0.03, -0.03});
  EXPECT_EQ(s, (std::vector<long long>{106, 94}));
}

TEST(RaceMix, HitsTargetsInStratum) {
  Records recs;
  for (int i = 0; i < 10; ++i) recs.push_back(person("a" + std::to_string(i), 40, Gender::kFemale, Race::kAsian));
  for (int i = 0; i < 50; ++i) recs.push_back(person("w" + std::to_string(i), 40, Gender::kFemale, Race::kWhite));
  for (int i = 0; i < 40; ++i) recs.push_back(person("k" + std::to_string(i), 40, Gender::kFemale, Race::kBlack));
  const auto out = shift_race_mix(recs, 0.02, -0.02, 7);
  ASSERT_EQ(out.records.size(), 100u);
  auto c = race_counts(out.records);
  EXPECT_EQ(c[Race::kAsian], 12);
  EXPECT_EQ(c[Race::kWhite], 48);
  EXPECT_EQ(c[Race::kBlack], 40);
  std::set<std::string> ids;
  for (const auto& r : out.records) ids.insert(r.record_id);
  EXPECT_EQ(ids.size(), 100u);
}

TEST(RaceMix, PreservesStratumSizes) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto recs = random_records(400, seed);
    const auto out = shift_race_mix(recs, 0.02, -0.02, seed);
    std::map<std::pair<int, Gender>, int> before, after;
    for (const auto& r : recs) ++before[{age_band(r.persona.age), r.persona.gender}];
    for (const auto& r : out.records) ++after[{age_band(r.persona.age), r.persona.gender}];
    EXPECT_EQ(before, after) << seed;
  }
}

TEST(SpouseMix, BandOfTwoHundred) {
  Records recs;
  for (int i = 0; i < 100; ++i) recs.push_back(person("s" + std::to_string(i), 37, Gender::kMale, Race::kWhite,
                                                     SpouseStatus::kSpouse));
  for (int i = 0; i < 100; ++i) recs.push_back(person("n" + std::to_string(i), 37, Gender::kMale, Race::kWhite,
                                                     SpouseStatus::kNone));
  const auto out = shift_spouse_mix(recs, 0.03, -0.03, 1);
  int spouse = 0, none = 0;
  for (const auto& r : out.records) {
    spouse += r.persona.spouse == SpouseStatus::kSpouse;
    none += r.persona.spouse == SpouseStatus::kNone;
  }
  EXPECT_EQ(spouse, 106);
  EXPECT_EQ(none, 94);
}

TEST(Shifts, ZeroMagnitudeIsIdentity) {
  const auto recs = random_records(300, 11);
  for (auto kind : kAllShifts) {
    const auto out = apply_shift(recs, default_spec(kind, 5).zero_magnitude());
    EXPECT_EQ(sorted_by_id(out.records), sorted_by_id(recs)) << shift_kind_name(kind);
  }
}

TEST(Shifts, CommuteWithRecordPermutation) {
  const auto recs = random_records(300, 12);
  Records perm = recs;
  Rng rng(1);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
  for (auto kind : kAllShifts) {
    const auto spec = default_spec(kind, 9);
    EXPECT_EQ(sorted_by_id(apply_shift(recs, spec).records), sorted_by_id(apply_shift(perm, spec).records))
        << shift_kind_name(kind);
  }
}

TEST(Shifts, SpecValidationAndJson) {
  auto spec = default_spec(ShiftKind::kAgeBandShift, 3);
  EXPECT_EQ(ShiftSpec::from_json(spec.to_json()), spec);
  spec.age_fraction = 1.5;
  EXPECT_THROW(spec.validate(), Error);
}

TEST(Drift, IdenticalAndOrthogonal) {
  const std::vector<double> a{0.3, -1.2, 2.0}, e1{1, 0}, e2{0, 1};
  const auto same = drift_metrics(a, a);
  EXPECT_EQ(same.mad, 0.0);
  EXPECT_EQ(same.rel_l2, 0.0);
  EXPECT_NEAR(same.one_minus_cos, 0.0, 1e-12);
  const auto orth = drift_metrics(e1, e2);
  EXPECT_NEAR(orth.mad, 1.0, 1e-12);
  EXPECT_NEAR(orth.rel_l2, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(orth.one_minus_cos, 1.0, 1e-12);
  EXPECT_THROW(drift_metrics(std::vector<double>{0, 0}, e1), Error);
  EXPECT_THROW(drift_metrics(a, e1), Error);
}

TEST(Drift, ScaledVectorKeepsDirection) {
  Rng rng(3);
  std::vector<double> a(33), b(33);
  for (double& v : a) v = rng.normal();
  for (double c : {0.5, 2.0, 3.0}) {
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = c * a[i];
    const auto d = drift_metrics(a, b);
    EXPECT_NEAR(d.one_minus_cos, 0.0, 1e-12);
    EXPECT_NEAR(d.rel_l2, std::abs(c - 1), 1e-12);
  }
}

TEST(Drift, CsvRoundTrip) {
  std::vector<DriftReport> reports{{"structural", "race_mix", 0.1, 0.2, 0.3}, {"ols", "race_mix", 1e-17, 2, 3}};
  EXPECT_EQ(drift_from_csv(drift_csv(reports)), reports);
}

TEST(Invariance, EightReportsAndZeroDriftWithoutShift) {
  Rng rng(4);
  const auto theta = fixtures::random_theta(rng);
  auto recs = synth::simulate_allocations(theta, random_records(600, 13), {synth::NoiseKind::kDirichlet, 500.0}, 2);
  std::vector<ShiftSpec> specs, zero;
  for (auto kind : kAllShifts) {
    specs.push_back(default_spec(kind, 1));
    zero.push_back(specs.back().zero_magnitude());
  }
  const auto result = run_invariance(recs, specs);
  ASSERT_EQ(result.reports.size(), 8u);
  EXPECT_EQ(result.structural_baseline.size(), 33u);
  EXPECT_EQ(result.ols_baseline.size(), 44u);
  EXPECT_EQ(result.reports[0].estimator, "structural");
  EXPECT_EQ(result.reports[1].estimator, "ols");
  for (const auto& r : run_invariance(recs, zero).reports) {
    EXPECT_LT(r.mad, 1e-9) << r.shift << " " << r.estimator;
    EXPECT_LT(r.one_minus_cos, 1e-9);
  }
}

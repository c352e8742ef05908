#include <cmath>

#include <gtest/gtest.h>

#include "choicealign/alignment.hpp"
#include "choicealign/error.hpp"
#include "fixtures.hpp"

using namespace choicealign;
using namespace choicealign::alignment;

namespace {

estimator::FitResult fit_of(const ThetaMatrix& theta, std::string label = "m") {
  estimator::FitResult f;
  f.label = std::move(label);
  f.theta_hat = theta;
  f.converged = true;
  return f;
}

DeviationTable random_table(Rng& rng) {
  DeviationTable t{};
  for (auto& row : t) {
    for (double& v : row) v = rng.uniform01();
  }
  return t;
}

}  // namespace

TEST(Cosine, ReferenceCases) {
  const std::vector<double> a{1, 2, 3}, e1{1, 0}, e2{0, 1}, p{1, 2}, q{-1, -2}, z{0, 0};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(cosine_similarity(p, q), -1.0, 1e-15);
  EXPECT_THROW(cosine_similarity(e1, z), Error);
  EXPECT_THROW(cosine_similarity(a, p), Error);
}

TEST(Deviations, IdenticalIsZeroAndShiftIsConstant) {
  Rng rng(1);
  const auto theta = fixtures::random_theta(rng);
  for (const auto& row : feature_deviations(fit_of(theta), fit_of(theta))) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
  auto flat = theta.flat();
  for (double& v : flat) v += 0.1;
  for (const auto& row : feature_deviations(fit_of(theta), fit_of(ThetaMatrix::from_flat(flat)))) {
    for (double v : row) EXPECT_NEAR(v, 0.1, 1e-15);
  }
}

TEST(Deviations, SingleCellExample) {
  ThetaMatrix human, model;
  human.set(Activity::kLeisure, Feature::kRaceBlack, 0.164);
  human.set(Activity::kSleep, Feature::kRaceBlack, 0.189);
  human.set(Activity::kWork, Feature::kRaceBlack, 0.216);
  model = human;
  model.set(Activity::kLeisure, Feature::kRaceBlack, -0.053);
  const auto d = feature_deviations(fit_of(human), fit_of(model));
  EXPECT_NEAR(d[index_of(Activity::kLeisure)][index_of(Feature::kRaceBlack)], 0.217, 1e-12);
  EXPECT_EQ(d[index_of(Activity::kWork)][index_of(Feature::kRaceBlack)], 0.0);
}

TEST(Deviations, FeatureSetMismatchIsNamed) {
  auto a = fit_of(ThetaMatrix{}), b = fit_of(ThetaMatrix{});
  b.active[index_of(Feature::kRacePacific)] = false;
  try {
    feature_deviations(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(std::string(feature_name(Feature::kRacePacific))), std::string::npos);
  }
}

TEST(Divergence, MatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_table(rng);
    double all = 0, no_int = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      double row = 0;
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        all += t[a][f];
        row += t[a][f];
        if (f > 0) no_int += t[a][f];
      }
      EXPECT_NEAR(model_divergence_by_activity(t)[a], row / kNumFeatures, 1e-12);
    }
    EXPECT_NEAR(model_divergence(t), all / 33.0, 1e-12);
    EXPECT_NEAR(model_divergence(t, CellScope::kExcludeIntercept), no_int / 30.0, 1e-12);

    std::vector<DeviationTable> tables{t, random_table(rng), random_table(rng)};
    const auto af = attribute_divergence(tables);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        EXPECT_NEAR(af[a][f], (tables[0][a][f] + tables[1][a][f] + tables[2][a][f]) / 3.0, 1e-12);
      }
    }
  }
}

TEST(Divergence, SmallExamples) {
  DeviationTable t{};
  t[0][0] = 0.1;
  t[0][1] = 0.3;
  std::vector<DeviationTable> one{t};
  EXPECT_EQ(attribute_divergence(one), t);
  DeviationTable u{};
  u[0][0] = 0.3;
  std::vector<DeviationTable> two{t, u};
  EXPECT_NEAR(attribute_divergence(two)[0][0], 0.2, 1e-15);
  EXPECT_THROW(attribute_divergence(std::span<const DeviationTable>{}), Error);
  const auto ranked = rank_cells(t);
  EXPECT_EQ(ranked[0].feature, static_cast<Feature>(1));
  EXPECT_EQ(ranked[1].feature, Feature::kIntercept);
}

TEST(AttributeCosine, NegatedModelGivesMinusOne) {
  Rng rng(3);
  const auto theta = fixtures::random_theta(rng);
  auto flat = theta.flat();
  for (double& v : flat) v = -v;
  const auto h = fit_of(theta), m = fit_of(ThetaMatrix::from_flat(flat));
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    EXPECT_NEAR(attribute_activity_cosine(h, m, static_cast<Feature>(f)), -1.0, 1e-12);
  }
  EXPECT_NEAR(activity_cosine(h, h, Activity::kWork), 1.0, 1e-12);
}

TEST(Subgroups, PartitionSortedByKeyWithStabilityFlag) {
  Records recs;
  for (int i = 0; i < 60; ++i) {
    recs.push_back(fixtures::make_record(std::to_string(i), 30, i < 55 ? Gender::kFemale : Gender::kMale, Race::kWhite,
                                        Education::kBachelor, SpouseStatus::kNone, 500));
  }
  const auto groups = subgroup_aggregate(recs, {"sex"});
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].key, "sex=female");
  EXPECT_EQ(groups[0].records.size(), 55u);
  EXPECT_FALSE(groups[0].unstable);
  EXPECT_EQ(groups[1].key, "sex=male");
  EXPECT_TRUE(groups[1].unstable);
  const auto all = subgroup_aggregate(recs, {});
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].key, "all");
  EXPECT_THROW(subgroup_aggregate(recs, {"shoe_size"}), Error);
  EXPECT_THROW(subgroup_aggregate(Records{}, {"sex"}), Error);
}

TEST(Subgroups, MeanSharesAndVaryingFeatures) {
  Records recs;
  auto a = fixtures::make_record("a", 30, Gender::kMale, Race::kWhite, Education::kBachelor, SpouseStatus::kNone, 1);
  a.observed = Allocation::from_minutes({360, 360, 360, 360});
  auto b = a;
  b.record_id = "b";
  b.observed = Allocation::from_minutes({720, 240, 240, 240});
  std::array<double, kNumFeatures> x{};
  x[0] = 1;
  x[1] = 0.5;
  a.features = FeatureVector::from_values(x);
  x[1] = -0.5;
  b.features = FeatureVector::from_values(x);
  recs = {a, b};
  const auto m = mean_shares(recs);
  EXPECT_NEAR(m[0], (0.25 + 0.5) / 2, 1e-15);
  const auto mask = varying_features(recs);
  EXPECT_TRUE(mask[0]);
  EXPECT_TRUE(mask[1]);
  EXPECT_FALSE(mask[2]);
}

TEST(Report, RoundTripAndSelfComparison) {
  Rng rng(4);
  const auto human = fit_of(fixtures::random_theta(rng), "human");
  std::vector<estimator::FitResult> models{fit_of(fixtures::random_theta(rng), "a"),
                                           fit_of(fixtures::random_theta(rng), "b"), fit_of(human.theta_hat, "self")};
  const auto r = compare(human, models);
  EXPECT_EQ(report_from_json(to_json(r)), r);
  ASSERT_EQ(r.models.size(), 3u);
  EXPECT_EQ(r.models[2].m_all_cells, 0.0);
  for (double c : r.models[2].activity_cosine) EXPECT_NEAR(c, 1.0, 1e-12);
  EXPECT_EQ(r.ranking.size(), 33u);
  EXPECT_EQ(r.worst.size(), 3u);
  for (const auto& m : r.models) {
    for (double c : m.activity_cosine) {
      EXPECT_GE(c, -1.0);
      EXPECT_LE(c, 1.0);
    }
  }
}

TEST(Report, DeviationsAreSymmetric) {
  Rng rng(5);
  const auto a = fit_of(fixtures::random_theta(rng)), b = fit_of(fixtures::random_theta(rng));
  EXPECT_EQ(feature_deviations(a, b), feature_deviations(b, a));
  EXPECT_NEAR(activity_cosine(a, b, Activity::kLeisure), activity_cosine(b, a, Activity::kLeisure), 1e-15);
}

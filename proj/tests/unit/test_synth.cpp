#include <cmath>

#include <gtest/gtest.h>

#include "choicealign/error.hpp"
#include "choicealign/synth.hpp"
#include "fixtures.hpp"

using namespace choicealign;
using namespace choicealign::synth;

TEST(Population, DeterministicPerSeed) {
  PopulationConfig cfg;
  cfg.n = 300;
  cfg.seed = 77;
  const auto a = generate_population(cfg);
  const auto b = generate_population(cfg);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.standardization, b.standardization);
  cfg.seed = 78;
  EXPECT_NE(generate_population(cfg).records, a.records);
}

TEST(Population, PrefixIsStableWhenNGrows) {
  PopulationConfig cfg;
  cfg.n = 50;
  const auto small = generate_population(cfg);
  cfg.n = 100;
  const auto large = generate_population(cfg);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(small.records[i].persona, large.records[i].persona);
}

TEST(Population, AllWhiteWhenOnlyWhiteHasMass) {
  PopulationConfig cfg;
  cfg.n = 500;
  cfg.race_probs = {1, 0, 0, 0, 0};
  for (const auto& r : generate_population(cfg).records) {
    EXPECT_EQ(r.persona.race, Race::kWhite);
    EXPECT_EQ(r.features[Feature::kRaceBlack] + r.features[Feature::kRaceNative] + r.features[Feature::kRaceAsian] +
                  r.features[Feature::kRacePacific],
              0.0);
  }
}

TEST(Population, MarginalsMatchConfiguration) {
  PopulationConfig cfg;
  cfg.n = 20000;
  const auto pop = generate_population(cfg);
  std::array<double, 4> edu{};
  double male = 0;
  for (const auto& r : pop.records) {
    edu[static_cast<int>(r.persona.education) - 1] += 1;
    male += r.persona.gender == Gender::kMale;
    EXPECT_GE(r.persona.age, cfg.age_min);
    EXPECT_LE(r.persona.age, cfg.age_max);
    EXPECT_GT(r.persona.weekly_income, 0.0);
  }
  const double n = static_cast<double>(cfg.n);
  for (std::size_t k = 0; k < 4; ++k) {
    const double p = cfg.edu_probs[k];
    EXPECT_NEAR(edu[k] / n, p, 4 * std::sqrt(p * (1 - p) / n));
  }
  EXPECT_NEAR(male / n, cfg.male_prob, 4 * std::sqrt(0.25 / n));
}

TEST(Population, InvalidConfigIsRejected) {
  PopulationConfig cfg;
  cfg.edu_probs = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(cfg.validate(), Error);
  PopulationConfig empty;
  empty.n = 0;
  EXPECT_THROW(empty.validate(), Error);
}

TEST(Simulate, ZeroThetaGivesEqualMinutes) {
  PopulationConfig cfg;
  cfg.n = 20;
  const auto recs = simulate_allocations(ThetaMatrix{}, generate_population(cfg).records, NoiseConfig{}, 1);
  for (const auto& r : recs) {
    for (auto a : kActivities) EXPECT_NEAR((*r.observed)[a], 360.0, 1e-9);
  }
}

TEST(Simulate, NoiselessEqualsPrediction) {
  Rng rng(9);
  const auto theta = fixtures::random_theta(rng);
  PopulationConfig cfg;
  cfg.n = 100;
  const auto recs = simulate_allocations(theta, generate_population(cfg).records, NoiseConfig{}, 1);
  for (const auto& r : recs) {
    const auto want = shares_to_minutes(predict_shares(theta, r.features));
    for (auto a : kActivities) EXPECT_NEAR((*r.observed)[a], want[a], 1e-9);
  }
}

TEST(Simulate, KeyedNoiseFollowsRecordId) {
  Rng rng(10);
  const auto theta = fixtures::random_theta(rng);
  PopulationConfig cfg;
  cfg.n = 40;
  const auto pop = generate_population(cfg).records;
  NoiseConfig noise{NoiseKind::kDirichlet, 200.0};
  const auto full = simulate_allocations_keyed(theta, pop, noise, 5);
  Records reversed(pop.rbegin(), pop.rend());
  reversed.pop_back();
  const auto partial = simulate_allocations_keyed(theta, reversed, noise, 5);
  for (const auto& r : partial) {
    const auto it = std::find_if(full.begin(), full.end(), [&](const CleanRecord& f) { return f.record_id == r.record_id; });
    ASSERT_NE(it, full.end());
    EXPECT_EQ(it->observed, r.observed);
  }
}

TEST(Dirichlet, MomentsMatchConcentration) {
  Rng rng(12);
  const std::array<double, 4> mean{0.15, 0.2, 0.4, 0.25};
  const double kappa = 50.0;
  const int draws = 40000;
  std::array<double, 4> sum{}, sumsq{};
  for (int i = 0; i < draws; ++i) {
    const auto s = dirichlet_shares(rng, mean, kappa);
    double total = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GT(s[j], 0.0);
      sum[j] += s[j];
      sumsq[j] += s[j] * s[j];
      total += s[j];
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    const double m = sum[j] / draws;
    const double var = sumsq[j] / draws - m * m;
    const double want_var = mean[j] * (1 - mean[j]) / (kappa + 1);
    EXPECT_NEAR(m, mean[j], 5 * std::sqrt(want_var / draws));
    EXPECT_NEAR(var / want_var, 1.0, 0.05);
  }
}

TEST(Dirichlet, TinyConcentrationStaysPositive) {
  Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    for (double v : dirichlet_shares(rng, {0.25, 0.25, 0.25, 0.25}, 0.05)) EXPECT_GT(v, 0.0);
  }
}

TEST(Metadata, ThetaRoundTrip) {
  Rng rng(14);
  const auto theta = fixtures::random_theta(rng);
  EXPECT_EQ(theta_from_json(theta_to_json(theta)), theta);
  const auto meta = dataset_metadata(PopulationConfig{}, theta, NoiseConfig{}, 3, {});
  EXPECT_EQ(meta.at("prng").get<std::string>(), std::string(kPrngId));
}

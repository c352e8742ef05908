#pragma once

// Synthetic populations and forward simulation from a known ThetaMatrix.

#include <array>
#include <cstdint>

#include <json.hpp>

#include "choicealign/ingest.hpp"
#include "choicealign/random.hpp"
#include "choicealign/records.hpp"

namespace choicealign::synth {

struct PopulationConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;

  double age_mean = 42.0;  // normal, truncated to [age_min, age_max]
  double age_sd = 13.0;
  double age_min = 18.0;
  double age_max = 80.0;

  std::array<double, 4> edu_probs = {0.40, 0.28, 0.20, 0.12};  // levels 1..4

  double earn_mu = 6.8;  // log-normal weekly earnings
  double earn_sigma = 0.6;

  double male_prob = 0.51;
  std::array<double, 3> spouse_probs = {0.54, 0.06, 0.40};  // spouse, partner, none
  std::array<double, 5> race_probs = {0.80, 0.12, 0.01, 0.06, 0.01};  // W, B, N, A, P

  // Optional covariate dependence. All zero gives independent marginals.
  double earn_edu_slope = 0.0;  // added to log-earnings per education level above 2.5
  double earn_age_slope = 0.0;  // added to log-earnings per sd of age
  double earn_male_shift = 0.0;  // added to log-earnings for men
  double spouse_age_slope = 0.0;  // log-odds shift of "spouse" vs other statuses per sd of age

  void validate() const;
  nlohmann::json to_json() const;
  static PopulationConfig from_json(const nlohmann::json& j);
};

enum class NoiseKind { kNone, kDirichlet };

struct NoiseConfig {
  NoiseKind kind = NoiseKind::kNone;
  double concentration = 1000.0;  // Dirichlet kappa

  void validate() const;
  nlohmann::json to_json() const;
  static NoiseConfig from_json(const nlohmann::json& j);
};

struct Population {
  Records records;  // personas and standardized features; no allocations
  ingest::StandardizationParams standardization;
};

/// Deterministic given cfg.seed: record i draws from stream derive_seed(seed, i).
Population generate_population(const PopulationConfig& cfg);

/// Dirichlet draw with mean `mean` and concentration kappa; strictly positive.
std::array<double, kNumActivities> dirichlet_shares(Rng& rng, const std::array<double, kNumActivities>& mean,
                                                    double kappa);

/// Replaces every record's observed allocation with a draw from the model.
Records simulate_allocations(const ThetaMatrix& theta_star, Records records, const NoiseConfig& noise,
                             std::uint64_t seed, double budget = kMinutesPerDay);

/// Like simulate_allocations, but record r draws its noise from stream
/// fnv1a64(r.record_id), so a record keeps its draw when others are added,
/// dropped or reordered.
Records simulate_allocations_keyed(const ThetaMatrix& theta_star, Records records, const NoiseConfig& noise,
                                   std::uint64_t seed, double budget = kMinutesPerDay);

nlohmann::json theta_to_json(const ThetaMatrix& theta);
ThetaMatrix theta_from_json(const nlohmann::json& j);

/// Metadata written beside synthetic datasets.
nlohmann::json dataset_metadata(const PopulationConfig& pop, const ThetaMatrix& theta_star,
                                const NoiseConfig& noise, std::uint64_t noise_seed,
                                const ingest::StandardizationParams& standardization);

}  // namespace choicealign::synth

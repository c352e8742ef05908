#include "choicealign/synth.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/parallel.hpp"

namespace choicealign::synth {
namespace {

template <std::size_t N>
void check_probs(const std::array<double, N>& p, std::string_view what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || v > 1.0) throw_usage(fmt::format("{}: probabilities must lie in [0, 1]", what));
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw_usage(fmt::format("{}: probabilities sum to {}, not 1", what, sum));
}

template <std::size_t N>
std::array<double, N> read_array(const nlohmann::json& j, const char* key, std::array<double, N> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N) throw_usage(fmt::format("'{}' must be an array of {} numbers", key, N));
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = v[i].get<double>();
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr std::array<Race, 5> kRaceOrder = {Race::kWhite, Race::kBlack, Race::kNative, Race::kAsian,
                                            Race::kPacific};

}  // namespace

void PopulationConfig::validate() const {
  if (n < 1) throw_usage("population: n must be at least 1");
  if (!(age_sd > 0.0) || !(age_min < age_max)) throw_usage("population: invalid age distribution");
  if (!(earn_sigma > 0.0)) throw_usage("population: earn_sigma must be positive");
  if (!(male_prob >= 0.0 && male_prob <= 1.0)) throw_usage("population: male_prob outside [0, 1]");
  check_probs(edu_probs, "edu_probs");
  check_probs(spouse_probs, "spouse_probs");
  check_probs(race_probs, "race_probs");
}

nlohmann::json PopulationConfig::to_json() const {
  return nlohmann::json{{"n", n},
                        {"seed", seed},
                        {"age_mean", age_mean},
                        {"age_sd", age_sd},
                        {"age_min", age_min},
                        {"age_max", age_max},
                        {"edu_probs", edu_probs},
                        {"earn_mu", earn_mu},
                        {"earn_sigma", earn_sigma},
                        {"male_prob", male_prob},
                        {"spouse_probs", spouse_probs},
                        {"race_probs", race_probs},
                        {"earn_edu_slope", earn_edu_slope},
                        {"earn_age_slope", earn_age_slope},
                        {"earn_male_shift", earn_male_shift},
                        {"spouse_age_slope", spouse_age_slope}};
}

PopulationConfig PopulationConfig::from_json(const nlohmann::json& j) {
  PopulationConfig c;
  auto num = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  num("age_mean", c.age_mean);
  num("age_sd", c.age_sd);
  num("age_min", c.age_min);
  num("age_max", c.age_max);
  num("earn_mu", c.earn_mu);
  num("earn_sigma", c.earn_sigma);
  num("male_prob", c.male_prob);
  num("earn_edu_slope", c.earn_edu_slope);
  num("earn_age_slope", c.earn_age_slope);
  num("earn_male_shift", c.earn_male_shift);
  num("spouse_age_slope", c.spouse_age_slope);
  c.edu_probs = read_array(j, "edu_probs", c.edu_probs);
  c.spouse_probs = read_array(j, "spouse_probs", c.spouse_probs);
  c.race_probs = read_array(j, "race_probs", c.race_probs);
  c.validate();
  return c;
}

void NoiseConfig::validate() const {
  if (kind == NoiseKind::kDirichlet && !(concentration > 0.0)) {
    throw_usage("noise: Dirichlet concentration must be positive");
  }
}

nlohmann::json NoiseConfig::to_json() const {
  return nlohmann::json{{"kind", kind == NoiseKind::kNone ? "none" : "dirichlet"},
                        {"concentration", concentration}};
}

NoiseConfig NoiseConfig::from_json(const nlohmann::json& j) {
  NoiseConfig c;
  const auto kind = j.value("kind", std::string("none"));
  if (kind == "none") {
    c.kind = NoiseKind::kNone;
  } else if (kind == "dirichlet") {
    c.kind = NoiseKind::kDirichlet;
  } else {
    throw_usage(fmt::format("noise: unknown kind '{}'", kind));
  }
  c.concentration = j.value("concentration", c.concentration);
  c.validate();
  return c;
}

Population generate_population(const PopulationConfig& cfg) {
  cfg.validate();
  Population pop;
  pop.records.resize(cfg.n);
  parallel_for(cfg.n, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, i));
    PersonaRecord p;
    double age = cfg.age_mean;
    bool inside = false;
    for (int tries = 0; tries < 1000 && !inside; ++tries) {
      age = std::round(rng.normal(cfg.age_mean, cfg.age_sd));
      inside = age >= cfg.age_min && age <= cfg.age_max;
    }
    if (!inside) age = std::clamp(std::round(cfg.age_mean), cfg.age_min, cfg.age_max);
    p.age = age;
    const double age_z = (age - cfg.age_mean) / cfg.age_sd;

    p.education = static_cast<Education>(rng.categorical(cfg.edu_probs) + 1);
    p.gender = rng.bernoulli(cfg.male_prob) ? Gender::kMale : Gender::kFemale;

    const double edu_level = static_cast<double>(static_cast<int>(p.education));
    const double log_mu = cfg.earn_mu + cfg.earn_edu_slope * (edu_level - 2.5) + cfg.earn_age_slope * age_z +
                          (p.gender == Gender::kMale ? cfg.earn_male_shift : 0.0);
    p.weekly_income = std::round(rng.lognormal(log_mu, cfg.earn_sigma) * 100.0) / 100.0;

    std::array<double, 3> sp = cfg.spouse_probs;
    if (cfg.spouse_age_slope != 0.0 && sp[0] > 0.0 && sp[0] < 1.0) {
      const double shifted = sigmoid(std::log(sp[0] / (1.0 - sp[0])) + cfg.spouse_age_slope * age_z);
      const double rest = sp[1] + sp[2];
      sp = {shifted, sp[1] / rest * (1.0 - shifted), sp[2] / rest * (1.0 - shifted)};
    }
    p.spouse = static_cast<SpouseStatus>(rng.categorical(sp) + 1);
    p.race = kRaceOrder[rng.categorical(cfg.race_probs)];

    auto& rec = pop.records[i];
    rec.record_id = fmt::format("syn-{:06d}", i + 1);
    rec.persona = p;
  });
  if (cfg.n >= 2) {
    pop.standardization = ingest::fit_standardization(pop.records);
  } else {
    // a single record cannot be standardized; centre it with unit scale
    const auto& p = pop.records.front().persona;
    pop.standardization = {{p.age, 1.0},
                           {static_cast<double>(static_cast<int>(p.education)), 1.0},
                           {p.weekly_income, 1.0}};
  }
  pop.records = ingest::apply_standardization(std::move(pop.records), pop.standardization);
  return pop;
}

std::array<double, kNumActivities> dirichlet_shares(Rng& rng, const std::array<double, kNumActivities>& mean,
                                                    double kappa) {
  std::array<double, kNumActivities> logs{};
  for (std::size_t j = 0; j < kNumActivities; ++j) logs[j] = rng.log_gamma_draw(kappa * mean[j]);
  const double top = *std::max_element(logs.begin(), logs.end());
  std::array<double, kNumActivities> s{};
  double total = 0.0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    s[j] = std::max(std::exp(logs[j] - top), std::numeric_limits<double>::min());
    total += s[j];
  }
  for (double& v : s) v /= total;
  return s;
}

namespace {

template <typename StreamFn>
Records simulate(const ThetaMatrix& theta_star, Records records, const NoiseConfig& noise, double budget,
                 StreamFn stream_seed) {
  noise.validate();
  parallel_for(records.size(), [&](std::size_t i) {
    auto& rec = records[i];
    const auto predicted = predict_shares(theta_star, rec.features).values();
    std::array<double, kNumActivities> shares = predicted;
    if (noise.kind == NoiseKind::kDirichlet) {
      Rng rng(stream_seed(i, rec));
      shares = dirichlet_shares(rng, predicted, noise.concentration);
    }
    std::array<double, kNumActivities> minutes{};
    for (std::size_t j = 0; j < kNumActivities; ++j) minutes[j] = budget * shares[j];
    rec.observed = Allocation::from_minutes(minutes, budget);
    rec.flags = {};
  });
  return records;
}

}  // namespace

Records simulate_allocations(const ThetaMatrix& theta_star, Records records, const NoiseConfig& noise,
                             std::uint64_t seed, double budget) {
  return simulate(theta_star, std::move(records), noise, budget, [&](std::size_t i, const CleanRecord&) { return derive_seed(seed, i); });
}

Records simulate_allocations_keyed(const ThetaMatrix& theta_star, Records records, const NoiseConfig& noise,
                                   std::uint64_t seed, double budget) {
  return simulate(theta_star, std::move(records), noise, budget, [&](std::size_t, const CleanRecord& r) {
    return derive_seed(seed, fnv1a64(r.record_id));
  });
}

nlohmann::json theta_to_json(const ThetaMatrix& theta) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    const auto act = kActivities[a];
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      row[std::string(feature_name(static_cast<Feature>(f)))] = theta.at(act, static_cast<Feature>(f));
    }
    j[std::string(activity_name(act))] = row;
  }
  return j;
}

ThetaMatrix theta_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw_usage("theta: expected an object keyed by activity");
  ThetaMatrix theta;
  for (const auto& [act_name, row] : j.items()) {
    const auto act = activity_from_name(act_name);
    if (!act || *act == Activity::kOther) {
      throw_usage(fmt::format("theta: '{}' is not a free activity (leisure, work, sleep_personal)", act_name));
    }
    for (const auto& [feat_name, value] : row.items()) {
      const auto feat = feature_from_name(feat_name);
      if (!feat) throw_usage(fmt::format("theta: unknown feature '{}'", feat_name));
      theta.set(*act, *feat, value.get<double>());
    }
  }
  return theta;
}

nlohmann::json dataset_metadata(const PopulationConfig& pop, const ThetaMatrix& theta_star,
                                const NoiseConfig& noise, std::uint64_t noise_seed,
                                const ingest::StandardizationParams& standardization) {
  return nlohmann::json{{"prng", kPrngId},
                        {"population", pop.to_json()},
                        {"theta_star", theta_to_json(theta_star)},
                        {"noise", noise.to_json()},
                        {"noise_seed", noise_seed},
                        {"standardization", standardization.to_json()},
                        {"budget_minutes", kMinutesPerDay}};
}

}  // namespace choicealign::synth

#include "choicealign/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/random.hpp"

namespace choicealign::shifts {
namespace {

using nlohmann::json;

// std::nearbyint under the default rounding mode rounds halves to even.
long long round_half_even(double v) { return static_cast<long long>(std::nearbyint(v)); }

void check_range(double v, double lo, double hi, std::string_view what) {
  if (!(v >= lo && v <= hi)) throw_usage(fmt::format("shift: {} = {} outside [{}, {}]", what, v, lo, hi));
}

struct RakePlan {
  std::size_t num_categories;
  std::vector<double> pp;
  std::vector<std::string> category_names;
};

// Shared raking mechanics. stratum_of returns nullopt for records left alone.
template <typename StratumFn, typename CategoryFn>
ShiftOutcome rake(const Records& records, StratumFn stratum_of, CategoryFn category_of, const RakePlan& plan,
                  std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto s = stratum_of(records[i])) strata[*s].push_back(i);
  }

  std::vector<bool> dropped(records.size(), false);
  std::vector<std::size_t> copies(records.size(), 0);
  ShiftOutcome out;
  json realized = json::array();

  for (auto& [name, members] : strata) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return records[a].record_id != records[b].record_id ? records[a].record_id < records[b].record_id : a < b;
    });
    std::vector<std::vector<std::size_t>> by_cat(plan.num_categories);
    for (std::size_t i : members) by_cat[category_of(records[i])].push_back(i);
    std::vector<long long> counts(plan.num_categories);
    for (std::size_t k = 0; k < plan.num_categories; ++k) counts[k] = static_cast<long long>(by_cat[k].size());
    const auto targets = raking_targets(counts, plan.pp);

    json entry = {{"stratum", name}, {"size", members.size()}, {"counts", counts}, {"targets", targets}};
    bool skip = false;
    for (std::size_t k = 0; k < plan.num_categories; ++k) {
      if (counts[k] == 0 && targets[k] > 0) {
        out.warnings.push_back(fmt::format("stratum '{}' has no {} records to resample; left unchanged", name,
                                           plan.category_names[k]));
        skip = true;
      }
    }
    entry["skipped"] = skip;
    realized.push_back(entry);
    if (skip) continue;

    const std::uint64_t stratum_seed = derive_seed(seed, fnv1a64(name));
    for (std::size_t k = 0; k < plan.num_categories; ++k) {
      const auto& cat = by_cat[k];
      const long long have = counts[k];
      const long long want = targets[k];
      if (want == have) continue;
      Rng rng(derive_seed(stratum_seed, k));
      if (want < have) {
        std::vector<std::size_t> order = cat;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
        for (long long d = 0; d < have - want; ++d) dropped[order[static_cast<std::size_t>(d)]] = true;
      } else {
        for (long long d = 0; d < want - have; ++d) ++copies[cat[rng.uniform_index(cat.size())]];
      }
    }
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!dropped[i]) out.records.push_back(records[i]);
    for (std::size_t c = 0; c < copies[i]; ++c) {
      auto dup = records[i];
      dup.record_id = fmt::format("{}~dup{}", records[i].record_id, c + 1);
      out.records.push_back(std::move(dup));
    }
  }
  out.provenance = {{"strata", realized}, {"records_in", records.size()}, {"records_out", out.records.size()}};
  return out;
}

std::size_t race_category(const CleanRecord& r) {
  switch (r.persona.race) {
    case Race::kWhite: return 0;
    case Race::kBlack: return 1;
    case Race::kNative: return 2;
    case Race::kAsian: return 3;
    case Race::kPacific: return 4;
  }
  return 0;
}

std::size_t spouse_category(const CleanRecord& r) { return static_cast<std::size_t>(r.persona.spouse) - 1; }

}  // namespace

std::string_view shift_kind_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::kEarningsQuantileLift: return "earnings_quantile_lift";
    case ShiftKind::kAgeBandShift: return "age_band_shift";
    case ShiftKind::kRaceMix: return "race_mix";
    case ShiftKind::kSpouseMix: return "spouse_mix";
  }
  return "?";
}

std::optional<ShiftKind> shift_kind_from_name(std::string_view name) {
  for (auto k : kAllShifts) {
    if (shift_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

void ShiftSpec::validate() const {
  check_range(lift_sd, 0.0, 3.0, "lift_sd");
  check_range(age_fraction, 0.0, 1.0, "age_fraction");
  check_range(age_delta, 0.0, 30.0, "age_delta");
  if (!(age_low <= age_high)) throw_usage("shift: age band must satisfy low <= high");
  check_range(asian_pp, -0.5, 0.5, "asian_pp");
  check_range(white_pp, -0.5, 0.5, "white_pp");
  check_range(spouse_pp, -0.5, 0.5, "spouse_pp");
  check_range(no_spouse_pp, -0.5, 0.5, "no_spouse_pp");
  if (!(spouse_age_low < spouse_age_high)) throw_usage("shift: spouse age range must satisfy low < high");
  (void)age_band(0.0, cutpoints);  // validates the cutpoints
}

ShiftSpec ShiftSpec::zero_magnitude() const {
  ShiftSpec s = *this;
  s.lift_sd = 0.0;
  s.age_fraction = 0.0;
  s.asian_pp = s.white_pp = 0.0;
  s.spouse_pp = s.no_spouse_pp = 0.0;
  return s;
}

json ShiftSpec::to_json() const {
  json j = {{"kind", shift_kind_name(kind)}, {"seed", seed}, {"cutpoints", cutpoints}};
  switch (kind) {
    case ShiftKind::kEarningsQuantileLift:
      j["lift_sd"] = lift_sd;
      break;
    case ShiftKind::kAgeBandShift:
      j["age_fraction"] = age_fraction;
      j["age_delta"] = age_delta;
      j["age_low"] = age_low;
      j["age_high"] = age_high;
      break;
    case ShiftKind::kRaceMix:
      j["asian_pp"] = asian_pp;
      j["white_pp"] = white_pp;
      break;
    case ShiftKind::kSpouseMix:
      j["spouse_pp"] = spouse_pp;
      j["no_spouse_pp"] = no_spouse_pp;
      j["spouse_age_low"] = spouse_age_low;
      j["spouse_age_high"] = spouse_age_high;
      break;
  }
  return j;
}

ShiftSpec ShiftSpec::from_json(const json& j) {
  static const std::vector<std::string> known = {"kind",     "seed",         "cutpoints",      "lift_sd",
                                                 "age_fraction", "age_delta", "age_low",        "age_high",
                                                 "asian_pp", "white_pp",     "spouse_pp",      "no_spouse_pp",
                                                 "spouse_age_low", "spouse_age_high"};
  if (!j.is_object()) throw_usage("shift spec must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw_usage(fmt::format("shift spec: unknown field '{}'", key));
    }
  }
  const auto kind_name = j.at("kind").get<std::string>();
  const auto kind = shift_kind_from_name(kind_name);
  if (!kind) throw_usage(fmt::format("shift spec: unknown kind '{}'", kind_name));
  ShiftSpec s = default_spec(*kind, j.value("seed", std::uint64_t{0}));
  auto num = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  num("lift_sd", s.lift_sd);
  num("age_fraction", s.age_fraction);
  num("age_delta", s.age_delta);
  num("age_low", s.age_low);
  num("age_high", s.age_high);
  num("asian_pp", s.asian_pp);
  num("white_pp", s.white_pp);
  num("spouse_pp", s.spouse_pp);
  num("no_spouse_pp", s.no_spouse_pp);
  num("spouse_age_low", s.spouse_age_low);
  num("spouse_age_high", s.spouse_age_high);
  if (j.contains("cutpoints")) s.cutpoints = j.at("cutpoints").get<std::vector<double>>();
  s.validate();
  return s;
}

ShiftSpec default_spec(ShiftKind kind, std::uint64_t seed) {
  ShiftSpec s;
  s.kind = kind;
  s.seed = seed;
  return s;
}

std::vector<long long> raking_targets(const std::vector<long long>& counts, const std::vector<double>& pp) {
  if (counts.size() != pp.size()) throw_usage("raking: counts and adjustments differ in length");
  const long long m = std::accumulate(counts.begin(), counts.end(), 0LL);
  std::vector<long long> targets = counts;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (pp[k] == 0.0) continue;
    const double raw = static_cast<double>(counts[k]) + static_cast<double>(m) * pp[k];
    targets[k] = std::clamp(round_half_even(raw), 0LL, m);
  }
  long long residual = m - std::accumulate(targets.begin(), targets.end(), 0LL);
  if (residual == 0) return targets;

  // absorbers: unadjusted nonempty categories first, each group by size
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  auto rank = [&](std::size_t k) { return (pp[k] == 0.0 && counts[k] > 0) ? 0 : 1; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return counts[a] > counts[b];
  });
  for (std::size_t k : order) {
    if (residual == 0) break;
    const long long next = std::clamp(targets[k] + residual, 0LL, m);
    residual -= next - targets[k];
    targets[k] = next;
  }
  return targets;
}

ShiftOutcome shift_earnings_quantile_lift(const Records& records, double magnitude) {
  ShiftOutcome out;
  out.records = records;
  if (records.empty()) return out;
  std::vector<double> income;
  income.reserve(records.size());
  for (const auto& r : records) income.push_back(r.persona.weekly_income);
  std::sort(income.begin(), income.end());
  const std::size_t n = income.size();
  const double median = n % 2 ? income[n / 2] : 0.5 * (income[n / 2 - 1] + income[n / 2]);
  double sd = 0.0;
  if (n >= 2) {
    const double mean = std::accumulate(income.begin(), income.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : income) ss += (v - mean) * (v - mean);
    sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  const double lift = magnitude * sd;
  std::size_t lifted = 0;
  for (auto& r : out.records) {
    if (r.persona.weekly_income <= median) {
      r.persona.weekly_income += lift;
      ++lifted;
    }
  }
  out.provenance = {{"median", median}, {"sd", sd}, {"lift", lift}, {"lifted", lifted}};
  return out;
}

ShiftOutcome shift_age_band(const Records& records, double p, double delta, double low, double high,
                            std::uint64_t seed) {
  ShiftOutcome out;
  out.records = records;
  std::vector<std::pair<std::uint64_t, std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double age = records[i].persona.age;
    if (age >= low && age <= high) members.emplace_back(derive_seed(seed, fnv1a64(records[i].record_id)), i);
  }
  std::sort(members.begin(), members.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return records[a.second].record_id < records[b.second].record_id;
  });
  const auto count = static_cast<std::size_t>(
      std::clamp(round_half_even(p * static_cast<double>(members.size())), 0LL,
                 static_cast<long long>(members.size())));
  for (std::size_t s = 0; s < count; ++s) out.records[members[s].second].persona.age += delta;
  out.provenance = {{"band_members", members.size()}, {"shifted", count}};
  return out;
}

ShiftOutcome shift_race_mix(const Records& records, double asian_pp, double white_pp, std::uint64_t seed,
                            std::span<const double> cutpoints) {
  RakePlan plan{5, {white_pp, 0.0, 0.0, asian_pp, 0.0}, {"White", "Black", "Native", "Asian", "Pacific"}};
  auto stratum = [&](const CleanRecord& r) -> std::optional<std::string> {
    return fmt::format("{}|{}", age_band_label(age_band(r.persona.age, cutpoints), cutpoints),
                       gender_label(r.persona.gender));
  };
  return rake(records, stratum, race_category, plan, seed);
}

ShiftOutcome shift_spouse_mix(const Records& records, double spouse_pp, double no_spouse_pp, std::uint64_t seed,
                              double age_low, double age_high, std::span<const double> cutpoints) {
  RakePlan plan{3, {spouse_pp, 0.0, no_spouse_pp}, {"spouse", "partner", "no-spouse"}};
  auto stratum = [&](const CleanRecord& r) -> std::optional<std::string> {
    const int b = age_band(r.persona.age, cutpoints);
    if (b < 0) return std::nullopt;
    const auto i = static_cast<std::size_t>(b);
    if (cutpoints[i] >= age_low && cutpoints[i + 1] <= age_high) return age_band_label(b, cutpoints);
    return std::nullopt;
  };
  return rake(records, stratum, spouse_category, plan, seed);
}

ShiftOutcome apply_shift(const Records& records, const ShiftSpec& spec) {
  spec.validate();
  ShiftOutcome out;
  switch (spec.kind) {
    case ShiftKind::kEarningsQuantileLift:
      out = shift_earnings_quantile_lift(records, spec.lift_sd);
      break;
    case ShiftKind::kAgeBandShift:
      out = shift_age_band(records, spec.age_fraction, spec.age_delta, spec.age_low, spec.age_high, spec.seed);
      break;
    case ShiftKind::kRaceMix:
      out = shift_race_mix(records, spec.asian_pp, spec.white_pp, spec.seed, spec.cutpoints);
      break;
    case ShiftKind::kSpouseMix:
      out = shift_spouse_mix(records, spec.spouse_pp, spec.no_spouse_pp, spec.seed, spec.spouse_age_low,
                             spec.spouse_age_high, spec.cutpoints);
      break;
  }
  out.provenance = {{"spec", spec.to_json()}, {"realized", out.provenance}, {"warnings", out.warnings}};
  return out;
}

}  // namespace choicealign::shifts

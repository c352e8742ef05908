#include "choicealign/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/kernels.hpp"

namespace choicealign::alignment {
namespace {

using estimator::FitResult;
using nlohmann::json;

bool in_scope(std::size_t f, CellScope scope) {
  return scope == CellScope::kAllCells || f != index_of(Feature::kIntercept);
}

std::array<double, kNumFreeActivities> attribute_vector(const FitResult& fit, Feature f) {
  return {fit.theta_hat.at(Activity::kLeisure, f), fit.theta_hat.at(Activity::kWork, f),
          fit.theta_hat.at(Activity::kSleep, f)};
}

std::string group_value(const CleanRecord& r, const std::string& key) {
  const auto& p = r.persona;
  if (key == "sex") return std::string(gender_label(p.gender));
  if (key == "race") return std::string(race_label(p.race));
  if (key == "education") return std::string(education_label(p.education));
  if (key == "spouse") return std::string(spouse_label(p.spouse));
  if (key == "age_band") return age_band_label(age_band(p.age));
  const auto f = feature_from_name(key);
  if (!f || !feature_is_binary(*f)) throw_usage(fmt::format("unknown grouping key '{}'", key));
  return r.features[*f] != 0.0 ? "1" : "0";
}

Activity parse_activity(const json& j) {
  const auto a = activity_from_name(j.get<std::string>());
  if (!a) throw Error(ErrorKind::kParse, fmt::format("unknown activity {}", j.dump()));
  return *a;
}

Feature parse_feature(const json& j) {
  const auto f = feature_from_name(j.get<std::string>());
  if (!f) throw Error(ErrorKind::kParse, fmt::format("unknown feature {}", j.dump()));
  return *f;
}

json table_to_json(const DeviationTable& t) {
  json out = json::object();
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    json row = json::object();
    for (std::size_t f = 0; f < kNumFeatures; ++f) row[std::string(feature_name(static_cast<Feature>(f)))] = t[a][f];
    out[std::string(activity_name(kActivities[a]))] = row;
  }
  return out;
}

DeviationTable table_from_json(const json& j) {
  DeviationTable t{};
  for (const auto& [act, row] : j.items()) {
    const auto a = index_of(parse_activity(json(act)));
    if (a >= kNumFreeActivities) throw Error(ErrorKind::kParse, "deviation table: reference activity present");
    for (const auto& [feat, v] : row.items()) t[a][index_of(parse_feature(json(feat)))] = v.get<double>();
  }
  return t;
}

template <std::size_t N>
json activity_array(const std::array<double, N>& v) {
  json out = json::object();
  for (std::size_t a = 0; a < N; ++a) out[std::string(activity_name(kActivities[a]))] = v[a];
  return out;
}

std::array<double, kNumFreeActivities> activity_array_from_json(const json& j) {
  std::array<double, kNumFreeActivities> out{};
  for (const auto& [act, v] : j.items()) {
    const auto a = index_of(parse_activity(json(act)));
    if (a >= kNumFreeActivities) throw Error(ErrorKind::kParse, "reference activity in per-activity block");
    out[a] = v.get<double>();
  }
  return out;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw_data(fmt::format("cosine: lengths differ ({} vs {})", a.size(), b.size()));
  const double na = kernels::squared_norm(a);
  const double nb = kernels::squared_norm(b);
  if (na == 0.0 || nb == 0.0) throw_data("cosine: zero vector has no direction");
  const double c = kernels::dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

DeviationTable feature_deviations(const FitResult& human, const FitResult& model) {
  std::vector<std::string_view> differing;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (human.active[f] != model.active[f]) differing.push_back(feature_name(static_cast<Feature>(f)));
  }
  if (!differing.empty()) {
    throw_data(fmt::format("fits use different feature sets; differing: {}", fmt::join(differing, ", ")));
  }
  DeviationTable d{};
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto act = kActivities[a];
      const auto feat = static_cast<Feature>(f);
      d[a][f] = std::abs(model.theta_hat.at(act, feat) - human.theta_hat.at(act, feat));
    }
  }
  return d;
}

double model_divergence(const DeviationTable& delta, CellScope scope) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : delta) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (!in_scope(f, scope)) continue;
      sum += row[f];
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

std::array<double, kNumFreeActivities> model_divergence_by_activity(const DeviationTable& delta, CellScope scope) {
  std::array<double, kNumFreeActivities> out{};
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (!in_scope(f, scope)) continue;
      sum += delta[a][f];
      ++n;
    }
    out[a] = sum / static_cast<double>(n);
  }
  return out;
}

DeviationTable attribute_divergence(std::span<const DeviationTable> tables) {
  if (tables.empty()) throw_usage("attribute divergence needs at least one model");
  DeviationTable out{};
  for (const auto& t : tables) {
    for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) out[a][f] += t[a][f];
    }
  }
  const auto n = static_cast<double>(tables.size());
  for (auto& row : out) {
    for (double& v : row) v /= n;
  }
  return out;
}

std::vector<RankedCell> rank_cells(const DeviationTable& table, CellScope scope) {
  std::vector<RankedCell> cells;
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (in_scope(f, scope)) cells.push_back({kActivities[a], static_cast<Feature>(f), table[a][f]});
    }
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const RankedCell& x, const RankedCell& y) { return x.value > y.value; });
  return cells;
}

double attribute_activity_cosine(const FitResult& human, const FitResult& model, Feature f) {
  const auto h = attribute_vector(human, f);
  const auto m = attribute_vector(model, f);
  return cosine_similarity(h, m);
}

double activity_cosine(const FitResult& human, const FitResult& model, Activity a, CellScope scope) {
  auto h = human.theta_hat.row(a);
  auto m = model.theta_hat.row(a);
  const std::size_t skip = scope == CellScope::kExcludeIntercept ? 1 : 0;
  return cosine_similarity(std::span<const double>(h).subspan(skip), std::span<const double>(m).subspan(skip));
}

std::vector<Group> subgroup_aggregate(const Records& records, const std::vector<std::string>& keys,
                                      std::size_t min_size) {
  if (records.empty()) throw_data("subgroup aggregation over an empty record set");
  std::map<std::string, Records> groups;
  for (const auto& r : records) {
    std::vector<std::string> parts;
    for (const auto& k : keys) parts.push_back(k + "=" + group_value(r, k));
    const auto key = parts.empty() ? std::string("all") : fmt::format("{}", fmt::join(parts, "|"));
    groups[key].push_back(r);
  }
  std::vector<Group> out;
  for (auto& [key, recs] : groups) {
    const bool unstable = recs.size() < min_size;
    out.push_back(Group{key, std::move(recs), unstable});
  }
  return out;
}

std::array<double, kNumActivities> mean_shares(const Records& records) {
  if (records.empty()) throw_data("mean shares of an empty record set");
  std::array<double, kNumActivities> sum{};
  for (const auto& r : records) {
    const auto s = observed_shares(r);
    for (std::size_t j = 0; j < kNumActivities; ++j) sum[j] += s[j];
  }
  for (double& v : sum) v /= static_cast<double>(records.size());
  return sum;
}

estimator::FeatureMask varying_features(const Records& records) {
  estimator::FeatureMask mask = estimator::kAllFeatures;
  if (records.empty()) return mask;
  for (std::size_t f = 1; f < kNumFeatures; ++f) {
    const double first = records.front().features[f];
    mask[f] = std::any_of(records.begin(), records.end(),
                          [&](const CleanRecord& r) { return r.features[f] != first; });
  }
  return mask;
}

AlignmentReport compare(const FitResult& human, std::span<const FitResult> models) {
  if (models.empty()) throw_usage("compare needs at least one model fit");
  AlignmentReport rep;
  rep.human = human.label;
  std::vector<DeviationTable> tables;
  for (const auto& m : models) {
    ModelComparison c;
    c.model = m.label;
    c.deviations = feature_deviations(human, m);
    for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
      c.activity_cosine[a] = activity_cosine(human, m, kActivities[a]);
      c.activity_cosine_no_intercept[a] = activity_cosine(human, m, kActivities[a], CellScope::kExcludeIntercept);
    }
    c.m_all_cells = model_divergence(c.deviations);
    c.m_no_intercept = model_divergence(c.deviations, CellScope::kExcludeIntercept);
    c.m_by_activity = model_divergence_by_activity(c.deviations);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto feat = static_cast<Feature>(f);
      const auto h = attribute_vector(human, feat);
      const auto v = attribute_vector(m, feat);
      if (kernels::squared_norm(h) > 0.0 && kernels::squared_norm(v) > 0.0) {
        c.attribute_cosine[f] = cosine_similarity(h, v);
      }
    }
    tables.push_back(c.deviations);
    rep.models.push_back(std::move(c));
  }
  rep.attribute_divergence = attribute_divergence(tables);
  rep.ranking = rank_cells(rep.attribute_divergence);

  for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
    WorstRow w{kActivities[a], Feature::kIntercept, -1.0, {}, Feature::kIntercept, -1.0};
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (rep.attribute_divergence[a][f] > w.worst_feature_value) {
        w.worst_feature = static_cast<Feature>(f);
        w.worst_feature_value = rep.attribute_divergence[a][f];
      }
      for (const auto& c : rep.models) {
        if (c.deviations[a][f] > w.worst_model_value) {
          w.worst_model = c.model;
          w.worst_model_feature = static_cast<Feature>(f);
          w.worst_model_value = c.deviations[a][f];
        }
      }
    }
    rep.worst.push_back(w);
  }
  return rep;
}

json to_json(const AlignmentReport& r) {
  json models = json::array();
  for (const auto& c : r.models) {
    json attr = json::object();
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto name = std::string(feature_name(static_cast<Feature>(f)));
      attr[name] = c.attribute_cosine[f] ? json(*c.attribute_cosine[f]) : json(nullptr);
    }
    models.push_back({{"model", c.model},
                      {"activity_cosine", activity_array(c.activity_cosine)},
                      {"activity_cosine_no_intercept", activity_array(c.activity_cosine_no_intercept)},
                      {"deviations", table_to_json(c.deviations)},
                      {"m_all_cells", c.m_all_cells},
                      {"m_no_intercept", c.m_no_intercept},
                      {"m_by_activity", activity_array(c.m_by_activity)},
                      {"attribute_cosine", attr}});
  }
  json ranking = json::array();
  for (const auto& cell : r.ranking) {
    ranking.push_back({{"activity", activity_name(cell.activity)},
                       {"feature", feature_name(cell.feature)},
                       {"a_f", cell.value}});
  }
  json worst = json::array();
  for (const auto& w : r.worst) {
    worst.push_back({{"activity", activity_name(w.activity)},
                     {"worst_feature", feature_name(w.worst_feature)},
                     {"worst_feature_a_f", w.worst_feature_value},
                     {"worst_model", w.worst_model},
                     {"worst_model_feature", feature_name(w.worst_model_feature)},
                     {"worst_model_delta", w.worst_model_value}});
  }
  return json{{"human", r.human},
              {"models", models},
              {"attribute_divergence", table_to_json(r.attribute_divergence)},
              {"ranking", ranking},
              {"worst_alignment", worst}};
}

AlignmentReport report_from_json(const json& j) {
  try {
    AlignmentReport r;
    r.human = j.at("human").get<std::string>();
    for (const auto& m : j.at("models")) {
      ModelComparison c;
      c.model = m.at("model").get<std::string>();
      c.activity_cosine = activity_array_from_json(m.at("activity_cosine"));
      c.activity_cosine_no_intercept = activity_array_from_json(m.at("activity_cosine_no_intercept"));
      c.deviations = table_from_json(m.at("deviations"));
      c.m_all_cells = m.at("m_all_cells").get<double>();
      c.m_no_intercept = m.at("m_no_intercept").get<double>();
      c.m_by_activity = activity_array_from_json(m.at("m_by_activity"));
      for (const auto& [feat, v] : m.at("attribute_cosine").items()) {
        if (!v.is_null()) c.attribute_cosine[index_of(parse_feature(json(feat)))] = v.get<double>();
      }
      r.models.push_back(std::move(c));
    }
    r.attribute_divergence = table_from_json(j.at("attribute_divergence"));
    for (const auto& cell : j.at("ranking")) {
      r.ranking.push_back({parse_activity(cell.at("activity")), parse_feature(cell.at("feature")),
                           cell.at("a_f").get<double>()});
    }
    for (const auto& w : j.at("worst_alignment")) {
      r.worst.push_back({parse_activity(w.at("activity")), parse_feature(w.at("worst_feature")),
                         w.at("worst_feature_a_f").get<double>(), w.at("worst_model").get<std::string>(),
                         parse_feature(w.at("worst_model_feature")), w.at("worst_model_delta").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("alignment report: {}", e.what()));
  }
}

std::string cosine_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::write_row(out, {"model", "activity", "cosine", "cosine_no_intercept"});
  for (const auto& c : r.models) {
    for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
      csv::write_row(out, {c.model, std::string(activity_name(kActivities[a])),
                           csv::format_double(c.activity_cosine[a]),
                           csv::format_double(c.activity_cosine_no_intercept[a])});
    }
  }
  return out.str();
}

std::string deviations_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::write_row(out, {"model", "activity", "feature", "delta"});
  for (const auto& c : r.models) {
    for (std::size_t a = 0; a < kNumFreeActivities; ++a) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        csv::write_row(out, {c.model, std::string(activity_name(kActivities[a])),
                             std::string(feature_name(static_cast<Feature>(f))),
                             csv::format_double(c.deviations[a][f])});
      }
    }
  }
  return out.str();
}

std::string divergence_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::Row header = {"model", "m_all_cells", "m_no_intercept"};
  for (std::size_t a = 0; a < kNumFreeActivities; ++a) header.push_back(fmt::format("m_{}", activity_name(kActivities[a])));
  csv::write_row(out, header);
  for (const auto& c : r.models) {
    csv::Row row = {c.model, csv::format_double(c.m_all_cells), csv::format_double(c.m_no_intercept)};
    for (double v : c.m_by_activity) row.push_back(csv::format_double(v));
    csv::write_row(out, row);
  }
  return out.str();
}

std::string attribute_divergence_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::write_row(out, {"rank", "activity", "feature", "a_f"});
  for (std::size_t i = 0; i < r.ranking.size(); ++i) {
    const auto& cell = r.ranking[i];
    csv::write_row(out, {std::to_string(i + 1), std::string(activity_name(cell.activity)),
                         std::string(feature_name(cell.feature)), csv::format_double(cell.value)});
  }
  return out.str();
}

std::string attribute_cosine_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::write_row(out, {"model", "feature", "cosine"});
  for (const auto& c : r.models) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto& v = c.attribute_cosine[f];
      csv::write_row(out, {c.model, std::string(feature_name(static_cast<Feature>(f))),
                           v ? csv::format_double(*v) : std::string()});
    }
  }
  return out.str();
}

std::string worst_alignment_csv(const AlignmentReport& r) {
  std::ostringstream out;
  csv::write_row(out, {"activity", "worst_feature", "worst_feature_a_f", "worst_model", "worst_model_feature",
                       "worst_model_delta"});
  for (const auto& w : r.worst) {
    csv::write_row(out, {std::string(activity_label(w.activity)), std::string(feature_name(w.worst_feature)),
                         csv::format_double(w.worst_feature_value), w.worst_model,
                         std::string(feature_name(w.worst_model_feature)), csv::format_double(w.worst_model_value)});
  }
  return out.str();
}

}  // namespace choicealign::alignment

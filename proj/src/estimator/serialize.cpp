#include <sstream>

#include <fmt/format.h>

#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"

namespace choicealign::estimator {
namespace {

using nlohmann::json;

Activity parse_activity(const json& j) {
  const auto name = j.get<std::string>();
  const auto a = activity_from_name(name);
  if (!a) throw Error(ErrorKind::kParse, fmt::format("unknown activity '{}'", name));
  return *a;
}

Feature parse_feature(const json& j) {
  const auto name = j.get<std::string>();
  const auto f = feature_from_name(name);
  if (!f) throw Error(ErrorKind::kParse, fmt::format("unknown feature '{}'", name));
  return *f;
}

json mask_to_json(const FeatureMask& m) {
  json out = json::array();
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (!m[f]) out.push_back(std::string(feature_name(static_cast<Feature>(f))));
  }
  return out;
}

FeatureMask mask_from_json(const json& j) {
  FeatureMask m = kAllFeatures;
  for (const auto& name : j) m[index_of(parse_feature(name))] = false;
  return m;
}

template <typename Fn>
auto parse_guard(std::string_view what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("{}: {}", what, e.what()));
  }
}

}  // namespace

json to_json(const FitResult& fit) {
  json coefs = json::array();
  for (const auto& c : fit.coefficients()) {
    coefs.push_back({{"activity", activity_name(c.activity)},
                     {"feature", feature_name(c.feature)},
                     {"estimate", c.estimate},
                     {"se", c.se},
                     {"ci_low", c.ci_low},
                     {"ci_high", c.ci_high}});
  }
  json cov = json::array();
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < fit.covariance.cols(); ++k) row.push_back(fit.covariance(i, k));
    cov.push_back(std::move(row));
  }
  return json{{"estimator", "structural"},
              {"label", fit.label},
              {"coefficients", coefs},
              {"covariance", cov},
              {"excluded_features", mask_to_json(fit.active)},
              {"diagnostics",
               {{"ci_method", fit.ci_method},
                {"sse", fit.sse},
                {"n_obs", fit.n_obs},
                {"iterations", fit.iterations},
                {"converged", fit.converged},
                {"gradient_norm", fit.gradient_norm},
                {"clamped_records", fit.clamped_records},
                {"sse_trace", fit.sse_trace}}}};
}

FitResult fit_result_from_json(const json& j) {
  return parse_guard("fit result", [&] {
    if (j.value("estimator", std::string()) != "structural") {
      throw Error(ErrorKind::kParse, "fit result: not a structural fit");
    }
    FitResult fit;
    fit.label = j.value("label", std::string());
    for (const auto& c : j.at("coefficients")) {
      const auto a = parse_activity(c.at("activity"));
      const auto f = parse_feature(c.at("feature"));
      if (a == Activity::kOther) throw Error(ErrorKind::kParse, "fit result: the reference activity has no coefficients");
      fit.theta_hat.set(a, f, c.at("estimate").get<double>());
      fit.ci_low.set(a, f, c.at("ci_low").get<double>());
      fit.ci_high.set(a, f, c.at("ci_high").get<double>());
    }
    const auto& cov = j.at("covariance");
    fit.covariance = Eigen::MatrixXd::Zero(kNumCoefficients, kNumCoefficients);
    if (cov.size() != kNumCoefficients) throw Error(ErrorKind::kParse, "fit result: covariance must be 33 x 33");
    for (std::size_t r = 0; r < kNumCoefficients; ++r) {
      if (cov[r].size() != kNumCoefficients) throw Error(ErrorKind::kParse, "fit result: covariance must be 33 x 33");
      for (std::size_t c = 0; c < kNumCoefficients; ++c) {
        fit.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov[r][c].get<double>();
      }
    }
    if (j.contains("excluded_features")) fit.active = mask_from_json(j.at("excluded_features"));
    const auto& d = j.at("diagnostics");
    fit.ci_method = d.at("ci_method").get<std::string>();
    fit.sse = d.at("sse").get<double>();
    fit.n_obs = d.at("n_obs").get<std::size_t>();
    fit.iterations = d.at("iterations").get<int>();
    fit.converged = d.at("converged").get<bool>();
    fit.gradient_norm = d.at("gradient_norm").get<double>();
    fit.clamped_records = d.value("clamped_records", std::size_t{0});
    fit.sse_trace = d.value("sse_trace", std::vector<double>{});
    return fit;
  });
}

json to_json(const OlsResult& ols) {
  json coefs = json::array();
  json r2 = json::object();
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    const auto a = kActivities[j];
    r2[std::string(activity_name(a))] = ols.r_squared[j];
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      coefs.push_back({{"activity", activity_name(a)},
                       {"feature", feature_name(static_cast<Feature>(f))},
                       {"estimate", ols.coef[j][f]},
                       {"se", ols.se[j][f]},
                       {"margin", ols.margin[j][f]}});
    }
  }
  return json{{"estimator", "ols"},
              {"label", ols.label},
              {"coefficients", coefs},
              {"r_squared", r2},
              {"n_obs", ols.n_obs},
              {"excluded_features", mask_to_json(ols.active)}};
}

OlsResult ols_result_from_json(const json& j) {
  return parse_guard("OLS result", [&] {
    if (j.value("estimator", std::string()) != "ols") throw Error(ErrorKind::kParse, "OLS result: not an OLS fit");
    OlsResult ols;
    ols.label = j.value("label", std::string());
    for (const auto& c : j.at("coefficients")) {
      const auto a = index_of(parse_activity(c.at("activity")));
      const auto f = index_of(parse_feature(c.at("feature")));
      ols.coef[a][f] = c.at("estimate").get<double>();
      ols.se[a][f] = c.at("se").get<double>();
      ols.margin[a][f] = c.at("margin").get<double>();
    }
    for (const auto& [name, v] : j.at("r_squared").items()) {
      ols.r_squared[index_of(parse_activity(json(name)))] = v.get<double>();
    }
    ols.n_obs = j.at("n_obs").get<std::size_t>();
    if (j.contains("excluded_features")) ols.active = mask_from_json(j.at("excluded_features"));
    return ols;
  });
}

std::string coefficients_csv(const FitResult& fit) {
  std::ostringstream out;
  csv::write_row(out, {"activity", "feature", "estimate", "se", "ci_low", "ci_high", "active"});
  for (const auto& c : fit.coefficients()) {
    csv::write_row(out, {std::string(activity_name(c.activity)), std::string(feature_name(c.feature)),
                         csv::format_double(c.estimate), csv::format_double(c.se), csv::format_double(c.ci_low),
                         csv::format_double(c.ci_high), c.active ? "1" : "0"});
  }
  return out.str();
}

std::string coefficients_csv(const OlsResult& ols) {
  std::ostringstream out;
  csv::write_row(out, {"activity", "feature", "estimate", "se", "margin"});
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      csv::write_row(out, {std::string(activity_name(kActivities[j])),
                           std::string(feature_name(static_cast<Feature>(f))), csv::format_double(ols.coef[j][f]),
                           csv::format_double(ols.se[j][f]), csv::format_double(ols.margin[j][f])});
    }
  }
  return out.str();
}

}  // namespace choicealign::estimator

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/parallel.hpp"
#include "choicealign/shifts.hpp"

namespace choicealign::shifts {
namespace {

std::vector<double> fit_flat(EstimatorKind kind, const Records& records, const estimator::FitOptions& opt) {
  const auto obs = estimator::observations(records);
  if (kind == EstimatorKind::kStructural) {
    const auto fit = estimator::fit_structural(std::span<const estimator::Observation>(obs), opt);
    if (!fit.converged) {
      throw Error(ErrorKind::kConvergence, fmt::format("structural fit did not converge after {} iterations",
                                                       fit.iterations));
    }
    const auto flat = fit.theta_hat.flat();
    return {flat.begin(), flat.end()};
  }
  return estimator::fit_ols(obs, opt.active).flat();
}

}  // namespace

std::string_view estimator_kind_name(EstimatorKind k) {
  return k == EstimatorKind::kStructural ? "structural" : "ols";
}

DriftReport drift_metrics(std::span<const double> theta0, std::span<const double> theta1) {
  if (theta0.size() != theta1.size()) {
    throw_data(fmt::format("drift: vectors differ in length ({} vs {})", theta0.size(), theta1.size()));
  }
  if (theta0.empty()) throw_data("drift: empty coefficient vectors");
  double abs_sum = 0.0, diff_sq = 0.0, n0 = 0.0, n1 = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < theta0.size(); ++k) {
    const double d = theta1[k] - theta0[k];
    abs_sum += std::abs(d);
    diff_sq += d * d;
    n0 += theta0[k] * theta0[k];
    n1 += theta1[k] * theta1[k];
    dot += theta0[k] * theta1[k];
  }
  if (n0 == 0.0) throw_data("drift: baseline coefficients are all zero");
  DriftReport r;
  r.mad = abs_sum / static_cast<double>(theta0.size());
  r.rel_l2 = std::sqrt(diff_sq) / std::sqrt(n0);
  if (diff_sq == 0.0) {
    r.one_minus_cos = 0.0;
  } else if (n1 == 0.0) {
    r.one_minus_cos = 1.0;  // no direction after the shift; treat as orthogonal
  } else {
    r.one_minus_cos = std::clamp(1.0 - dot / (std::sqrt(n0) * std::sqrt(n1)), 0.0, 2.0);
  }
  return r;
}

InvarianceResult run_invariance(const Records& records, std::span<const ShiftSpec> shifts,
                                const InvarianceOptions& options) {
  if (options.estimators.empty()) throw_usage("invariance: no estimators selected");
  const auto baseline = options.baseline ? *options.baseline : ingest::fit_standardization(records);
  Records base = ingest::apply_standardization(records, baseline);
  // keyed regeneration gives untouched records the same outcome before and after a shift
  if (options.regenerate_outcomes) base = options.regenerate_outcomes(std::move(base));

  InvarianceResult result;
  std::map<EstimatorKind, std::vector<double>> theta0;
  for (auto kind : options.estimators) {
    try {
      theta0[kind] = fit_flat(kind, base, options.fit);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("baseline {} fit: {}", estimator_kind_name(kind), e.what()));
    }
  }
  if (theta0.count(EstimatorKind::kStructural)) result.structural_baseline = theta0[EstimatorKind::kStructural];
  if (theta0.count(EstimatorKind::kOls)) result.ols_baseline = theta0[EstimatorKind::kOls];

  const std::size_t n_est = options.estimators.size();
  result.shifted.resize(shifts.size());
  result.reports.resize(shifts.size() * n_est);
  for (std::size_t s = 0; s < shifts.size(); ++s) {
    const auto& spec = shifts[s];
    auto outcome = apply_shift(records, spec);
    const auto params = options.refit_standardization ? ingest::fit_standardization(outcome.records) : baseline;
    outcome.records = ingest::apply_standardization(std::move(outcome.records), params);
    if (options.regenerate_outcomes) outcome.records = options.regenerate_outcomes(std::move(outcome.records));
    outcome.provenance["outcomes"] = options.regenerate_outcomes ? "regenerated" : "observed";
    outcome.provenance["standardization"] = params.to_json();
    outcome.provenance["standardization_source"] = options.refit_standardization ? "refit" : "baseline";
    result.shifted[s] = std::move(outcome);
  }

  // every (shift, estimator) cell is independent
  parallel_for(shifts.size() * n_est, [&](std::size_t cell) {
    const std::size_t s = cell / n_est;
    const auto kind = options.estimators[cell % n_est];
    const auto name = shift_kind_name(shifts[s].kind);
    estimator::FitOptions opt = options.fit;
    opt.max_threads = 1;
    std::vector<double> theta1;
    try {
      theta1 = fit_flat(kind, result.shifted[s].records, opt);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("shift {} ({} fit): {}", name, estimator_kind_name(kind), e.what()));
    }
    auto report = drift_metrics(theta0.at(kind), theta1);
    report.estimator = std::string(estimator_kind_name(kind));
    report.shift = std::string(name);
    result.reports[cell] = report;
  });
  return result;
}

std::string drift_csv(const std::vector<DriftReport>& reports) {
  std::ostringstream out;
  csv::write_row(out, {"estimator", "shift", "mad", "rel_l2", "one_minus_cos"});
  for (const auto& r : reports) {
    csv::write_row(out, {r.estimator, r.shift, csv::format_double(r.mad), csv::format_double(r.rel_l2),
                         csv::format_double(r.one_minus_cos)});
  }
  return out.str();
}

std::vector<DriftReport> drift_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  const auto table = csv::read(in);
  const auto ce = table.require_column("estimator");
  const auto cs = table.require_column("shift");
  const auto cm = table.require_column("mad");
  const auto cr = table.require_column("rel_l2");
  const auto cc = table.require_column("one_minus_cos");
  std::vector<DriftReport> out;
  for (const auto& row : table.rows()) {
    out.push_back({row[ce], row[cs], csv::parse_double(row[cm], "mad"), csv::parse_double(row[cr], "rel_l2"),
                   csv::parse_double(row[cc], "one_minus_cos")});
  }
  return out;
}

std::string drift_table_csv(const std::vector<DriftReport>& reports) {
  std::vector<std::string> shift_order, est_order;
  for (const auto& r : reports) {
    if (std::find(shift_order.begin(), shift_order.end(), r.shift) == shift_order.end()) shift_order.push_back(r.shift);
    if (std::find(est_order.begin(), est_order.end(), r.estimator) == est_order.end()) est_order.push_back(r.estimator);
  }
  std::ostringstream out;
  csv::Row header = {"shift"};
  for (const auto& e : est_order) {
    for (const char* m : {"mad", "rel_l2", "one_minus_cos"}) header.push_back(fmt::format("{}_{}", e, m));
  }
  csv::write_row(out, header);
  for (const auto& s : shift_order) {
    csv::Row row = {s};
    for (const auto& e : est_order) {
      const auto it = std::find_if(reports.begin(), reports.end(),
                                   [&](const DriftReport& r) { return r.shift == s && r.estimator == e; });
      if (it == reports.end()) {
        row.insert(row.end(), 3, std::string());
      } else {
        row.push_back(csv::format_double(it->mad));
        row.push_back(csv::format_double(it->rel_l2));
        row.push_back(csv::format_double(it->one_minus_cos));
      }
    }
    csv::write_row(out, row);
  }
  return out.str();
}

}  // namespace choicealign::shifts

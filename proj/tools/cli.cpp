#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "choicealign/agents.hpp"
#include "choicealign/alignment.hpp"
#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"
#include "choicealign/ingest.hpp"
#include "choicealign/io.hpp"
#include "choicealign/rag.hpp"
#include "choicealign/random.hpp"
#include "choicealign/shifts.hpp"
#include "choicealign/synth.hpp"

namespace choicealign::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json(const fs::path& path) {
  const auto j = json::parse(io::read_text(path), nullptr, false);
  if (j.is_discarded()) throw_data(fmt::format("{}: invalid JSON", path.string()));
  return j;
}

/// Accepts synth metadata (theta_star), a structural fit, or a bare theta object.
ThetaMatrix load_theta(const fs::path& path) {
  const auto j = read_json(path);
  try {
    if (j.contains("theta_star")) return synth::theta_from_json(j["theta_star"]);
    if (j.value("estimator", "") == "structural") return estimator::fit_result_from_json(j).theta_hat;
    return synth::theta_from_json(j);
  } catch (const Error& e) {
    throw_data(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const json::exception& e) {
    throw_data(fmt::format("{}: {}", path.string(), e.what()));
  }
}

ThetaMatrix random_theta(std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::array<double, kNumCoefficients> flat{};
  for (double& v : flat) v = scale * rng.normal();
  return ThetaMatrix::from_flat(flat);
}

double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

std::string safe_name(std::string_view key) {
  std::string out;
  for (const char c : key) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string records_text(const Records& r) { return records_to_csv(r); }

// Agents ---------------------------------------------------------------------

struct AgentFlags {
  std::string kind = "mock";
  std::string config_file;
  std::string model;
  std::string mock_theta;
  std::string mock_augmented_theta;
  double mock_kappa = 0.0;
  std::uint64_t mock_seed = 0;
  std::string cache_dir;
  std::size_t concurrency = 4;
  double rps = 0.0;
  CLI::Option* concurrency_opt = nullptr;
  CLI::Option* rps_opt = nullptr;
};

void add_agent_flags(CLI::App* app, AgentFlags& f) {
  app->add_option("--agent", f.kind, "mock or http")->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
  app->add_option("--agent-config", f.config_file, "HTTP agent settings (JSON)");
  app->add_option("--model", f.model, "model identifier for the HTTP agent");
  app->add_option("--mock-theta", f.mock_theta, "hidden parameters of the mock agent");
  app->add_option("--mock-augmented-theta", f.mock_augmented_theta,
                  "mock parameters used when the prompt carries retrieved findings");
  app->add_option("--mock-kappa", f.mock_kappa, "Dirichlet concentration of mock answers (0 = noiseless)")
      ->capture_default_str();
  app->add_option("--mock-seed", f.mock_seed, "seed of the mock noise")->capture_default_str();
  app->add_option("--cache", f.cache_dir, "response cache directory (default <out>/cache)");
  f.concurrency_opt = app->add_option("--concurrency", f.concurrency, "parallel requests");
  f.rps_opt = app->add_option("--rps", f.rps, "requests per second (0 = unlimited)");
}

std::unique_ptr<agents::Agent> make_agent(const AgentFlags& f, json& resolved, agents::BatchOptions& batch) {
  batch.concurrency = f.concurrency;
  batch.requests_per_second = f.rps;
  if (f.kind == "http") {
    agents::AgentConfig cfg = f.config_file.empty() ? agents::AgentConfig{} : [&] {
      return agents::AgentConfig::from_json(read_json(f.config_file));
    }();
    if (!f.model.empty()) cfg.model = f.model;
    cfg.validate();
    if (!f.concurrency_opt->count()) batch.concurrency = cfg.concurrency;
    if (!f.rps_opt->count()) batch.requests_per_second = cfg.requests_per_second;
    resolved["agent"] = {{"kind", "http"}, {"config", cfg.to_json()}};
    return std::make_unique<agents::HttpChatAgent>(cfg);
  }
  if (f.mock_theta.empty()) throw_usage("--mock-theta is required for the mock agent");
  agents::MockAgentConfig cfg;
  cfg.hidden_theta = load_theta(f.mock_theta);
  if (!f.mock_augmented_theta.empty()) cfg.augmented_theta = load_theta(f.mock_augmented_theta);
  if (f.mock_kappa > 0.0) cfg.noise = {synth::NoiseKind::kDirichlet, f.mock_kappa};
  cfg.seed = f.mock_seed;
  auto agent = std::make_unique<agents::MockAgent>(cfg);
  resolved["agent"] = {{"kind", "mock"},
                       {"model_id", agent->model_id()},
                       {"hidden_theta", synth::theta_to_json(cfg.hidden_theta)},
                       {"augmented_theta", cfg.augmented_theta ? synth::theta_to_json(*cfg.augmented_theta) : json()},
                       {"noise", cfg.noise.to_json()},
                       {"seed", cfg.seed}};
  return agent;
}

void write_batch(OutputDir& out, const agents::BatchResult& batch, const agents::ResponseCache& cache) {
  out.write("decisions.csv", records_text(batch.decisions));
  out.write("index.csv", agents::index_csv(batch.index));
  out.write("attrition.csv", agents::attrition_csv(batch.dropped));
  agents::update_cache_index(cache.dir(), batch.index);
  fmt::print("decisions={} dropped={} cache_hits={} agent_calls={}\n", batch.decisions.size(), batch.dropped.size(),
             batch.cache_hits, batch.agent_calls);
  if (batch.decisions.empty() && !batch.index.empty()) {
    const bool transport = std::any_of(batch.index.begin(), batch.index.end(),
                                       [](const agents::IndexRow& r) { return r.status != "parse-failure"; });
    out.finish();
    if (transport) throw Error(ErrorKind::kTransport, "every request failed; see attrition.csv");
    throw_data("no response could be parsed; see attrition.csv");
  }
}

// Commands -------------------------------------------------------------------

struct IngestArgs {
  std::string input, out, headers, standardization;
};

void cmd_ingest(const IngestArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "ingest", argv);
  const auto table = csv::read_file(a.input);
  const auto headers = a.headers.empty() ? ingest::HeaderMap{} : ingest::HeaderMap::from_json(read_json(a.headers));
  auto result = ingest::clean_table(table, headers);
  if (result.accepted.empty()) throw_data(fmt::format("{}: no record survived cleaning", a.input));
  const auto params = a.standardization.empty()
                          ? ingest::fit_standardization(result.accepted)
                          : ingest::StandardizationParams::from_json(read_json(a.standardization));
  const auto clean = ingest::apply_standardization(std::move(result.accepted), params);

  std::ostringstream rej;
  csv::write_row(rej, {"record_id", "reason", "detail"});
  for (const auto& r : result.rejected) {
    csv::write_row(rej, {r.record_id, std::string(ingest::reject_reason_name(r.reason)), r.detail});
  }
  out.resolved() = {{"input", a.input},
                    {"headers", a.headers},
                    {"standardization_source", a.standardization.empty() ? "fitted" : a.standardization},
                    {"standardization", params.to_json()}};
  out.write("clean.csv", records_text(clean));
  out.write("rejections.csv", rej.str());
  out.write_json("standardization.json", params.to_json());
  out.write("summary.csv", ingest::summary_to_csv(ingest::summarize(clean)));
  out.finish();

  fmt::print("raw={} accepted={} rejected={}\n", result.raw_rows, clean.size(), result.rejected.size());
  const auto counts = result.counts_by_reason();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i]) fmt::print("  {}: {}\n", ingest::reject_reason_name(static_cast<ingest::RejectReason>(i)), counts[i]);
  }
}

struct SynthArgs {
  std::string out, population, theta;
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  std::uint64_t noise_seed = 0;
  std::uint64_t theta_seed = 0;
  double theta_scale = 0.3;
  double kappa = 0.0;
  bool correlated = false;
  CLI::Option* n_opt = nullptr;
  CLI::Option* noise_seed_opt = nullptr;
  CLI::Option* theta_seed_opt = nullptr;
};

void cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "synth", argv);
  auto pop = a.population.empty() ? synth::PopulationConfig{} : synth::PopulationConfig::from_json(read_json(a.population));
  if (a.n_opt->count() || a.population.empty()) pop.n = a.n;
  pop.seed = a.seed;
  if (a.correlated) {
    pop.earn_edu_slope = 0.25;
    pop.earn_age_slope = 0.15;
    pop.earn_male_shift = 0.2;
    pop.spouse_age_slope = 0.6;
  }
  pop.validate();
  const std::uint64_t noise_seed = a.noise_seed_opt->count() ? a.noise_seed : derive_seed(a.seed, 1);
  const std::uint64_t theta_seed = a.theta_seed_opt->count() ? a.theta_seed : derive_seed(a.seed, 2);
  const auto theta = a.theta.empty() ? random_theta(theta_seed, a.theta_scale) : load_theta(a.theta);
  synth::NoiseConfig noise;
  if (a.kappa > 0.0) noise = {synth::NoiseKind::kDirichlet, a.kappa};
  noise.validate();

  auto population = synth::generate_population(pop);
  const auto records = synth::simulate_allocations(theta, std::move(population.records), noise, noise_seed);
  const auto meta = synth::dataset_metadata(pop, theta, noise, noise_seed, population.standardization);
  out.resolved() = {{"population", pop.to_json()},
                    {"theta_source", a.theta.empty() ? json{{"seed", theta_seed}, {"scale", a.theta_scale}}
                                                     : json(a.theta)},
                    {"noise", noise.to_json()},
                    {"noise_seed", noise_seed}};
  out.write("data.csv", records_text(records));
  out.write_json("truth.json", meta);
  out.finish();
  fmt::print("records={} noise={}\n", records.size(), noise.kind == synth::NoiseKind::kNone ? "none" : "dirichlet");
}

struct AgentsRunArgs {
  std::string input, out;
  std::size_t limit = 0;
  AgentFlags agent;
};

void cmd_agents_run(const AgentsRunArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "agents run", argv);
  auto personas = load_records_csv(a.input);
  if (a.limit && personas.size() > a.limit) personas.resize(a.limit);
  agents::BatchOptions opts;
  auto agent = make_agent(a.agent, out.resolved(), opts);
  const agents::ResponseCache cache(a.agent.cache_dir.empty() ? fs::path(a.out) / "cache" : fs::path(a.agent.cache_dir));
  out.resolved()["input"] = a.input;
  out.resolved()["limit"] = a.limit;
  out.resolved()["cache"] = cache.dir().string();
  out.resolved()["batch"] = {{"concurrency", opts.concurrency}, {"requests_per_second", opts.requests_per_second}};
  const auto batch = agents::run_batch(personas, *agent, &cache, opts);
  write_batch(out, batch, cache);
  out.finish();
}

struct FitArgs {
  std::string input, out, label, truth;
  bool ols = false;
  int bootstrap = 0;
  std::uint64_t seed = 0;
  int starts = 0;
  int max_iterations = 500;
  std::vector<std::string> exclude;
  std::vector<std::string> group_by;
};

void cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "fit", argv);
  const auto records = load_records_csv(a.input);
  estimator::FitOptions fo;
  fo.extra_starts = a.starts;
  fo.seed = a.seed;
  fo.max_iterations = a.max_iterations;
  fo.active = estimator::feature_mask_from_names(a.exclude);
  const auto obs = estimator::observations(records);
  const std::string label = a.label.empty() ? fs::path(a.input).stem().string() : a.label;

  out.resolved() = {{"input", a.input},    {"label", a.label.empty() ? label : a.label},
                    {"exclude", a.exclude}, {"extra_starts", a.starts},
                    {"seed", a.seed},       {"max_iterations", a.max_iterations},
                    {"bootstrap", a.bootstrap}, {"ols", a.ols},
                    {"group_by", a.group_by}};

  auto fit = estimator::fit_structural(obs, fo);
  fit.label = label;
  if (a.bootstrap > 0) {
    estimator::attach_bootstrap(fit, estimator::bootstrap_ci(obs, fo, a.bootstrap, derive_seed(a.seed, 0xb0075)));
  }
  out.write_json("fit.json", estimator::to_json(fit));
  out.write("coefficients.csv", estimator::coefficients_csv(fit));
  fmt::print("structural: n={} sse={} iterations={} converged={} gradient={:.3g}\n", fit.n_obs,
             csv::format_double(fit.sse), fit.iterations, fit.converged, fit.gradient_norm);

  if (a.ols) {
    auto ols = estimator::fit_ols(obs, fo.active);
    ols.label = label;
    out.write_json("ols.json", estimator::to_json(ols));
    out.write("ols_coefficients.csv", estimator::coefficients_csv(ols));
    fmt::print("ols: r2 leisure={:.4f} work={:.4f} sleep_personal={:.4f} other={:.4f}\n", ols.r_squared[0],
               ols.r_squared[1], ols.r_squared[2], ols.r_squared[3]);
  }

  if (!a.truth.empty()) {
    const auto truth = load_theta(a.truth).flat();
    const auto hat = fit.theta_hat.flat();
    const double mad = mean_abs_diff(hat, truth);
    out.write_json("recovery.json", {{"truth", a.truth}, {"mad", mad}});
    fmt::print("mad_vs_truth={}\n", csv::format_double(mad));
  }

  if (!a.group_by.empty()) {
    std::ostringstream groups;
    csv::write_row(groups, {"group", "n", "unstable", "converged", "sse", "excluded_features", "directory"});
    for (const auto& g : alignment::subgroup_aggregate(records, a.group_by)) {
      const std::string dir = "groups/" + safe_name(g.key);
      auto gopts = fo;
      const auto vary = alignment::varying_features(g.records);
      std::string excluded;
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        gopts.active[f] = fo.active[f] && vary[f];
        if (!gopts.active[f]) excluded += (excluded.empty() ? "" : ";") + std::string(feature_name(Feature(f)));
      }
      std::string converged = "0", sse_text;
      try {
        auto gfit = estimator::fit_structural(estimator::observations(g.records), gopts);
        gfit.label = fmt::format("{}[{}]", label, g.key);
        converged = gfit.converged ? "1" : "0";
        sse_text = csv::format_double(gfit.sse);
        out.write_json(dir + "/fit.json", estimator::to_json(gfit));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kData && e.kind() != ErrorKind::kConvergence) throw;
        sse_text = "";
        fmt::print(stderr, "group {}: {}\n", g.key, e.what());
      }
      const auto shares = alignment::mean_shares(g.records);
      std::ostringstream ms;
      csv::write_row(ms, {"activity", "mean_share"});
      for (auto act : kActivities) csv::write_row(ms, {std::string(activity_name(act)), csv::format_double(shares[index_of(act)])});
      out.write(dir + "/mean_shares.csv", ms.str());
      csv::write_row(groups, {g.key, std::to_string(g.records.size()), g.unstable ? "1" : "0", converged, sse_text,
                              excluded, dir});
    }
    out.write("groups.csv", groups.str());
  }
  out.finish();
  if (!fit.converged) {
    throw Error(ErrorKind::kConvergence,
                fmt::format("structural fit did not converge after {} iterations (gradient {:.3g}); fit.json written",
                            fit.iterations, fit.gradient_norm));
  }
}

struct CompareArgs {
  std::string human, out;
  std::vector<std::string> models;
};

void cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "compare", argv);
  auto load_fit = [](const std::string& path) {
    try {
      return estimator::fit_result_from_json(read_json(path));
    } catch (const Error& e) {
      throw_data(fmt::format("{}: {}", path, e.what()));
    }
  };
  const auto human = load_fit(a.human);
  std::vector<estimator::FitResult> models;
  json sources = json::array();
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    auto fit = load_fit(path);
    if (eq != std::string::npos) fit.label = spec.substr(0, eq);
    if (fit.label.empty()) fit.label = fs::path(path).parent_path().filename().string();
    sources.push_back({{"label", fit.label}, {"path", path}});
    models.push_back(std::move(fit));
  }
  const auto report = alignment::compare(human, models);
  out.resolved() = {{"human", a.human}, {"models", sources}};
  out.write_json("report.json", alignment::to_json(report));
  out.write("cosine.csv", alignment::cosine_csv(report));
  out.write("deviations.csv", alignment::deviations_csv(report));
  out.write("divergence.csv", alignment::divergence_csv(report));
  out.write("attribute_divergence.csv", alignment::attribute_divergence_csv(report));
  out.write("attribute_cosine.csv", alignment::attribute_cosine_csv(report));
  out.write("worst_alignment.csv", alignment::worst_alignment_csv(report));
  out.finish();
  for (const auto& m : report.models) {
    fmt::print("{}: M={:.6g} M(no intercept)={:.6g} cos(leisure,work,sleep_personal)=({:.4f}, {:.4f}, {:.4f})\n",
               m.model, m.m_all_cells, m.m_no_intercept, m.activity_cosine[0], m.activity_cosine[1],
               m.activity_cosine[2]);
  }
}

struct ShiftArgs {
  std::string input, out, truth, shifts_file, standardization;
  std::vector<std::string> shifts;
  std::vector<std::string> estimators = {"structural", "ols"};
  std::uint64_t seed = 0;
  bool zero = false;
  bool refit = false;
  int starts = 0;
};

void cmd_shift_test(const ShiftArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "shift-test", argv);
  const auto records = load_records_csv(a.input);
  std::vector<shifts::ShiftSpec> specs;
  if (!a.shifts_file.empty()) {
    const auto j = read_json(a.shifts_file);
    if (!j.is_array()) throw_usage(fmt::format("{}: expected an array of shift specs", a.shifts_file));
    for (const auto& s : j) specs.push_back(shifts::ShiftSpec::from_json(s));
  }
  for (const auto& name : a.shifts) {
    const auto kind = shifts::shift_kind_from_name(name);
    if (!kind) throw_usage(fmt::format("unknown shift '{}'", name));
    specs.push_back(shifts::default_spec(*kind, a.seed));
  }
  if (specs.empty()) {
    for (auto k : shifts::kAllShifts) specs.push_back(shifts::default_spec(k, a.seed));
  }
  if (a.zero) {
    for (auto& s : specs) s = s.zero_magnitude();
  }

  shifts::InvarianceOptions opts;
  opts.estimators.clear();
  for (const auto& e : a.estimators) {
    if (e == "structural") {
      opts.estimators.push_back(shifts::EstimatorKind::kStructural);
    } else if (e == "ols") {
      opts.estimators.push_back(shifts::EstimatorKind::kOls);
    } else {
      throw_usage(fmt::format("unknown estimator '{}'", e));
    }
  }
  if (!a.standardization.empty()) {
    opts.baseline = ingest::StandardizationParams::from_json(read_json(a.standardization));
  }
  opts.refit_standardization = a.refit;
  opts.fit.extra_starts = a.starts;
  opts.fit.seed = a.seed;
  json truth_info;
  if (!a.truth.empty()) {
    const auto meta = read_json(a.truth);
    if (!meta.contains("theta_star") || !meta.contains("noise") || !meta.contains("noise_seed")) {
      throw_data(fmt::format("{}: truth metadata needs theta_star, noise and noise_seed", a.truth));
    }
    const auto theta = synth::theta_from_json(meta["theta_star"]);
    const auto noise = synth::NoiseConfig::from_json(meta["noise"]);
    const auto seed = meta["noise_seed"].get<std::uint64_t>();
    opts.regenerate_outcomes = [theta, noise, seed](Records r) {
      return synth::simulate_allocations_keyed(theta, std::move(r), noise, seed);
    };
    truth_info = {{"path", a.truth}, {"noise", noise.to_json()}, {"noise_seed", seed}};
  }

  json spec_json = json::array();
  for (const auto& s : specs) spec_json.push_back(s.to_json());
  out.resolved() = {{"input", a.input},
                    {"shifts", spec_json},
                    {"estimators", a.estimators},
                    {"seed", a.seed},
                    {"refit_standardization", a.refit},
                    {"standardization", a.standardization},
                    {"extra_starts", a.starts},
                    {"outcomes", a.truth.empty() ? json("observed") : json{{"regenerated_from", truth_info}}}};

  const auto result = shifts::run_invariance(records, specs, opts);
  json provenance = json::array();
  for (const auto& s : result.shifted) provenance.push_back(s.provenance);
  out.write("drift.csv", shifts::drift_csv(result.reports));
  out.write("drift_table.csv", shifts::drift_table_csv(result.reports));
  out.write_json("provenance.json", provenance);
  out.write_json("baseline.json", {{"structural", result.structural_baseline}, {"ols", result.ols_baseline}});
  out.finish();
  for (const auto& r : result.reports) {
    fmt::print("{:<24} {:<10} mad={:.6g} rel_l2={:.6g} one_minus_cos={:.6g}\n", r.shift, r.estimator, r.mad,
               r.rel_l2, r.one_minus_cos);
  }
}

struct RagRunArgs {
  std::string input, out, embedder = "hashing", embedder_config, embed_cache;
  std::vector<std::string> kbs;
  std::size_t k = rag::kDefaultTopK;
  std::size_t limit = 0;
  AgentFlags agent;
};

void cmd_rag_run(const RagRunArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "rag run", argv);
  auto personas = load_records_csv(a.input);
  if (a.limit && personas.size() > a.limit) personas.resize(a.limit);
  std::vector<fs::path> kb_paths(a.kbs.begin(), a.kbs.end());
  const auto kb = rag::load_kbs(kb_paths);
  if (kb.empty()) throw_data("knowledge base is empty");

  agents::BatchOptions opts;
  auto agent = make_agent(a.agent, out.resolved(), opts);
  agents::TokenBucket limiter(opts.requests_per_second);
  std::unique_ptr<rag::Embedder> base;
  if (a.embedder == "http") {
    const auto cfg = a.embedder_config.empty() ? rag::EmbedderConfig{}
                                               : rag::EmbedderConfig::from_json(read_json(a.embedder_config));
    out.resolved()["embedder"] = {{"kind", "http"}, {"config", cfg.to_json()}};
    base = std::make_unique<rag::HttpEmbedder>(cfg, &limiter);
  } else {
    base = std::make_unique<rag::HashingEmbedder>();
    out.resolved()["embedder"] = {{"kind", "hashing"}, {"model_id", base->model_id()}};
  }
  const fs::path embed_dir = a.embed_cache.empty() ? fs::path(a.out) / "embeddings" : fs::path(a.embed_cache);
  rag::CachedEmbedder embedder(*base, embed_dir);

  std::vector<std::string> texts;
  for (const auto& k : kb) texts.push_back(k.text);
  const auto docs = embedder.embed(texts);
  std::vector<PersonaRecord> ps;
  for (const auto& r : personas) ps.push_back(r.persona);
  const auto retrievals = rag::retrieve_for_personas(ps, kb, docs, embedder, a.k);

  std::unordered_map<std::string, std::size_t> by_id;
  std::ostringstream rcsv;
  csv::write_row(rcsv, {"record_id", "persona_sentence", "rank", "instance_id", "similarity", "truncated"});
  for (std::size_t i = 0; i < personas.size(); ++i) {
    if (!by_id.emplace(personas[i].record_id, i).second) {
      throw_data(fmt::format("duplicate record_id '{}'", personas[i].record_id));
    }
    const auto sentence = rag::build_persona_sentence(personas[i].persona);
    for (std::size_t r = 0; r < retrievals[i].hits.size(); ++r) {
      const auto& hit = retrievals[i].hits[r];
      csv::write_row(rcsv, {personas[i].record_id, sentence, std::to_string(r + 1), kb[hit.index].id,
                            csv::format_double(hit.similarity), retrievals[i].truncated ? "1" : "0"});
    }
  }
  const auto build = [&](const CleanRecord& rec) {
    std::vector<const rag::KnowledgeInstance*> hits;
    for (const auto& h : retrievals[by_id.at(rec.record_id)].hits) hits.push_back(&kb[h.index]);
    return rag::augment_prompt(agents::render_prompt(rec.persona), hits);
  };

  const agents::ResponseCache cache(a.agent.cache_dir.empty() ? fs::path(a.out) / "cache" : fs::path(a.agent.cache_dir));
  json kb_json = json::array();
  for (const auto& p : a.kbs) kb_json.push_back({{"path", p}, {"sha256", io::sha256_hex(io::read_text(p))}});
  out.resolved()["input"] = a.input;
  out.resolved()["limit"] = a.limit;
  out.resolved()["knowledge_bases"] = kb_json;
  out.resolved()["k"] = a.k;
  out.resolved()["cache"] = cache.dir().string();
  out.resolved()["embedding_cache"] = embed_dir.string();
  out.resolved()["batch"] = {{"concurrency", opts.concurrency}, {"requests_per_second", opts.requests_per_second}};
  out.write("retrieval.csv", rcsv.str());
  const auto batch = agents::run_batch(personas, *agent, &cache, opts, build);
  write_batch(out, batch, cache);
  out.finish();
}

struct RagCompareArgs {
  std::string human, pre, post, out;
  std::vector<std::string> features;
};

void cmd_rag_compare(const RagCompareArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out, "rag compare", argv);
  const auto human = estimator::fit_result_from_json(read_json(a.human));
  const auto pre = estimator::fit_result_from_json(read_json(a.pre));
  const auto post = estimator::fit_result_from_json(read_json(a.post));
  std::vector<Feature> feats;
  if (a.features.empty()) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) feats.push_back(Feature(f));
  } else {
    for (const auto& name : a.features) {
      const auto f = feature_from_name(name);
      if (!f) throw_usage(fmt::format("unknown feature '{}'", name));
      feats.push_back(*f);
    }
  }
  auto cosine = [&](const estimator::FitResult& model, Feature f) -> std::optional<double> {
    try {
      return alignment::attribute_activity_cosine(human, model, f);
    } catch (const Error&) {
      return std::nullopt;  // zero coefficient vector
    }
  };
  std::ostringstream csvout;
  csv::write_row(csvout, {"feature", "pre_cosine", "post_cosine", "delta"});
  json rows = json::array();
  for (auto f : feats) {
    const auto c0 = cosine(pre, f);
    const auto c1 = cosine(post, f);
    const auto fmtv = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
    std::optional<double> delta;
    if (c0 && c1) delta = *c1 - *c0;
    csv::write_row(csvout, {std::string(feature_name(f)), fmtv(c0), fmtv(c1), fmtv(delta)});
    rows.push_back({{"feature", feature_name(f)},
                    {"pre_cosine", c0 ? json(*c0) : json()},
                    {"post_cosine", c1 ? json(*c1) : json()},
                    {"delta", delta ? json(*delta) : json()}});
    fmt::print("{:<16} pre={} post={} delta={}\n", feature_name(f), fmtv(c0), fmtv(c1), fmtv(delta));
  }
  out.resolved() = {{"human", a.human}, {"pre", a.pre}, {"post", a.post}, {"features", a.features}};
  out.write("rag_compare.csv", csvout.str());
  out.write_json("rag_compare.json", rows);
  out.finish();
}

struct ReportArgs {
  std::string in, out;
};

void cmd_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  OutputDir out(a.out.empty() ? fs::path(a.in) / "report" : fs::path(a.out), "report", argv);
  out.resolved() = {{"input", a.in}};
  const auto files = render_report(a.in, out);
  if (files.empty()) throw_data(fmt::format("{}: no recognised tables to report on", a.in));
  out.finish();
  for (const auto& f : files) fmt::print("{}\n", (out.dir() / f).string());
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 1;
    case ErrorKind::kData:
    case ErrorKind::kParse: return 2;
    case ErrorKind::kConvergence: return 3;
    case ErrorKind::kTransport:
    case ErrorKind::kRateLimit: return 4;
  }
  return 2;
}

void print_error(std::string_view kind, std::string_view message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

OutputDir::OutputDir(fs::path dir, std::string command, std::vector<std::string> args)
    : dir_(std::move(dir)), command_(std::move(command)), args_(std::move(args)) {
  fs::create_directories(dir_);
}

void OutputDir::write(const std::string& name, std::string_view content) {
  io::write_atomic(dir_ / name, content);
  files_.push_back(name);
}

void OutputDir::write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

void OutputDir::finish() {
  const json config = {{"tool", "choicealign"},
                       {"version", io::tool_version()},
                       {"prng", kPrngId},
                       {"command", command_},
                       {"args", args_},
                       {"resolved", resolved_},
                       {"outputs", files_}};
  io::write_atomic(dir_ / "config.json", config.dump(2) + "\n");
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Structural alignment diagnostics for human and language-model time-allocation decisions",
               "choicealign"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io::tool_version()));

  IngestArgs ingest_a;
  auto* ingest_cmd = app.add_subcommand("ingest", "clean a raw survey extract");
  ingest_cmd->add_option("--input", ingest_a.input, "raw CSV")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest_a.out, "output directory")->required();
  ingest_cmd->add_option("--headers", ingest_a.headers, "column-name map (JSON)")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--standardization", ingest_a.standardization, "reuse these moments (JSON)")
      ->check(CLI::ExistingFile);

  SynthArgs synth_a;
  auto* synth_cmd = app.add_subcommand("synth", "simulate decisions from known parameters");
  synth_cmd->add_option("--out", synth_a.out, "output directory")->required();
  synth_a.n_opt = synth_cmd->add_option("--n", synth_a.n, "records")->capture_default_str();
  synth_cmd->add_option("--seed", synth_a.seed, "population seed")->capture_default_str();
  synth_a.noise_seed_opt = synth_cmd->add_option("--noise-seed", synth_a.noise_seed, "noise seed");
  synth_cmd->add_option("--kappa", synth_a.kappa, "Dirichlet concentration (0 = noiseless)")->capture_default_str();
  synth_cmd->add_option("--theta", synth_a.theta, "true parameters (JSON)")->check(CLI::ExistingFile);
  synth_a.theta_seed_opt = synth_cmd->add_option("--theta-seed", synth_a.theta_seed, "seed of random parameters");
  synth_cmd->add_option("--theta-scale", synth_a.theta_scale, "sd of random parameters")->capture_default_str();
  synth_cmd->add_option("--population", synth_a.population, "population settings (JSON)")->check(CLI::ExistingFile);
  synth_cmd->add_flag("--correlated", synth_a.correlated, "correlate earnings and spouse presence with covariates");

  auto* agents_cmd = app.add_subcommand("agents", "query language-model agents");
  agents_cmd->require_subcommand(1);
  AgentsRunArgs agents_a;
  auto* agents_run = agents_cmd->add_subcommand("run", "collect one decision per persona");
  agents_run->add_option("--input", agents_a.input, "cleaned records CSV")->required()->check(CLI::ExistingFile);
  agents_run->add_option("--out", agents_a.out, "output directory")->required();
  agents_run->add_option("--limit", agents_a.limit, "use only the first N records");
  add_agent_flags(agents_run, agents_a.agent);

  FitArgs fit_a;
  auto* fit_cmd = app.add_subcommand("fit", "estimate preference parameters");
  fit_cmd->add_option("--input", fit_a.input, "records CSV with allocations")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_a.out, "output directory")->required();
  fit_cmd->add_option("--label", fit_a.label, "name stored in the fit");
  fit_cmd->add_flag("--ols", fit_a.ols, "also fit the linear share regression");
  fit_cmd->add_option("--bootstrap", fit_a.bootstrap, "bootstrap replicates (>= 100) for percentile intervals");
  fit_cmd->add_option("--seed", fit_a.seed, "seed for multistart and bootstrap")->capture_default_str();
  fit_cmd->add_option("--starts", fit_a.starts, "extra random starts")->capture_default_str();
  fit_cmd->add_option("--max-iterations", fit_a.max_iterations)->capture_default_str();
  fit_cmd->add_option("--exclude", fit_a.exclude, "features to drop")->delimiter(',');
  fit_cmd->add_option("--group-by", fit_a.group_by, "also fit per group of these keys")->delimiter(',');
  fit_cmd->add_option("--truth", fit_a.truth, "report recovery error against these parameters")
      ->check(CLI::ExistingFile);

  CompareArgs compare_a;
  auto* compare_cmd = app.add_subcommand("compare", "alignment diagnostics between fits");
  compare_cmd->add_option("--human", compare_a.human, "human fit.json")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--model", compare_a.models, "[label=]fit.json, repeatable")->required();
  compare_cmd->add_option("--out", compare_a.out, "output directory")->required();

  ShiftArgs shift_a;
  auto* shift_cmd = app.add_subcommand("shift-test", "parameter drift under covariate shifts");
  shift_cmd->add_option("--input", shift_a.input, "records CSV with allocations")->required()->check(CLI::ExistingFile);
  shift_cmd->add_option("--out", shift_a.out, "output directory")->required();
  shift_cmd->add_option("--shift", shift_a.shifts, "shift kind with default magnitudes, repeatable");
  shift_cmd->add_option("--shifts-file", shift_a.shifts_file, "array of shift specs (JSON)")->check(CLI::ExistingFile);
  shift_cmd->add_option("--estimators", shift_a.estimators, "structural,ols")->delimiter(',')->capture_default_str();
  shift_cmd->add_option("--seed", shift_a.seed, "shift seed")->capture_default_str();
  shift_cmd->add_flag("--zero-magnitude", shift_a.zero, "apply every shift with zero magnitude");
  shift_cmd->add_flag("--refit-standardization", shift_a.refit, "re-standardize each shifted sample");
  shift_cmd->add_option("--standardization", shift_a.standardization, "baseline moments (JSON)")
      ->check(CLI::ExistingFile);
  shift_cmd->add_option("--truth", shift_a.truth, "synthetic truth; regenerates outcomes after each shift")
      ->check(CLI::ExistingFile);
  shift_cmd->add_option("--starts", shift_a.starts, "extra random starts per structural fit")->capture_default_str();

  auto* rag_cmd = app.add_subcommand("rag", "retrieval-augmented decisions");
  rag_cmd->require_subcommand(1);
  RagRunArgs rag_a;
  auto* rag_run = rag_cmd->add_subcommand("run", "decisions with retrieved findings in the prompt");
  rag_run->add_option("--input", rag_a.input, "cleaned records CSV")->required()->check(CLI::ExistingFile);
  rag_run->add_option("--kb", rag_a.kbs, "knowledge base JSON, repeatable")->required()->check(CLI::ExistingFile);
  rag_run->add_option("--out", rag_a.out, "output directory")->required();
  rag_run->add_option("--k", rag_a.k, "findings per prompt")->capture_default_str()->check(CLI::PositiveNumber);
  rag_run->add_option("--embedder", rag_a.embedder, "hashing or http")
      ->check(CLI::IsMember({"hashing", "http"}))
      ->capture_default_str();
  rag_run->add_option("--embedder-config", rag_a.embedder_config, "HTTP embedder settings (JSON)")
      ->check(CLI::ExistingFile);
  rag_run->add_option("--embed-cache", rag_a.embed_cache, "embedding cache directory (default <out>/embeddings)");
  rag_run->add_option("--limit", rag_a.limit, "use only the first N records");
  add_agent_flags(rag_run, rag_a.agent);
  RagCompareArgs ragc_a;
  auto* rag_compare = rag_cmd->add_subcommand("compare", "attribute cosines before and after augmentation");
  rag_compare->add_option("--human", ragc_a.human, "human fit.json")->required()->check(CLI::ExistingFile);
  rag_compare->add_option("--pre", ragc_a.pre, "model fit without retrieval")->required()->check(CLI::ExistingFile);
  rag_compare->add_option("--post", ragc_a.post, "model fit with retrieval")->required()->check(CLI::ExistingFile);
  rag_compare->add_option("--features", ragc_a.features, "features to report (default all)")->delimiter(',');
  rag_compare->add_option("--out", ragc_a.out, "output directory")->required();

  ReportArgs report_a;
  auto* report_cmd = app.add_subcommand("report", "summary and SVG charts of an output directory");
  report_cmd->add_option("--in", report_a.in, "directory written by another command")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_a.out, "output directory (default <in>/report)");

  std::string rerun_config, rerun_out;
  auto* rerun_cmd = app.add_subcommand("rerun", "repeat the command recorded in a config.json");
  rerun_cmd->add_option("--config", rerun_config, "config.json of an earlier run")->required()->check(CLI::ExistingFile);
  rerun_cmd->add_option("--out", rerun_out, "new output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest_cmd) cmd_ingest(ingest_a, args);
    if (*synth_cmd) cmd_synth(synth_a, args);
    if (*agents_run) cmd_agents_run(agents_a, args);
    if (*fit_cmd) cmd_fit(fit_a, args);
    if (*compare_cmd) cmd_compare(compare_a, args);
    if (*shift_cmd) cmd_shift_test(shift_a, args);
    if (*rag_run) cmd_rag_run(rag_a, args);
    if (*rag_compare) cmd_rag_compare(ragc_a, args);
    if (*report_cmd) cmd_report(report_a, args);
    if (*rerun_cmd) {
      const auto cfg = read_json(rerun_config);
      if (!cfg.contains("args") || !cfg["args"].is_array()) throw_data("config has no recorded args");
      auto replay = cfg["args"].get<std::vector<std::string>>();
      bool replaced = false;
      for (std::size_t i = 0; i + 1 < replay.size(); ++i) {
        if (replay[i] == "--out") {
          replay[i + 1] = rerun_out;
          replaced = true;
        }
      }
      if (!replaced) {
        replay.push_back("--out");
        replay.push_back(rerun_out);
      }
      if (!replay.empty() && replay[0] == "rerun") throw_usage("config records a rerun; point at the original");
      return run(replay);
    }
  } catch (const Error& e) {
    print_error(error_kind_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    print_error("data", e.what());
    return 2;
  } catch (const json::exception& e) {
    print_error("data", e.what());
    return 2;
  }
  return 0;
}

}  // namespace choicealign::cli

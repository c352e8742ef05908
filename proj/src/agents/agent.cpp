#include <fmt/format.h>

#include "choicealign/agents.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"
#include "choicealign/random.hpp"
#include "../common/http.hpp"

namespace choicealign::agents {
namespace {

using nlohmann::json;

std::string extract_content(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::kTransport, "endpoint returned invalid JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kTransport, "endpoint response has no choices[0].message.content");
  }
}

}  // namespace

void AgentConfig::validate() const {
  if (model.empty()) throw_usage("agent: model identifier is required");
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw_usage(fmt::format("agent: endpoint '{}' must be an http(s) URL", endpoint));
  }
  if (!(temperature >= 0.0)) throw_usage("agent: temperature must be >= 0");
  if (max_tokens < 1) throw_usage("agent: max_tokens must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw_usage("agent: top_p must lie in (0, 1]");
  if (!(timeout_seconds > 0.0)) throw_usage("agent: timeout must be positive");
  if (max_retries < 0) throw_usage("agent: retries must be >= 0");
  if (!(backoff_base_seconds >= 0.0)) throw_usage("agent: backoff base must be >= 0");
  if (concurrency < 1) throw_usage("agent: concurrency must be at least 1");
  if (!(requests_per_second >= 0.0)) throw_usage("agent: requests_per_second must be >= 0");
}

json AgentConfig::to_json() const {
  return json{{"endpoint", endpoint},
              {"model", model},
              {"temperature", temperature},
              {"max_tokens", max_tokens},
              {"top_p", top_p},
              {"timeout_seconds", timeout_seconds},
              {"max_retries", max_retries},
              {"backoff_base_seconds", backoff_base_seconds},
              {"concurrency", concurrency},
              {"requests_per_second", requests_per_second},
              {"api_key_env", api_key_env}};
}

AgentConfig AgentConfig::from_json(const json& j) {
  AgentConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.top_p = j.value("top_p", c.top_p);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base_seconds = j.value("backoff_base_seconds", c.backoff_base_seconds);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
  } catch (const json::exception& e) {
    throw_usage(fmt::format("agent config: {}", e.what()));
  }
  c.validate();
  return c;
}

HttpChatAgent::HttpChatAgent(AgentConfig config) : config_(std::move(config)) { config_.validate(); }

json HttpChatAgent::request_body(const Prompt& prompt) const {
  return json{{"model", config_.model},
              {"messages", json::array({{{"role", "system"}, {"content", prompt.system}},
                                        {{"role", "user"}, {"content", prompt.user()}}})},
              {"temperature", config_.temperature},
              {"max_tokens", config_.max_tokens},
              {"top_p", config_.top_p}};
}

std::string HttpChatAgent::complete(const AgentRequest& request) {
  const http::PostOptions post{config_.timeout_seconds, config_.max_retries, config_.backoff_base_seconds,
                               config_.api_key_env};
  return extract_content(http::post_json(config_.endpoint, request_body(request.prompt).dump(), post, &calls_));
}

MockAgent::MockAgent(MockAgentConfig config) : config_(std::move(config)) {
  config_.noise.validate();
  json fp = {{"hidden", config_.hidden_theta.flat()},
             {"noise", config_.noise.to_json()},
             {"seed", config_.seed}};
  if (config_.augmented_theta) fp["augmented"] = config_.augmented_theta->flat();
  id_ = "mock-" + io::sha256_hex(fp.dump()).substr(0, 12);
}

std::string MockAgent::complete(const AgentRequest& request) {
  ++calls_;
  const std::string user = request.prompt.user();
  const bool augmented = config_.augmented_theta && !request.prompt.findings.empty();
  const auto& theta = augmented ? *config_.augmented_theta : config_.hidden_theta;
  auto shares = predict_shares(theta, request.features).values();
  if (config_.noise.kind == synth::NoiseKind::kDirichlet) {
    Rng rng(derive_seed(config_.seed, fnv1a64(request.prompt.system + "\n\n" + user)));
    shares = synth::dirichlet_shares(rng, shares, config_.noise.concentration);
  }
  return format_answer(largest_remainder(shares, static_cast<long long>(kMinutesPerDay)));
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(const std::string& model_id, const Prompt& prompt) {
  return io::sha256_hex(model_id + "\n" + prompt.system + "\n\n" + prompt.user());
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = dir_ / key.substr(0, 2) / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  const auto j = json::parse(io::read_text(path), nullptr, false);
  if (j.is_discarded() || !j.contains("response") || !j["response"].is_string()) return std::nullopt;
  return j["response"].get<std::string>();
}

void ResponseCache::put(const std::string& key, const std::string& model_id, const Prompt& prompt,
                        const std::string& response) const {
  const json j = {{"model", model_id},
                  {"prompt_hash", prompt_hash(prompt)},
                  {"system", prompt.system},
                  {"user", prompt.user()},
                  {"response", response}};
  io::write_atomic(dir_ / key.substr(0, 2) / (key + ".json"), j.dump(2) + "\n");
}

DecisionResponse query_agent(Agent& agent, const ResponseCache* cache, const AgentRequest& request) {
  DecisionResponse out;
  out.prompt_hash = prompt_hash(request.prompt);
  const auto model = agent.model_id();
  std::string key;
  if (cache) {
    key = ResponseCache::key(model, request.prompt);
    if (auto hit = cache->get(key)) {
      out.raw = std::move(*hit);
      out.from_cache = true;
    }
  }
  if (!out.from_cache) {
    out.raw = agent.complete(request);
    if (cache) cache->put(key, model, request.prompt, out.raw);
  }
  auto parsed = parse_allocation(out.raw);
  out.allocation = parsed.allocation;
  out.flags = parsed.flags;
  out.failure = parsed.failure;
  return out;
}

}  // namespace choicealign::agents

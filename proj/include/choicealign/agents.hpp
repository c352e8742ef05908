#pragma once

// Persona prompts, language-model agents (HTTP or offline mock), response
// caching and allocation parsing.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicealign/records.hpp"
#include "choicealign/synth.hpp"

namespace choicealign::agents {

/// System instruction sent with every decision prompt.
extern const std::string kSystemInstruction;

/// The user message is persona + " " + instruction, or
/// persona + "\n\n" + findings + "\n\n" + instruction when a retrieval block
/// is present.
struct Prompt {
  std::string system;
  std::string persona;
  std::string instruction;
  std::string findings;

  std::string user() const;
  bool operator==(const Prompt&) const = default;
};

/// Throws Error(kData) naming the slot when a field is unusable.
Prompt render_prompt(const PersonaRecord& persona);

/// Appended to the instruction when a response could not be parsed.
extern const std::string kFormatReminder;
Prompt with_format_reminder(Prompt p);

/// Hex sha256 of the system and user messages.
std::string prompt_hash(const Prompt& p);

struct ParsedAllocation {
  std::optional<Allocation> allocation;
  RecordFlags flags;
  std::string failure;  // empty on success
};

/// Reads the first bracketed tuple of four non-negative numbers in the order
/// (Work, Leisure, Sleep and Personal Care, Other) and repairs it into an
/// Allocation over `budget` minutes.
ParsedAllocation parse_allocation(std::string_view text, double budget = kMinutesPerDay);

/// Integer minutes summing exactly to `total` (largest-remainder rounding).
std::array<long long, kNumActivities> largest_remainder(const std::array<double, kNumActivities>& shares,
                                                        long long total);

/// "[W, L, S, O]" for canonical-order minutes.
std::string format_answer(const std::array<long long, kNumActivities>& minutes);

// Agents ---------------------------------------------------------------------

struct AgentRequest {
  std::string record_id;
  Prompt prompt;
  FeatureVector features;  // only the mock looks at these
};

class Agent {
 public:
  virtual ~Agent() = default;
  /// Cache namespace; distinct behaviour must give distinct ids.
  virtual std::string model_id() const = 0;
  /// Raw response text. Throws Error(kTransport) or Error(kRateLimit).
  virtual std::string complete(const AgentRequest& request) = 0;
  /// Number of complete() calls that reached the backend.
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::atomic<std::size_t> calls_{0};
};

struct AgentConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model;
  double temperature = 0.1;
  int max_tokens = 1024;
  double top_p = 1.0;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;  // doubled after every failed attempt
  std::size_t concurrency = 4;
  double requests_per_second = 0.0;  // 0 disables the rate limit
  std::string api_key_env = "CHOICEALIGN_API_KEY";

  void validate() const;
  nlohmann::json to_json() const;
  static AgentConfig from_json(const nlohmann::json& j);
};

/// Chat-completions style endpoint over HTTP(S).
class HttpChatAgent : public Agent {
 public:
  explicit HttpChatAgent(AgentConfig config);
  std::string model_id() const override { return config_.model; }
  std::string complete(const AgentRequest& request) override;

  nlohmann::json request_body(const Prompt& prompt) const;

 private:
  AgentConfig config_;
};

struct MockAgentConfig {
  ThetaMatrix hidden_theta;
  /// Used instead of hidden_theta when the prompt carries a findings block.
  std::optional<ThetaMatrix> augmented_theta;
  synth::NoiseConfig noise;
  std::uint64_t seed = 0;
};

/// Offline stand-in: softmax shares from a hidden theta on the record's
/// features, optional Dirichlet noise keyed by (seed, prompt), integer minutes.
class MockAgent : public Agent {
 public:
  explicit MockAgent(MockAgentConfig config);
  std::string model_id() const override { return id_; }
  std::string complete(const AgentRequest& request) override;

 private:
  MockAgentConfig config_;
  std::string id_;
};

// Cache ----------------------------------------------------------------------

/// One JSON file per response at dir/<k[0:2]>/<k>.json, k = sha256(model, prompt).
/// Writes are atomic, so concurrent writers of one key leave one complete file.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(const std::string& model_id, const Prompt& prompt);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& model_id, const Prompt& prompt,
           const std::string& response) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct DecisionResponse {
  std::string raw;
  std::optional<Allocation> allocation;
  RecordFlags flags;
  std::string failure;  // parse failure reason, empty on success
  int retries = 0;  // parse retries used
  bool from_cache = false;
  std::string prompt_hash;
};

/// Cache lookup, then agent call, then parse.
DecisionResponse query_agent(Agent& agent, const ResponseCache* cache, const AgentRequest& request);

// Batches --------------------------------------------------------------------

/// Blocking token bucket shared by concurrent workers.
class TokenBucket {
 public:
  /// rate <= 0 disables limiting.
  TokenBucket(double rate_per_second, double burst = 1.0);
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

struct BatchOptions {
  std::size_t concurrency = 4;
  double requests_per_second = 0.0;
  bool retry_on_parse_failure = true;
};

struct IndexRow {
  std::string record_id;
  std::string model;
  std::string prompt_hash;
  std::string status;  // "ok", "parse-failure", "transport-error", "rate-limited"
  bool renormalized = false;
  bool floored = false;
};

struct Attrition {
  std::string record_id;
  std::string reason;
  std::string raw;
};

struct BatchResult {
  Records decisions;  // input order, dropped records removed
  std::vector<IndexRow> index;
  std::vector<Attrition> dropped;
  std::size_t cache_hits = 0;
  std::size_t agent_calls = 0;
};

using PromptBuilder = std::function<Prompt(const CleanRecord&)>;

/// Queries the agent for every record. Failed records are dropped and logged.
BatchResult run_batch(const Records& personas, Agent& agent, const ResponseCache* cache,
                      const BatchOptions& options = {}, const PromptBuilder& build = {});

std::string index_csv(const std::vector<IndexRow>& rows);
std::vector<IndexRow> index_from_csv(std::string_view text);
/// Merges rows into dir/index.csv, replacing rows with the same
/// (record_id, model, prompt_hash).
void update_cache_index(const std::filesystem::path& dir, const std::vector<IndexRow>& rows);
std::string attrition_csv(const std::vector<Attrition>& rows);

}  // namespace choicealign::agents

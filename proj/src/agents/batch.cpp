#include <algorithm>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "choicealign/agents.hpp"
#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"
#include "choicealign/parallel.hpp"

namespace choicealign::agents {
namespace {

std::string status_of(ErrorKind kind) {
  return kind == ErrorKind::kRateLimit ? "rate-limited" : "transport-error";
}

struct Slot {
  std::optional<CleanRecord> record;
  IndexRow index;
  std::optional<Attrition> dropped;
  bool cache_hit = false;
};

}  // namespace

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

BatchResult run_batch(const Records& personas, Agent& agent, const ResponseCache* cache, const BatchOptions& options,
                      const PromptBuilder& build) {
  if (options.concurrency < 1) throw_usage("batch: concurrency must be at least 1");
  TokenBucket bucket(options.requests_per_second);
  const std::size_t calls_before = agent.calls();
  std::vector<Slot> slots(personas.size());

  parallel_for(
      personas.size(),
      [&](std::size_t i) {
        const auto& rec = personas[i];
        auto& slot = slots[i];
        AgentRequest req{rec.record_id, build ? build(rec) : render_prompt(rec.persona), rec.features};
        slot.index = {rec.record_id, agent.model_id(), prompt_hash(req.prompt), "ok", false, false};
        auto ask = [&](const AgentRequest& r) -> std::optional<DecisionResponse> {
          try {
            if (!cache || !cache->get(ResponseCache::key(agent.model_id(), r.prompt))) bucket.acquire();
            return query_agent(agent, cache, r);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::kTransport && e.kind() != ErrorKind::kRateLimit) throw;
            slot.index.status = status_of(e.kind());
            slot.dropped = Attrition{rec.record_id, fmt::format("{}: {}", slot.index.status, e.what()), ""};
            return std::nullopt;
          }
        };

        auto resp = ask(req);
        if (!resp) return;
        slot.cache_hit = resp->from_cache;
        if (!resp->allocation && options.retry_on_parse_failure) {
          AgentRequest retry = req;
          retry.prompt = with_format_reminder(req.prompt);
          auto second = ask(retry);
          if (!second) return;
          second->retries = 1;
          slot.index.prompt_hash = second->prompt_hash;
          resp = std::move(second);
        }
        if (!resp->allocation) {
          slot.index.status = "parse-failure";
          slot.dropped = Attrition{rec.record_id, fmt::format("parse-failure: {}", resp->failure), resp->raw};
          return;
        }
        slot.index.renormalized = resp->flags.renormalized;
        slot.index.floored = resp->flags.floored;
        CleanRecord out = rec;
        out.observed = resp->allocation;
        out.flags = resp->flags;
        slot.record = std::move(out);
      },
      options.concurrency);

  BatchResult result;
  for (auto& slot : slots) {
    if (slot.record) result.decisions.push_back(std::move(*slot.record));
    if (slot.dropped) result.dropped.push_back(std::move(*slot.dropped));
    result.cache_hits += slot.cache_hit ? 1 : 0;
    result.index.push_back(std::move(slot.index));
  }
  result.agent_calls = agent.calls() - calls_before;
  return result;
}

std::string index_csv(const std::vector<IndexRow>& rows) {
  std::ostringstream out;
  csv::write_row(out, {"record_id", "model", "prompt_hash", "status", "renormalized", "floored"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.record_id, r.model, r.prompt_hash, r.status, r.renormalized ? "1" : "0",
                         r.floored ? "1" : "0"});
  }
  return out.str();
}

std::vector<IndexRow> index_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  const auto table = csv::read(in);
  const auto ci = table.require_column("record_id");
  const auto cm = table.require_column("model");
  const auto ch = table.require_column("prompt_hash");
  const auto cs = table.require_column("status");
  const auto cr = table.require_column("renormalized");
  const auto cf = table.require_column("floored");
  std::vector<IndexRow> rows;
  for (const auto& row : table.rows()) {
    rows.push_back({row[ci], row[cm], row[ch], row[cs], row[cr] == "1", row[cf] == "1"});
  }
  return rows;
}

void update_cache_index(const std::filesystem::path& dir, const std::vector<IndexRow>& rows) {
  static std::mutex index_mutex;
  std::lock_guard lock(index_mutex);
  const auto path = dir / "index.csv";
  std::vector<IndexRow> merged;
  if (std::filesystem::exists(path)) merged = index_from_csv(io::read_text(path));
  for (const auto& r : rows) {
    const auto it = std::find_if(merged.begin(), merged.end(), [&](const IndexRow& m) {
      return m.record_id == r.record_id && m.model == r.model && m.prompt_hash == r.prompt_hash;
    });
    if (it == merged.end()) {
      merged.push_back(r);
    } else {
      *it = r;
    }
  }
  io::write_atomic(path, index_csv(merged));
}

std::string attrition_csv(const std::vector<Attrition>& rows) {
  std::ostringstream out;
  csv::write_row(out, {"record_id", "reason", "raw_response"});
  for (const auto& r : rows) csv::write_row(out, {r.record_id, r.reason, r.raw});
  return out.str();
}

}  // namespace choicealign::agents

#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "../common/http.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"
#include "choicealign/kernels.hpp"
#include "choicealign/rag.hpp"
#include "choicealign/random.hpp"

namespace choicealign::rag {
namespace {

using nlohmann::json;

void require_text(const std::string& text, std::size_t i) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw_data(fmt::format("embed: text {} is empty", i));
  }
}

}  // namespace

void normalize(std::span<double> v) {
  const double n = std::sqrt(kernels::squared_norm(v));
  if (!(n > 0.0) || !std::isfinite(n)) throw_data("embed: cannot normalize a zero or non-finite vector");
  for (double& x : v) x /= n;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw_usage("hashing embedder: dimension must be positive");
}

std::string HashingEmbedder::model_id() const { return fmt::format("hashing-{}", dim_); }

std::vector<std::string> HashingEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Embeddings HashingEmbedder::embed(const std::vector<std::string>& texts) {
  Embeddings out{dim_, std::vector<double>(texts.size() * dim_, 0.0)};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    require_text(texts[i], i);
    const auto tokens = tokenize(texts[i]);
    if (tokens.empty()) throw_data(fmt::format("embed: text {} has no word tokens", i));
    std::span<double> row{out.data.data() + i * dim_, dim_};
    for (const auto& t : tokens) {
      const std::uint64_t h = fnv1a64(t);
      row[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    // opposite-signed collisions can cancel every bucket
    try {
      normalize(row);
    } catch (const Error&) {
      throw_data(fmt::format("embed: text {} hashes to the zero vector", i));
    }
  }
  return out;
}

void EmbedderConfig::validate() const {
  if (model.empty()) throw_usage("embedder: model identifier is required");
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw_usage(fmt::format("embedder: endpoint '{}' must be an http(s) URL", endpoint));
  }
  if (!(timeout_seconds > 0.0)) throw_usage("embedder: timeout must be positive");
  if (max_retries < 0) throw_usage("embedder: retries must be >= 0");
  if (!(backoff_base_seconds >= 0.0)) throw_usage("embedder: backoff base must be >= 0");
  if (batch_size < 1) throw_usage("embedder: batch size must be at least 1");
}

json EmbedderConfig::to_json() const {
  return json{{"endpoint", endpoint},
              {"model", model},
              {"timeout_seconds", timeout_seconds},
              {"max_retries", max_retries},
              {"backoff_base_seconds", backoff_base_seconds},
              {"batch_size", batch_size},
              {"api_key_env", api_key_env}};
}

EmbedderConfig EmbedderConfig::from_json(const json& j) {
  EmbedderConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base_seconds = j.value("backoff_base_seconds", c.backoff_base_seconds);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
  } catch (const json::exception& e) {
    throw_usage(fmt::format("embedder config: {}", e.what()));
  }
  c.validate();
  return c;
}

HttpEmbedder::HttpEmbedder(EmbedderConfig config, agents::TokenBucket* limiter)
    : config_(std::move(config)), limiter_(limiter) {
  config_.validate();
}

json HttpEmbedder::request_body(const std::vector<std::string>& texts) const {
  return json{{"model", config_.model}, {"input", texts}};
}

Embeddings HttpEmbedder::embed(const std::vector<std::string>& texts) {
  for (std::size_t i = 0; i < texts.size(); ++i) require_text(texts[i], i);
  const http::PostOptions post{config_.timeout_seconds, config_.max_retries, config_.backoff_base_seconds,
                               config_.api_key_env};
  Embeddings out{dim_, {}};
  for (std::size_t start = 0; start < texts.size(); start += config_.batch_size) {
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                         texts.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(texts.size(), start + config_.batch_size)));
    if (limiter_) limiter_->acquire();
    const auto j = json::parse(http::post_json(config_.endpoint, request_body(batch).dump(), post), nullptr, false);
    if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() || j["data"].size() != batch.size()) {
      throw Error(ErrorKind::kTransport, "embeddings endpoint returned an unexpected payload");
    }
    for (const auto& item : j["data"]) {
      std::vector<double> v;
      try {
        v = item.at("embedding").get<std::vector<double>>();
      } catch (const json::exception&) {
        throw Error(ErrorKind::kTransport, "embeddings endpoint returned an entry without a numeric embedding");
      }
      if (v.empty()) throw Error(ErrorKind::kTransport, "embeddings endpoint returned an empty vector");
      if (out.dim == 0) out.dim = v.size();
      if (v.size() != out.dim) {
        throw Error(ErrorKind::kTransport,
                    fmt::format("embeddings endpoint returned dimension {} after {}", v.size(), out.dim));
      }
      normalize(v);
      out.data.insert(out.data.end(), v.begin(), v.end());
    }
  }
  dim_ = out.dim;
  return out;
}

CachedEmbedder::CachedEmbedder(Embedder& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

Embeddings CachedEmbedder::embed(const std::vector<std::string>& texts) {
  const auto model = inner_.model_id();
  std::vector<std::string> keys(texts.size());
  std::vector<std::optional<std::vector<double>>> found(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    require_text(texts[i], i);
    keys[i] = io::sha256_hex(model + "\n" + texts[i]);
    const auto path = dir_ / keys[i].substr(0, 2) / (keys[i] + ".json");
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
      const auto j = json::parse(io::read_text(path), nullptr, false);
      if (!j.is_discarded() && j.contains("embedding") && j["embedding"].is_array()) {
        found[i] = j["embedding"].get<std::vector<double>>();
        ++hits_;
        continue;
      }
    }
    missing.push_back(texts[i]);
    missing_at.push_back(i);
  }
  if (!missing.empty()) {
    const auto fresh = inner_.embed(missing);
    for (std::size_t m = 0; m < missing.size(); ++m) {
      const auto row = fresh.row(m);
      const std::size_t i = missing_at[m];
      found[i] = std::vector<double>(row.begin(), row.end());
      const json j = {{"model", model}, {"text", texts[i]}, {"embedding", *found[i]}};
      io::write_atomic(dir_ / keys[i].substr(0, 2) / (keys[i] + ".json"), j.dump() + "\n");
    }
  }
  Embeddings out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (out.dim == 0) out.dim = found[i]->size();
    if (found[i]->size() != out.dim) throw_data("embedding cache: entries of differing dimension");
    out.data.insert(out.data.end(), found[i]->begin(), found[i]->end());
  }
  return out;
}

}  // namespace choicealign::rag

#pragma once

// Knowledge bases, persona-sentence embeddings, top-k retrieval and prompt
// augmentation.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "choicealign/agents.hpp"
#include "choicealign/persona.hpp"

namespace choicealign::rag {

struct KnowledgeInstance {
  std::string id;
  std::string topic;
  std::string text;

  bool operator==(const KnowledgeInstance&) const = default;
};

using KnowledgeBase = std::vector<KnowledgeInstance>;

/// Array of {id, topic, text}. Throws Error(kData) on empty text, duplicate
/// ids or missing fields.
KnowledgeBase kb_from_json(const nlohmann::json& j);
nlohmann::json kb_to_json(const KnowledgeBase& kb);
KnowledgeBase load_kb(const std::filesystem::path& path);
/// Concatenates several files; ids must stay unique across them.
KnowledgeBase load_kbs(const std::vector<std::filesystem::path>& paths);
void validate_kb(const KnowledgeBase& kb);

/// "A 53-year-old male Black with an advanced degree, a spouse, earning $1173.00 per week."
std::string build_persona_sentence(const PersonaRecord& persona);

// Embeddings -----------------------------------------------------------------

/// Row-major matrix of unit vectors.
struct Embeddings {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Cache namespace.
  virtual std::string model_id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Throws Error(kData) for empty texts, Error(kTransport) for backend failures.
  virtual Embeddings embed(const std::vector<std::string>& texts) = 0;
};

/// Signed feature hashing of lowercased word tokens.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256);
  std::string model_id() const override;
  std::size_t dim() const override { return dim_; }
  Embeddings embed(const std::vector<std::string>& texts) override;

  /// Lowercased runs of ASCII letters and digits.
  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dim_;
};

struct EmbedderConfig {
  std::string endpoint = "https://api.openai.com/v1/embeddings";
  std::string model = "text-embedding-3-large";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  std::size_t batch_size = 64;
  std::string api_key_env = "CHOICEALIGN_API_KEY";

  void validate() const;
  nlohmann::json to_json() const;
  static EmbedderConfig from_json(const nlohmann::json& j);
};

/// POST {model, input: [texts]}; reads data[i].embedding and L2-normalizes.
class HttpEmbedder : public Embedder {
 public:
  /// `limiter` may be shared with an agent batch; nullptr disables limiting.
  HttpEmbedder(EmbedderConfig config, agents::TokenBucket* limiter = nullptr);
  std::string model_id() const override { return config_.model; }
  std::size_t dim() const override { return dim_; }
  Embeddings embed(const std::vector<std::string>& texts) override;

  nlohmann::json request_body(const std::vector<std::string>& texts) const;

 private:
  EmbedderConfig config_;
  agents::TokenBucket* limiter_;
  std::size_t dim_ = 0;
};

/// Content-addressed vectors at dir/<k[0:2]>/<k>.json, k = sha256(model, text).
class CachedEmbedder : public Embedder {
 public:
  CachedEmbedder(Embedder& inner, std::filesystem::path dir);
  std::string model_id() const override { return inner_.model_id(); }
  std::size_t dim() const override { return inner_.dim(); }
  Embeddings embed(const std::vector<std::string>& texts) override;
  std::size_t hits() const { return hits_; }

 private:
  Embedder& inner_;
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
};

/// Scales v to unit length; throws Error(kData) on a zero vector.
void normalize(std::span<double> v);

// Retrieval ------------------------------------------------------------------

struct Retrieved {
  std::size_t index;  // position in the kb
  double similarity;
};

struct Retrieval {
  std::vector<Retrieved> hits;  // descending similarity, ties by ascending id
  bool truncated = false;  // kb held fewer than k instances
};

inline constexpr std::size_t kDefaultTopK = 3;

/// `doc_embeddings` rows align with `kb`. Throws Error(kUsage) if kb is empty,
/// k is 0 or the shapes disagree.
Retrieval retrieve_top_k(std::span<const double> query, const KnowledgeBase& kb, const Embeddings& doc_embeddings,
                         std::size_t k = kDefaultTopK);

/// Marker line that opens the injected block.
extern const std::string kFindingsHeader;

/// Inserts the numbered findings between persona and instruction. No
/// instances leaves the prompt unchanged.
agents::Prompt augment_prompt(const agents::Prompt& base, const std::vector<const KnowledgeInstance*>& instances);

/// Retrieval for a batch of personas: one embedding call for all sentences,
/// then retrieval in parallel. Result i belongs to personas[i].
std::vector<Retrieval> retrieve_for_personas(const std::vector<PersonaRecord>& personas, const KnowledgeBase& kb,
                                             const Embeddings& doc_embeddings, Embedder& embedder,
                                             std::size_t k = kDefaultTopK);

}  // namespace choicealign::rag

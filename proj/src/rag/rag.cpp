#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/io.hpp"
#include "choicealign/kernels.hpp"
#include "choicealign/parallel.hpp"
#include "choicealign/rag.hpp"

namespace choicealign::rag {
namespace {

using nlohmann::json;

std::string_view education_phrase(Education e) {
  switch (e) {
    case Education::kNoCollege: return "no college education";
    case Education::kSomeCollege: return "some college education but no bachelor's degree";
    case Education::kBachelor: return "a bachelor's degree";
    case Education::kAdvanced: return "an advanced degree";
  }
  throw_data(fmt::format("persona sentence: invalid education value {}", static_cast<int>(e)));
}

std::string_view spouse_phrase(SpouseStatus s) {
  switch (s) {
    case SpouseStatus::kSpouse: return "a spouse";
    case SpouseStatus::kPartner: return "an unmarried partner";
    case SpouseStatus::kNone: return "no spouse or unmarried partner";
  }
  throw_data(fmt::format("persona sentence: invalid spouse value {}", static_cast<int>(s)));
}

std::string field(const json& item, const char* name, std::size_t i) {
  if (!item.contains(name) || !item[name].is_string()) {
    throw_data(fmt::format("knowledge base entry {}: missing string field '{}'", i, name));
  }
  return item[name].get<std::string>();
}

}  // namespace

const std::string kFindingsHeader = "Relevant research findings:";

void validate_kb(const KnowledgeBase& kb) {
  std::set<std::string> ids;
  for (const auto& k : kb) {
    if (k.id.empty()) throw_data("knowledge base: empty id");
    if (k.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw_data(fmt::format("knowledge base: instance '{}' has empty text", k.id));
    }
    if (!ids.insert(k.id).second) throw_data(fmt::format("knowledge base: duplicate id '{}'", k.id));
  }
}

KnowledgeBase kb_from_json(const json& j) {
  if (!j.is_array()) throw_data("knowledge base: expected a JSON array");
  KnowledgeBase kb;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_object()) throw_data(fmt::format("knowledge base entry {}: expected an object", i));
    kb.push_back({field(j[i], "id", i), field(j[i], "topic", i), field(j[i], "text", i)});
  }
  validate_kb(kb);
  return kb;
}

json kb_to_json(const KnowledgeBase& kb) {
  json out = json::array();
  for (const auto& k : kb) out.push_back({{"id", k.id}, {"topic", k.topic}, {"text", k.text}});
  return out;
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  const auto j = json::parse(io::read_text(path), nullptr, false);
  if (j.is_discarded()) throw_data(fmt::format("{}: invalid JSON", path.string()));
  try {
    return kb_from_json(j);
  } catch (const Error& e) {
    throw_data(fmt::format("{}: {}", path.string(), e.what()));
  }
}

KnowledgeBase load_kbs(const std::vector<std::filesystem::path>& paths) {
  KnowledgeBase all;
  for (const auto& p : paths) {
    auto kb = load_kb(p);
    all.insert(all.end(), std::make_move_iterator(kb.begin()), std::make_move_iterator(kb.end()));
  }
  validate_kb(all);
  return all;
}

std::string build_persona_sentence(const PersonaRecord& p) {
  if (!std::isfinite(p.age) || p.age <= 0.0) throw_data("persona sentence: age must be a positive number");
  if (!std::isfinite(p.weekly_income) || p.weekly_income < 0.0) {
    throw_data("persona sentence: weekly income must be a non-negative number");
  }
  if (p.gender != Gender::kMale && p.gender != Gender::kFemale) throw_data("persona sentence: invalid gender");
  const std::string age = p.age == std::floor(p.age) ? fmt::format("{:.0f}", p.age) : fmt::format("{}", p.age);
  return fmt::format("A {}-year-old {} {} with {}, {}, earning ${:.2f} per week.", age, gender_label(p.gender),
                     race_label(p.race), education_phrase(p.education), spouse_phrase(p.spouse), p.weekly_income);
}

Retrieval retrieve_top_k(std::span<const double> query, const KnowledgeBase& kb, const Embeddings& docs,
                         std::size_t k) {
  if (kb.empty()) throw_usage("retrieval: knowledge base is empty");
  if (k == 0) throw_usage("retrieval: k must be at least 1");
  if (docs.size() != kb.size() || docs.dim != query.size()) {
    throw_usage(fmt::format("retrieval: {} embeddings of dim {} for {} instances and a query of dim {}", docs.size(),
                            docs.dim, kb.size(), query.size()));
  }
  std::vector<double> sims(kb.size());
  kernels::dot_rows(query, docs.data, sims);
  std::vector<std::size_t> order(kb.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, kb.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return kb[a].id < kb[b].id;
                    });
  Retrieval out;
  out.truncated = kb.size() < k;
  for (std::size_t i = 0; i < take; ++i) out.hits.push_back({order[i], sims[order[i]]});
  return out;
}

agents::Prompt augment_prompt(const agents::Prompt& base, const std::vector<const KnowledgeInstance*>& instances) {
  if (instances.empty()) return base;
  agents::Prompt out = base;
  out.findings = kFindingsHeader;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.findings += fmt::format("\n{}. {}", i + 1, instances[i]->text);
  }
  return out;
}

std::vector<Retrieval> retrieve_for_personas(const std::vector<PersonaRecord>& personas, const KnowledgeBase& kb,
                                             const Embeddings& docs, Embedder& embedder, std::size_t k) {
  std::vector<std::string> sentences;
  sentences.reserve(personas.size());
  for (const auto& p : personas) sentences.push_back(build_persona_sentence(p));
  const auto queries = embedder.embed(sentences);
  std::vector<Retrieval> out(personas.size());
  parallel_for(personas.size(), [&](std::size_t i) { out[i] = retrieve_top_k(queries.row(i), kb, docs, k); });
  return out;
}

}  // namespace choicealign::rag

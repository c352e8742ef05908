#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "choicealign/alignment.hpp"
#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"
#include "choicealign/io.hpp"
#include "choicealign/kernels.hpp"
#include "choicealign/rag.hpp"
#include "choicealign/synth.hpp"
#include "fixtures.hpp"

using namespace choicealign;
using namespace choicealign::rag;

namespace {

namespace fs = std::filesystem;

std::string fmt_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "doc-%04zu", i);
  return buf;
}

KnowledgeBase numbered_kb(std::size_t n) {
  KnowledgeBase kb;
  for (std::size_t i = 0; i < n; ++i) {
    kb.push_back({fmt_id(i), "topic", "finding number " + std::to_string(i)});
  }
  return kb;
}

Embeddings random_unit_rows(Rng& rng, std::size_t rows, std::size_t dim) {
  Embeddings e{dim, std::vector<double>(rows * dim)};
  for (double& v : e.data) v = rng.normal();
  for (std::size_t r = 0; r < rows; ++r) normalize({e.data.data() + r * dim, dim});
  return e;
}

std::vector<std::size_t> brute_force_top_k(std::span<const double> q, const KnowledgeBase& kb, const Embeddings& docs,
                                           std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < kb.size(); ++i) {
    double s = 0;
    for (std::size_t d = 0; d < docs.dim; ++d) s += q[d] * docs.row(i)[d];
    scored.push_back({s, i});
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return kb[a.second].id < kb[b.second].id;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

TEST(PersonaSentence, ReferenceExamples) {
  EXPECT_EQ(build_persona_sentence({53, Gender::kMale, Race::kBlack, Education::kAdvanced, SpouseStatus::kSpouse, 1173}),
            "A 53-year-old male Black with an advanced degree, a spouse, earning $1173.00 per week.");
  EXPECT_EQ(build_persona_sentence({39, Gender::kFemale, Race::kWhite, Education::kSomeCollege, SpouseStatus::kNone, 240}),
            "A 39-year-old female White with some college education but no bachelor's degree, no spouse or "
            "unmarried partner, earning $240.00 per week.");
}

TEST(Hashing, DeterministicUnitVectors) {
  HashingEmbedder e;
  const auto a = e.embed({"Black married man with a graduate degree", "young woman"});
  const auto b = e.embed({"Black married man with a graduate degree", "young woman"});
  EXPECT_EQ(a.data, b.data);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(kernels::squared_norm(a.row(i)), 1.0, 1e-12);
  EXPECT_THROW(e.embed({""}), Error);
  EXPECT_THROW(e.embed({"!!! ???"}), Error);
  EXPECT_EQ(HashingEmbedder::tokenize("Hello, World-42"), (std::vector<std::string>{"hello", "world", "42"}));
}

TEST(Hashing, DisjointBucketsAreOrthogonal) {
  HashingEmbedder e;
  const std::string a = "married partner family", b = "income salary";
  // the fixture's tokens occupy distinct buckets, so the vectors share no support
  std::set<std::uint64_t> buckets;
  for (const auto& t : HashingEmbedder::tokenize(a + " " + b)) buckets.insert(fnv1a64(t) % e.dim());
  ASSERT_EQ(buckets.size(), 5u);
  const auto v = e.embed({a, b});
  EXPECT_EQ(kernels::dot(v.row(0), v.row(1)), 0.0);
  const auto same = e.embed({a, a});
  EXPECT_NEAR(kernels::dot(same.row(0), same.row(1)), 1.0, 1e-12);
}

TEST(Retrieval, MatchesBruteForce) {
  Rng rng(1);
  const auto kb = numbered_kb(60);
  const auto docs = random_unit_rows(rng, kb.size(), 16);
  const auto queries = random_unit_rows(rng, 100, 16);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto r = retrieve_top_k(queries.row(q), kb, docs, 3);
    ASSERT_EQ(r.hits.size(), 3u);
    EXPECT_FALSE(r.truncated);
    const auto want = brute_force_top_k(queries.row(q), kb, docs, 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.hits[i].index, want[i]);
  }
}

TEST(Retrieval, TiesBreakByAscendingId) {
  KnowledgeBase kb{{"c", "t", "x"}, {"a", "t", "x"}, {"b", "t", "x"}};
  Embeddings docs{2, {1, 0, 1, 0, 1, 0}};
  const std::vector<double> q{1, 0};
  const auto r = retrieve_top_k(q, kb, docs, 3);
  ASSERT_EQ(r.hits.size(), 3u);
  EXPECT_EQ(kb[r.hits[0].index].id, "a");
  EXPECT_EQ(kb[r.hits[1].index].id, "b");
  EXPECT_EQ(kb[r.hits[2].index].id, "c");
}

TEST(Retrieval, TruncationAndFullPermutation) {
  Rng rng(2);
  const auto kb = numbered_kb(2);
  const auto docs = random_unit_rows(rng, 2, 8);
  const auto q = random_unit_rows(rng, 1, 8);
  const auto r = retrieve_top_k(q.row(0), kb, docs, 3);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.hits.size(), 2u);

  const auto kb7 = numbered_kb(7);
  const auto docs7 = random_unit_rows(rng, 7, 8);
  const auto all = retrieve_top_k(q.row(0), kb7, docs7, 7);
  std::vector<std::size_t> idx;
  for (const auto& h : all.hits) idx.push_back(h.index);
  std::sort(idx.begin(), idx.end());
  std::vector<std::size_t> want(7);
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(idx, want);
  for (std::size_t i = 1; i < all.hits.size(); ++i) EXPECT_GE(all.hits[i - 1].similarity, all.hits[i].similarity);

  EXPECT_THROW(retrieve_top_k(q.row(0), {}, docs, 3), Error);
  EXPECT_THROW(retrieve_top_k(q.row(0), kb, docs, 0), Error);
  EXPECT_THROW(retrieve_top_k(q.row(0), kb7, docs, 3), Error);
}

TEST(Augment, GoldenAndIdentity) {
  agents::Prompt base{"sys", "persona.", "instruction?", ""};
  EXPECT_EQ(augment_prompt(base, {}), base);
  const KnowledgeInstance a{"x1", "t", "First finding."}, b{"x2", "t", "Second finding."};
  const auto out = augment_prompt(base, {&a, &b});
  EXPECT_EQ(out.user(), "persona.\n\n" + kFindingsHeader + "\n1. First finding.\n2. Second finding.\n\ninstruction?");
  EXPECT_EQ(out.system, "sys");
}

TEST(KnowledgeBase, ValidationAndRoundTrip) {
  const auto kb = numbered_kb(3);
  EXPECT_EQ(kb_from_json(kb_to_json(kb)), kb);
  EXPECT_THROW(kb_from_json(nlohmann::json::parse(R"([{"id":"a","topic":"t","text":"  "}])")), Error);
  EXPECT_THROW(kb_from_json(nlohmann::json::parse(R"([{"id":"a","topic":"t","text":"x"},{"id":"a","topic":"t","text":"y"}])")),
               Error);
  EXPECT_THROW(kb_from_json(nlohmann::json::parse(R"([{"id":"a","text":"x"}])")), Error);
}

TEST(KnowledgeBase, ShippedFilesLoad) {
  const fs::path dir = CHOICEALIGN_KB_DIR;
  const auto kb = load_kbs({dir / "marriage.json", dir / "race.json"});
  EXPECT_GE(kb.size(), 20u);
  EXPECT_NO_THROW(validate_kb(kb));
  EXPECT_THROW(load_kbs({dir / "race.json", dir / "race.json"}), Error);
}

TEST(CachedEmbeddings, MissesOnlyOnce) {
  const auto dir = fs::temp_directory_path() / "choicealign_embed_cache";
  fs::remove_all(dir);
  HashingEmbedder inner;
  CachedEmbedder cached(inner, dir);
  const auto a = cached.embed({"alpha beta", "gamma"});
  EXPECT_EQ(cached.hits(), 0u);
  const auto b = cached.embed({"gamma", "alpha beta"});
  EXPECT_EQ(cached.hits(), 2u);
  EXPECT_EQ(std::vector<double>(a.row(0).begin(), a.row(0).end()), std::vector<double>(b.row(1).begin(), b.row(1).end()));
  fs::remove_all(dir);
}

TEST(Mitigation, FindingsMoveMockTowardHuman) {
  // a mock whose race coefficients are wrong unless the prompt carries findings
  Rng rng(3);
  const auto human = fixtures::random_theta(rng);
  auto biased = human;
  for (auto f : {Feature::kRaceBlack, Feature::kRaceAsian}) {
    for (auto a : {Activity::kLeisure, Activity::kWork, Activity::kSleep}) biased.set(a, f, -human.at(a, f));
  }
  agents::MockAgentConfig cfg;
  cfg.hidden_theta = biased;
  cfg.augmented_theta = human;
  agents::MockAgent agent(cfg);

  synth::PopulationConfig pop;
  pop.n = 1500;
  pop.race_probs = {0.4, 0.3, 0.0, 0.3, 0.0};
  const auto personas = synth::generate_population(pop).records;
  const fs::path dir = CHOICEALIGN_KB_DIR;
  const auto kb = load_kb(dir / "race.json");
  HashingEmbedder embedder;
  std::vector<std::string> texts;
  for (const auto& k : kb) texts.push_back(k.text);
  const auto docs = embedder.embed(texts);
  std::vector<PersonaRecord> ps;
  for (const auto& r : personas) ps.push_back(r.persona);
  const auto retrieved = retrieve_for_personas(ps, kb, docs, embedder);
  std::map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < personas.size(); ++i) row[personas[i].record_id] = i;

  const auto pre = agents::run_batch(personas, agent, nullptr);
  const auto post = agents::run_batch(personas, agent, nullptr, {}, [&](const CleanRecord& r) {
    std::vector<const KnowledgeInstance*> hits;
    for (const auto& h : retrieved[row.at(r.record_id)].hits) hits.push_back(&kb[h.index]);
    return augment_prompt(agents::render_prompt(r.persona), hits);
  });
  estimator::FitOptions opt;
  opt.active = {true, true, true, true, true, true, true, true, false, true, false};
  estimator::FitResult truth;
  truth.theta_hat = human;
  truth.active = opt.active;
  const auto pre_fit = estimator::fit_structural(pre.decisions, opt);
  const auto post_fit = estimator::fit_structural(post.decisions, opt);
  const double before = alignment::attribute_activity_cosine(truth, pre_fit, Feature::kRaceBlack);
  const double after = alignment::attribute_activity_cosine(truth, post_fit, Feature::kRaceBlack);
  EXPECT_LT(before, 0.0);
  EXPECT_GT(after, 0.99);
}

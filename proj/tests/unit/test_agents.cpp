#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "choicealign/agents.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"
#include "choicealign/synth.hpp"
#include "fixtures.hpp"

using namespace choicealign;
using namespace choicealign::agents;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("choicealign_agents_" + name);
  fs::remove_all(dir);
  return dir;
}

PersonaRecord example_persona() {
  return {53, Gender::kMale, Race::kBlack, Education::kAdvanced, SpouseStatus::kSpouse, 1173.0};
}

/// Replays scripted answers per record id, counting calls.
class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(std::map<std::string, std::vector<std::string>> script) : script_(std::move(script)) {}
  std::string model_id() const override { return "scripted"; }
  std::string complete(const AgentRequest& request) override {
    ++calls_;
    std::lock_guard lock(mutex_);
    auto& answers = script_.at(request.record_id);
    const auto answer = answers.front();
    if (answers.size() > 1) answers.erase(answers.begin());
    if (answer == "!transport") throw Error(ErrorKind::kTransport, "down");
    return answer;
  }

 private:
  std::map<std::string, std::vector<std::string>> script_;
  std::mutex mutex_;
};

/// Local chat endpoint on an ephemeral port.
class FakeServer {
 public:
  explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

AgentConfig local_config(const std::string& endpoint) {
  AgentConfig c;
  c.endpoint = endpoint;
  c.model = "local-model";
  c.max_retries = 1;
  c.backoff_base_seconds = 0.0;
  c.timeout_seconds = 5;
  c.api_key_env = "CHOICEALIGN_TEST_KEY";
  return c;
}

}  // namespace

TEST(Prompt, GoldenRendering) {
  const auto p = render_prompt(example_persona());
  EXPECT_EQ(p.persona,
            "You are a male, 53 years old, ethnically identified as Black. Your highest level of education is "
            "advanced degree, and your weekly income is $1173.00. You live with a spouse.");
  EXPECT_NE(p.user().find("[Work, Leisure, Sleep and Personal Care, Other]"), std::string::npos);
  EXPECT_EQ(p.user(), p.persona + " " + p.instruction);
  EXPECT_EQ(p.system, kSystemInstruction);
  auto with = p;
  with.findings = "F";
  EXPECT_EQ(with.user(), p.persona + "\n\nF\n\n" + p.instruction);
  EXPECT_NE(prompt_hash(with), prompt_hash(p));
}

TEST(Prompt, DistinctPersonasGiveDistinctPrompts) {
  auto a = example_persona(), b = a;
  b.spouse = SpouseStatus::kPartner;
  EXPECT_NE(render_prompt(a).user(), render_prompt(b).user());
  b = a;
  b.age = 53.5;
  EXPECT_NE(render_prompt(b).persona.find("53.5 years"), std::string::npos);
}

TEST(Prompt, InvalidSlotIsNamed) {
  auto p = example_persona();
  p.race = static_cast<Race>(999);
  try {
    render_prompt(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("{Race}"), std::string::npos) << e.what();
  }
  p = example_persona();
  p.weekly_income = -1;
  EXPECT_THROW(render_prompt(p), Error);
}

TEST(Parse, CanonicalReordering) {
  const auto r = parse_allocation("Sure! [480, 300, 540, 120] is my answer.");
  ASSERT_TRUE(r.allocation);
  EXPECT_EQ((*r.allocation)[Activity::kWork], 480.0);
  EXPECT_EQ((*r.allocation)[Activity::kLeisure], 300.0);
  EXPECT_EQ((*r.allocation)[Activity::kSleep], 540.0);
  EXPECT_EQ((*r.allocation)[Activity::kOther], 120.0);
  EXPECT_FALSE(r.flags.renormalized);
  EXPECT_FALSE(r.flags.floored);
}

TEST(Parse, SumFifteenHundredScalesByPointNineSix) {
  const auto r = parse_allocation("[600, 300, 400, 200]");
  ASSERT_TRUE(r.allocation);
  EXPECT_TRUE(r.flags.renormalized);
  EXPECT_EQ((*r.allocation)[Activity::kWork], 576.0);
  EXPECT_EQ((*r.allocation)[Activity::kLeisure], 288.0);
  EXPECT_EQ((*r.allocation)[Activity::kSleep], 384.0);
  EXPECT_EQ((*r.allocation)[Activity::kOther], 192.0);
}

TEST(Parse, ZeroComponentIsFloored) {
  const auto r = parse_allocation("[0, 480, 480, 480]");
  ASSERT_TRUE(r.allocation);
  EXPECT_TRUE(r.flags.floored);
  EXPECT_GT((*r.allocation)[Activity::kWork], 0.0);
  double sum = 0;
  for (double m : r.allocation->minutes()) sum += m;
  EXPECT_NEAR(sum, 1440.0, 1e-9);
}

TEST(Parse, Failures) {
  EXPECT_FALSE(parse_allocation("I would rather not say.").allocation);
  EXPECT_FALSE(parse_allocation("[1, 2, 3]").allocation);
  EXPECT_FALSE(parse_allocation("[0, 0, 0, 0]").allocation);
  EXPECT_FALSE(parse_allocation("[-5, 500, 500, 445]").allocation);
}

TEST(LargestRemainder, SumsExactly) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 4> s{};
    double t = 0;
    for (double& v : s) t += (v = rng.uniform_open01());
    for (double& v : s) v /= t;
    const auto m = largest_remainder(s, 1440);
    EXPECT_EQ(m[0] + m[1] + m[2] + m[3], 1440);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(std::abs(m[j] - s[j] * 1440), 1.0);
  }
}

TEST(Mock, ZeroThetaAnswersEqualSplit) {
  MockAgent agent({});
  AgentRequest req{"r1", render_prompt(example_persona()), FeatureVector{}};
  EXPECT_EQ(agent.complete(req), "[360, 360, 360, 360]");
  EXPECT_EQ(agent.calls(), 1u);
}

TEST(Mock, DistinctConfigsHaveDistinctIds) {
  MockAgentConfig a, b;
  b.hidden_theta.set(Activity::kWork, Feature::kMale, 0.1);
  EXPECT_NE(MockAgent(a).model_id(), MockAgent(b).model_id());
  EXPECT_EQ(MockAgent(a).model_id(), MockAgent(a).model_id());
}

TEST(Cache, SecondQueryHitsCacheWithoutCalls) {
  const auto dir = scratch("cache");
  ResponseCache cache(dir);
  MockAgent agent({});
  AgentRequest req{"r1", render_prompt(example_persona()), FeatureVector{}};
  const auto first = query_agent(agent, &cache, req);
  EXPECT_FALSE(first.from_cache);
  const auto second = query_agent(agent, &cache, req);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.raw, first.raw);
  EXPECT_EQ(agent.calls(), 1u);
  fs::remove_all(dir);
}

TEST(Http, WireFormatAndBearerToken) {
  std::string seen_auth;
  nlohmann::json seen_body;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"[480, 300, 540, 120]"}}]})",
                    "application/json");
  });
  ::setenv("CHOICEALIGN_TEST_KEY", "sk-test", 1);
  HttpChatAgent agent(local_config(server.endpoint()));
  const auto prompt = render_prompt(example_persona());
  EXPECT_EQ(agent.complete({"r1", prompt, {}}), "[480, 300, 540, 120]");
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  EXPECT_EQ(seen_body["model"], "local-model");
  EXPECT_EQ(seen_body["messages"][0]["role"], "system");
  EXPECT_EQ(seen_body["messages"][0]["content"], prompt.system);
  EXPECT_EQ(seen_body["messages"][1]["content"], prompt.user());
  EXPECT_DOUBLE_EQ(seen_body["temperature"].get<double>(), 0.1);
  ::unsetenv("CHOICEALIGN_TEST_KEY");
}

TEST(Http, PersistentRateLimitSurfacesAfterRetries) {
  std::atomic<int> hits{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 429;
  });
  HttpChatAgent agent(local_config(server.endpoint()));
  try {
    agent.complete({"r1", render_prompt(example_persona()), {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRateLimit);
  }
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(agent.calls(), 2u);
}

TEST(Http, TransientServerErrorIsRetried) {
  std::atomic<int> hits{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"[1, 1, 1, 1]"}}]})", "application/json");
  });
  HttpChatAgent agent(local_config(server.endpoint()));
  EXPECT_EQ(agent.complete({"r1", render_prompt(example_persona()), {}}), "[1, 1, 1, 1]");
}

TEST(Http, UnreachableEndpointIsTransport) {
  auto cfg = local_config("http://127.0.0.1:1/v1/chat/completions");
  cfg.max_retries = 0;
  HttpChatAgent agent(cfg);
  try {
    agent.complete({"r1", render_prompt(example_persona()), {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
  }
  EXPECT_THROW(HttpChatAgent(AgentConfig{}), Error);
}

TEST(Batch, RetryAttritionAndOrder) {
  Records recs;
  for (const char* id : {"a", "b", "c", "d"}) {
    recs.push_back(fixtures::make_record(id, 40, Gender::kFemale, Race::kWhite, Education::kBachelor,
                                        SpouseStatus::kNone, 500 + recs.size()));
  }
  ScriptedAgent agent({{"a", {"[480, 300, 540, 120]"}},
                       {"b", {"no idea", "[600, 300, 400, 200]"}},
                       {"c", {"no idea", "still no idea"}},
                       {"d", {"!transport"}}});
  BatchOptions opt;
  opt.concurrency = 3;
  const auto result = run_batch(recs, agent, nullptr, opt);
  ASSERT_EQ(result.decisions.size(), 2u);
  EXPECT_EQ(result.decisions[0].record_id, "a");
  EXPECT_EQ(result.decisions[1].record_id, "b");
  EXPECT_TRUE(result.decisions[1].flags.renormalized);
  ASSERT_EQ(result.index.size(), 4u);
  EXPECT_EQ(result.index[0].status, "ok");
  EXPECT_EQ(result.index[2].status, "parse-failure");
  EXPECT_EQ(result.index[3].status, "transport-error");
  ASSERT_EQ(result.dropped.size(), 2u);
  EXPECT_EQ(result.dropped[0].record_id, "c");
  EXPECT_EQ(result.dropped[0].raw, "still no idea");
  EXPECT_EQ(result.agent_calls, 6u);
  EXPECT_EQ(index_from_csv(index_csv(result.index)).size(), 4u);
  EXPECT_NE(attrition_csv(result.dropped).find("still no idea"), std::string::npos);
}

TEST(Batch, CacheIndexMergesByKey) {
  const auto dir = scratch("index");
  std::vector<IndexRow> rows{{"a", "m", "h1", "ok", false, false}, {"b", "m", "h2", "parse-failure", false, false}};
  update_cache_index(dir, rows);
  rows = {{"b", "m", "h2", "ok", true, false}};
  update_cache_index(dir, rows);
  const auto merged = index_from_csv(io::read_text(dir / "index.csv"));
  ASSERT_EQ(merged.size(), 2u);
  for (const auto& r : merged) {
    if (r.record_id == "b") {
      EXPECT_EQ(r.status, "ok");
      EXPECT_TRUE(r.renormalized);
    }
  }
  fs::remove_all(dir);
}

TEST(Batch, MockEndToEndRecoversHiddenTheta) {
  Rng rng(5);
  MockAgentConfig cfg;
  cfg.hidden_theta = fixtures::random_theta(rng);
  synth::PopulationConfig pop;
  pop.n = 600;
  const auto personas = synth::generate_population(pop).records;
  MockAgent agent(cfg);
  const auto dir = scratch("e2e");
  ResponseCache cache(dir);
  const auto result = run_batch(personas, agent, &cache);
  ASSERT_EQ(result.decisions.size(), personas.size());
  for (std::size_t i = 0; i < personas.size(); ++i) {
    const auto want = predict_shares(cfg.hidden_theta, personas[i].features).values();
    const auto got = observed_shares(result.decisions[i]);
    // integer minutes bound the error at one minute per activity
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], want[j], 1.0 / 1440 + 1e-12);
  }
  const auto again = run_batch(personas, agent, &cache);
  EXPECT_EQ(again.cache_hits, personas.size());
  EXPECT_EQ(again.agent_calls, 0u);
  fs::remove_all(dir);
}

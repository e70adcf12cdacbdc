#include <atomic>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "random_sessions.hpp"
#include "semdial/errors.hpp"
#include "semdial/service.hpp"
#include "semdial/toy.hpp"
#include "stub_models.hpp"

#include "httplib.h"

using namespace semdial;
using nlohmann::json;

namespace {

Vocabulary stub_vocab() {
  std::mt19937_64 rng(51);
  std::vector<AnnotatedSession> sessions;
  for (int i = 0; i < 10; ++i) sessions.push_back(testing::random_session(rng, "v" + std::to_string(i)));
  return Vocabulary::build(sessions);
}

ServiceCore stub_core() {
  const auto vocab = stub_vocab();
  return ServiceCore(std::make_shared<testing::FunctionModel>(testing::hashed_model(vocab.size())), vocab, {});
}

SemanticAnnotation plan_of(std::vector<std::string> words) {
  SemanticAnnotation a;
  a.emotions = {EmotionLabel::kLike};
  a.dialogue_acts = {DialogueAct::kInform};
  for (auto& w : words) a.topical_words.push_back({w});
  return a;
}

}  // namespace

TEST_CASE("sessions and turn state") {
  auto core = stub_core();
  CHECK(core.default_policy().response.top_k == 50);
  CHECK(core.default_policy().response.top_p == 0.9);
  CHECK(core.default_policy().response.temperature == 0.7);
  CHECK(core.default_policy().response.length == LengthBounds{9, 32});

  const auto a = core.create_session();
  const auto b = core.create_session();
  CHECK(a != b);
  CHECK(core.get_session(a).history.empty());
  CHECK_THROWS_AS(core.get_session("nope"), NotFoundError);

  CHECK_THROWS_AS(core.generate(a, std::nullopt, 1), StateError);
  CHECK_THROWS_AS(core.post_message(a, "   "), ValidationError);
  CHECK(core.get_session(a).history.empty());

  const auto proposed = core.post_message(a, "do you like rock ?");
  REQUIRE(proposed.understood.has_value());
  REQUIRE(proposed.proposed_plan.has_value());
  // The planning minimum guarantees at least five topical value tokens.
  CHECK(linearize_values(*proposed.proposed_plan, VariableKey::kTopical, stub_vocab()).size() >= 5);
  auto s = core.get_session(a);
  CHECK(s.history.size() == 1);
  CHECK(s.traces.empty());
  CHECK(s.pending.has_value());
  CHECK(s.history[0].annotation == proposed.understood);
  CHECK_THROWS_AS(core.post_message(a, "again ?"), StateError);

  const auto trace = core.generate(a, std::nullopt, 5);
  CHECK_FALSE(trace.plan_overridden);
  CHECK(trace.planned == proposed.proposed_plan);
  CHECK(trace.understood == proposed.understood);
  CHECK(trace.seed == 5);
  s = core.get_session(a);
  REQUIRE(s.history.size() == 2);
  REQUIRE(s.traces.size() == 1);
  CHECK(s.history[1].text == s.traces[0].response);
  CHECK(s.history[1].annotation == trace.planned);
  CHECK_FALSE(trace.response_span.tokens.empty());
  CHECK_FALSE(trace.planning_span.tokens.empty());
  CHECK_FALSE(s.pending.has_value());
  CHECK_THROWS_AS(core.generate(a, std::nullopt, 5), StateError);
}

TEST_CASE("overrides and seeds") {
  auto core = stub_core();
  const auto x = core.create_session({std::nullopt, "ctx", 3});
  const auto y = core.create_session({std::nullopt, "ctx", 3});
  for (const auto& id : {x, y}) core.post_message(id, "tell me about jazz .");
  const auto tx = core.generate(x, plan_of({"rock", "jazz"}), 11);
  const auto ty = core.generate(y, plan_of({"rock", "jazz"}), 11);
  CHECK(tx.plan_overridden);
  CHECK(tx.planned == plan_of({"rock", "jazz"}));
  CHECK(tx == ty);
  CHECK(tx.response == ty.response);

  // Without an explicit seed the session seed and turn index decide.
  const auto z = core.create_session({std::nullopt, "ctx", 3});
  core.post_message(z, "tell me about jazz .");
  core.post_message(x, "tell me more .");
  const auto tz = core.generate(z, std::nullopt, std::nullopt);
  const auto w = core.create_session({std::nullopt, "ctx", 3});
  core.post_message(w, "tell me about jazz .");
  CHECK(core.generate(w, std::nullopt, std::nullopt) == tz);

  CreateSessionRequest no_plan;
  no_plan.policy = DecodingPolicy{};
  no_plan.policy->use_planning = false;
  const auto np = core.create_session(no_plan);
  const auto p = core.post_message(np, "hello .");
  CHECK_FALSE(p.proposed_plan.has_value());
  CHECK_THROWS_AS(core.generate(np, plan_of({"rock"}), 1), ValidationError);
  CHECK_FALSE(core.generate(np, std::nullopt, 1).planned.has_value());
}

TEST_CASE("no checkpoint") {
  ServiceCore core(nullptr, stub_vocab(), {});
  CHECK_FALSE(core.has_checkpoint());
  CHECK_THROWS_AS(core.create_session(), NoCheckpointError);
  CHECK_THROWS_AS(core.get_session("s1"), NoCheckpointError);
}

TEST_CASE("concurrent sessions") {
  auto core = stub_core();
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(core.create_session());
  std::atomic<int> conflicts{0}, turns{0};
  std::vector<std::thread> threads;
  // Two threads per session race on the same turns; each turn succeeds at
  // most once, the loser sees a StateError.
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const auto& id = ids[static_cast<std::size_t>(t % 4)];
      for (int k = 0; k < 3; ++k) {
        try {
          core.post_message(id, "do you like rock ?");
        } catch (const StateError&) {
          ++conflicts;
        }
        try {
          core.generate(id, std::nullopt, static_cast<std::uint64_t>(k));
          ++turns;
        } catch (const StateError&) {
          ++conflicts;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  int total = 0;
  for (const auto& id : ids) {
    const auto s = core.get_session(id);
    for (std::size_t i = 0; i < s.history.size(); ++i) {
      CHECK(s.history[i].speaker == (i % 2 == 0 ? Speaker::kHuman : Speaker::kMachine));
    }
    const std::size_t machine = s.history.size() / 2;
    REQUIRE(s.traces.size() == machine);
    for (std::size_t m = 0; m < machine; ++m) CHECK(s.traces[m].response == s.history[2 * m + 1].text);
    total += static_cast<int>(machine);
  }
  CHECK(total == turns.load());
  CHECK(turns.load() >= 12);
}

TEST_CASE("snapshot round trip") {
  auto core = stub_core();
  const auto a = core.create_session({std::nullopt, "music", 9});
  core.chat(a, "do you like rock ?", 1);
  core.post_message(a, "and jazz ?");
  const auto path = std::filesystem::temp_directory_path() / "semdial_sessions.json";
  core.snapshot(path);

  auto other = stub_core();
  other.restore(path);
  const auto before = core.get_session(a);
  const auto after = other.get_session(a);
  CHECK(session_to_json(before) == session_to_json(after));
  // Pending stages were recomputed, so generation continues identically.
  CHECK(core.generate(a, std::nullopt, 4) == other.generate(a, std::nullopt, 4));
  CHECK(other.create_session() != a);

  {
    std::ofstream out(path);
    out << "{\"format\": \"other\"}";
  }
  CHECK_THROWS_AS(other.restore(path), ValidationError);
  std::filesystem::remove(path);
}

TEST_CASE("HTTP API") {
  auto core = stub_core();
  HttpService http(core, "http://localhost:5173");
  const int port = http.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/policy");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  const auto policy = json::parse(res->body);
  CHECK(policy["response"]["top_k"] == 50);
  CHECK(policy["response"]["top_p"] == 0.9);
  CHECK(policy["response"]["temperature"] == 0.7);
  CHECK(policy["response"]["length"]["min"] == 9);
  CHECK(policy["response"]["length"]["max"] == 32);

  res = client.Options("/sessions");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  res = client.Post("/sessions", "{\"policy\": {\"response\": {\"top_p\": 7}}}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"]["code"] == "invalid_request");
  res = client.Post("/sessions", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = client.Post("/sessions", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const std::string id = json::parse(res->body)["session_id"];
  res = client.Post("/sessions", "{}", "application/json");
  CHECK(json::parse(res->body)["session_id"] != id);

  res = client.Get("/sessions/" + id);
  REQUIRE(res);
  CHECK(json::parse(res->body)["history"].empty());
  CHECK(client.Get("/sessions/missing")->status == 404);
  CHECK(json::parse(client.Get("/sessions/missing")->body)["error"]["code"] == "not_found");

  res = client.Post("/sessions/" + id + "/generate", "{}", "application/json");
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"]["code"] == "state_error");
  res = client.Post("/sessions/" + id + "/message", "{\"text\": \"\"}", "application/json");
  CHECK(res->status == 400);

  res = client.Post("/sessions/" + id + "/message", "{\"text\": \"do you like rock ?\"}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto proposed = json::parse(res->body);
  CHECK(proposed.contains("understood"));
  CHECK_FALSE(proposed["proposed_plan"]["topical_words"].empty());
  CHECK(client.Post("/sessions/" + id + "/message", "{\"text\": \"hi\"}", "application/json")->status == 409);

  const std::string override_body =
      R"({"seed": 7, "plan_override": {"emotions": ["Like"], "dialogue_acts": ["Inform"], "topical_words": [["jazz"]]}})";
  res = client.Post("/sessions/" + id + "/generate", override_body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto trace = json::parse(res->body);
  CHECK(trace["plan_overridden"] == true);
  CHECK(trace["seed"] == 7);
  CHECK(trace["spans"]["response"]["tokens"].size() >= 9);

  res = client.Get("/sessions/" + id);
  const auto view = json::parse(res->body);
  CHECK(view["history"].size() == 2);
  CHECK(view["traces"].size() == 1);
  CHECK(view["traces"][0]["response"] == view["history"][1]["text"]);

  res = client.Post("/sessions/" + id + "/chat", "{\"text\": \"tell me more .\", \"seed\": 2}", "application/json");
  CHECK(res->status == 200);
  CHECK(json::parse(client.Get("/sessions/" + id)->body)["history"].size() == 4);

  client.Post("/sessions/" + id + "/message", "{\"text\": \"ok\"}", "application/json");
  res = client.Post("/sessions/" + id + "/generate", R"({"plan_override": {"emotions": ["Grumpy"]}})",
                    "application/json");
  CHECK(res->status == 400);
  res = client.Post("/sessions/" + id + "/generate", R"({"surprise": 1})", "application/json");
  CHECK(res->status == 400);
  CHECK(client.Get("/nowhere")->status == 404);
  http.stop();

  ServiceCore empty(nullptr, stub_vocab(), {});
  HttpService down(empty);
  const int p2 = down.start("127.0.0.1", 0);
  httplib::Client c2("127.0.0.1", p2);
  res = c2.Post("/sessions", "{}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 503);
  CHECK(json::parse(res->body)["error"]["code"] == "no_checkpoint");
}

TEST_CASE("service over a model trained on a toy corpus") {
  ToyOptions opts;
  opts.sessions = 30;
  opts.exchanges = 1;
  opts.seed = 3;
  const auto toy = generate_toy_corpus(opts);
  const auto& sessions = toy.split.train;
  const auto vocab = Vocabulary::build(sessions);
  LinearizationScheme scheme;
  scheme.max_sequence_length = 256;
  const auto examples = linearize_corpus(sessions, vocab, scheme);
  ModelConfig config;
  config.vocab_size = vocab.size();
  config.layers = 2;
  config.heads = 4;
  config.hidden_dim = 64;
  config.max_positions = 256;
  config.dropout = 0.0;
  config.seed = 5;
  TrainSchedule schedule;
  schedule.learning_rate = 3e-3;
  schedule.validate_every = 50;
  schedule.max_steps = 400;
  schedule.target_valid_ppl = 1.05;
  const auto result = train(examples, examples, config, schedule, vocab, scheme);
  INFO("best ppl " << result.best_valid_ppl << " after " << result.steps << " steps");
  REQUIRE(result.best_valid_ppl < 1.5);

  ServiceCore core(std::make_shared<TransformerModel>(result.checkpoint), vocab, scheme);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& session = sessions[i];
    const auto id = core.create_session({std::nullopt, session.context, 1});
    const auto proposed = core.post_message(id, session.utterances[0].text);
    CHECK(proposed.understood == session.utterances[0].annotation);
    const auto& gold_plan = *session.utterances[1].annotation;
    const auto trace = core.generate(id, gold_plan, 1);
    CHECK(trace.plan_overridden);
    for (const auto& w : gold_plan.topical_words) {
      CHECK(trace.response.find(w[0]) != std::string::npos);
    }
  }
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "echo/service.hpp"
#include "fixtures.hpp"
#include "impression_cases.hpp"

using namespace echo;
using service::Api;
using core::Json;

namespace {

constexpr std::int64_t kT0 = 1'700'000'000'000;

EngineConfig small_engine() {
  EngineConfig c;
  c.model.input_dim = 256;
  c.recommend.dim = 256;
  c.recommend.display_threshold = 0.0;
  return c;
}

struct Harness {
  std::int64_t now = kT0;
  std::unique_ptr<Api> api;

  service::Clock clock() {
    return [this] { return now; };
  }
  service::Response call(std::string_view method, std::string_view target, const Json& body = Json::object()) {
    return api->handle(method, target, body.dump());
  }
};

/// Drives one scripted session; returns the survey shown on the shopping message.
Json scripted_session(Harness& h) {
  auto r = h.call("POST", "/session", {{"user_id", "alice"}});
  EXPECT_EQ(r.status, 200);
  const auto sid = r.body.at("session_id").get<std::string>();
  EXPECT_EQ(sid, "s000001");
  const auto base = "/session/" + sid;

  h.now += 1000;
  r = h.call("POST", base + "/message", {{"text", "hi"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_FALSE(r.body.at("taskable").get<bool>());
  EXPECT_EQ(r.body.at("reason"), "greeting");

  h.now += 20'000;
  r = h.call("POST", base + "/message", {{"text", "going shopping for a red scarf this winter"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_TRUE(r.body.at("taskable").get<bool>());
  const auto survey = r.body.at("survey");
  EXPECT_EQ(survey.at("tasks").size(), 4u);
  EXPECT_DOUBLE_EQ(survey.at("min_read_seconds").get<double>(), 5.0);
  const auto rec = r.body.at("recommendation");

  const auto& tasks = survey.at("tasks");
  h.now += 3000;
  r = h.call("POST", base + "/response",
             {{"task_id", tasks[0].at("task_id")}, {"answer", 0}, {"read_latency_s", 3.0}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("status"), "rejected");
  EXPECT_EQ(r.body.at("reason"), "too_fast");

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    h.now += 6000;
    Json body{{"task_id", tasks[i].at("task_id")}, {"read_latency_s", 6.0}};
    if (tasks[i].at("kind") == "free_text") {
      body["answer"] = "scarf";
    } else if (i == 1) {
      body["abstain"] = true;
    } else {
      body["answer"] = 0;
    }
    r = h.call("POST", base + "/response", body);
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("status"), "accepted") << r.body.dump();
    EXPECT_EQ(r.body.at("survey_completed").get<bool>(), i + 1 == tasks.size());
  }

  if (!rec.is_null()) {
    for (int k = 1; k <= 3; ++k) {
      h.now += 500;
      r = h.call("POST", base + "/click", {{"impression_id", rec.at("impression_id")}});
      EXPECT_EQ(r.status, 200);
      EXPECT_EQ(r.body.at("clicks").get<int>(), k);
    }
  }
  return survey;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("echo-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

config::ServiceConfig persistent_config(const std::filesystem::path& dir) {
  config::ServiceConfig sc;
  sc.engine = small_engine();
  sc.registry_path = dir / "registry.jsonl";
  sc.catalog_path = dir / "catalog.jsonl";
  sc.data_dir = dir / "data";
  config::write_file(sc.registry_path, config::registry_to_jsonl(fx::small_registry()));
  config::write_file(sc.catalog_path, fx::small_catalog().to_jsonl());
  return sc;
}

}  // namespace

TEST(Service, ScriptedSessionMatchesGoldenLog) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  scripted_session(h);
  const auto log = h.api->log_snapshot().to_jsonl();
  const auto golden = std::filesystem::path(ECHO_TEST_DATA_DIR) / "service" / "scripted_session.events.jsonl";
  if (const char* upd = std::getenv("ECHO_UPDATE_GOLDEN"); upd && std::string(upd) == "1") {
    std::filesystem::create_directories(golden.parent_path());
    std::ofstream(golden, std::ios::binary) << log;
  }
  EXPECT_EQ(fx::read_file(golden), log);
}

TEST(Service, MetricsReflectTheSession) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  scripted_session(h);
  const auto m = h.call("GET", "/metrics");
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(m.body.at("surveys_shown"), 1);
  EXPECT_EQ(m.body.at("surveys_completed"), 1);
  EXPECT_DOUBLE_EQ(m.body.at("completion_rate").get<double>(), 1.0);
  EXPECT_EQ(m.body.at("sigma").size(), fx::small_registry().size());
}

TEST(Service, GetsHaveNoSideEffects) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  scripted_session(h);
  const auto size = h.api->log_snapshot().size();
  const auto sum = h.api->engine_checksum();
  const auto first = h.call("GET", "/metrics").body;
  h.call("GET", "/session/s000001/events?after=0&limit=5");
  h.call("GET", "/session/s000001/events");
  EXPECT_EQ(h.call("GET", "/metrics").body, first);
  EXPECT_EQ(h.api->log_snapshot().size(), size);
  EXPECT_EQ(h.api->engine_checksum(), sum);
}

TEST(Service, EventPaging) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  scripted_session(h);
  std::uint64_t after = 0;
  std::size_t seen = 0;
  for (;;) {
    const auto r = h.call("GET", "/session/s000001/events?after=" + std::to_string(after) + "&limit=4");
    ASSERT_EQ(r.status, 200);
    const auto& evs = r.body.at("events");
    if (evs.empty()) break;
    EXPECT_LE(evs.size(), 4u);
    for (const auto& e : evs) {
      EXPECT_GT(e.at("event_id").get<std::uint64_t>(), after);
      after = e.at("event_id").get<std::uint64_t>();
    }
    EXPECT_EQ(r.body.at("next_after").get<std::uint64_t>(), after);
    seen += evs.size();
  }
  EXPECT_EQ(seen, h.api->log_snapshot().size());
}

TEST(Service, ErrorMapping) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  const auto sid = h.call("POST", "/session").body.at("session_id").get<std::string>();
  const auto base = "/session/" + sid;

  auto r = h.api->handle("POST", base + "/message", "{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body.at("field"), "body");
  r = h.call("POST", base + "/message", {{"txt", "hello"}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body.at("field"), "text");
  r = h.call("POST", base + "/response", {{"answer", 1}, {"read_latency_s", 6}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body.at("field"), "task_id");
  r = h.call("POST", base + "/click", Json::object());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body.at("field"), "impression_id");

  EXPECT_EQ(h.call("POST", "/session/s999999/message", {{"text", "hello there friend"}}).status, 404);
  EXPECT_EQ(h.call("POST", base + "/response", {{"task_id", "sv-9-t0"}, {"answer", 0}, {"read_latency_s", 6}}).status,
            404);
  EXPECT_EQ(h.call("POST", base + "/click", {{"impression_id", "imp-77"}}).status, 404);
  EXPECT_EQ(h.call("GET", "/nowhere").status, 404);
  EXPECT_EQ(h.call("DELETE", "/metrics").status, 405);
}

TEST(Service, SessionsAreIndependent) {
  Harness h;
  h.api = std::make_unique<Api>(fx::small_registry(), fx::small_catalog(), small_engine(), h.clock());
  const auto a = h.call("POST", "/session", {{"user_id", "a"}}).body.at("session_id").get<std::string>();
  const auto b = h.call("POST", "/session", {{"user_id", "b"}}).body.at("session_id").get<std::string>();
  EXPECT_NE(a, b);
  const auto r = h.call("POST", "/session/" + a + "/message", {{"text", "going shopping for a red scarf"}});
  ASSERT_FALSE(r.body.at("survey").is_null());
  const auto task = r.body.at("survey").at("tasks")[0].at("task_id");
  // a task belongs to its own session only
  EXPECT_EQ(h.call("POST", "/session/" + b + "/response", {{"task_id", task}, {"answer", 0}, {"read_latency_s", 6}})
                .status,
            404);
}

TEST(Service, KillAndReplayRecoversIdenticalState) {
  const auto dir = temp_dir("recovery");
  const auto sc = persistent_config(dir);
  Harness h;
  h.api = Api::open(sc, h.clock());
  scripted_session(h);
  const auto log = h.api->log_snapshot().to_jsonl();
  const auto sum = h.api->engine_checksum();
  const auto metrics = h.api->metrics();
  h.api.reset();  // no shutdown hook: state must already be on disk

  EXPECT_EQ(fx::read_file(sc.data_dir / "events.jsonl"), log);
  h.api = Api::open(sc, h.clock());
  EXPECT_EQ(h.api->log_snapshot().to_jsonl(), log);
  EXPECT_EQ(h.api->engine_checksum(), sum);
  EXPECT_EQ(h.api->metrics(), metrics);

  // sessions survive and keep counting
  h.now += 60'000;
  auto r = h.call("POST", "/session/s000001/message", {{"text", "another shopping thought about a lamp"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("turn_index"), 2);
  EXPECT_EQ(h.call("POST", "/session").body.at("session_id"), "s000002");

  // a torn final line from a crash mid-write is dropped
  const auto before = h.api->log_snapshot().to_jsonl();
  h.api.reset();
  std::ofstream(sc.data_dir / "events.jsonl", std::ios::app | std::ios::binary) << "{\"event_id\":99,\"sess";
  h.api = Api::open(sc, h.clock());
  EXPECT_EQ(h.api->log_snapshot().to_jsonl(), before);
  std::filesystem::remove_all(dir);
}

TEST(Service, BadConfigPathsFail) {
  const auto dir = temp_dir("badcfg");
  auto sc = persistent_config(dir);
  sc.catalog_path = dir / "missing.jsonl";
  EXPECT_ANY_THROW(Api::open(sc));
  std::filesystem::remove_all(dir);
}

#include <gtest/gtest.h>

#include <filesystem>

#include "echo/config.hpp"
#include "echo/snapshot.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace echo;
using config::ConfigError;
using config::KeyValueFile;

namespace {

std::string error_field(std::string_view text) {
  try {
    const auto kv = KeyValueFile::parse(text);
    EngineConfig c;
    config::apply_engine_keys(kv, c);
    config::validate(c);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(KeyValue, Grammar) {
  const auto kv = KeyValueFile::parse(
      "# top comment\n"
      "seed = 9\n"
      "\n"
      "[filter]\n"
      "min_tokens = 4   # trailing comment\n"
      "greeting_lexicon = [\"hi\", yo, \"a # b\"]\n"
      "[x]\n"
      "name = \"quote \\\" and \\\\ and \\n\"\n"
      "flag = false\n");
  EXPECT_EQ(kv.get_size("seed"), 9u);
  EXPECT_EQ(kv.get_size("filter.min_tokens"), 4u);
  EXPECT_EQ(kv.get_list("filter.greeting_lexicon"), (std::vector<std::string>{"hi", "yo", "a # b"}));
  EXPECT_EQ(kv.get_string("x.name"), "quote \" and \\ and \n");
  EXPECT_FALSE(kv.get_bool("x.flag"));
}

TEST(KeyValue, SyntaxErrorsNameTheField) {
  EXPECT_THROW(KeyValueFile::parse("[broken\n"), ConfigError);
  EXPECT_THROW(KeyValueFile::parse("novalue\n"), ConfigError);
  EXPECT_THROW(KeyValueFile::parse("a b = 1\n"), ConfigError);
  try {
    KeyValueFile::parse("a = 1\na = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "a");
  }
}

TEST(EngineKeys, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(error_field("[selector]\nk = -1\n"), "selector.k");
  EXPECT_EQ(error_field("[selector]\nk = 2\n"), "tasks.question_count");
  EXPECT_EQ(error_field("[selector]\nmode = sideways\n"), "selector.mode");
  EXPECT_EQ(error_field("[model]\nlearning_rate = fast\n"), "model.learning_rate");
  EXPECT_EQ(error_field("[filter]\ngate_threshold = 1.5\n"), "filter.gate_threshold");
  EXPECT_EQ(error_field("[selector]\ninitial_weights = [1, 2]\n"), "selector.initial_weights");
  EXPECT_EQ(error_field("[engine]\nbaseline_arm = maybe\n"), "engine.baseline_arm");
  EXPECT_EQ(error_field("[tasks]\nmin_read_seconds = 5\n"), "<none>");
}

TEST(EngineKeys, RenderRoundTrip) {
  EngineConfig c;
  c.seed = 77;
  c.baseline_arm = true;
  c.selector.k = 6;
  c.selector.mode = selector::Mode::select_models;
  c.filter.greeting_lexicon = {"hi", "a \"quoted\" word"};
  c.recommend.merge_window_ms = 2500;
  c.tasks.min_read_seconds = 4.25;
  const auto text = config::render_engine_config(c);
  EngineConfig back;
  config::apply_engine_keys(KeyValueFile::parse(text), back);
  EXPECT_EQ(config::render_engine_config(back), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.filter.greeting_lexicon, c.filter.greeting_lexicon);
}

TEST(ServiceConfig, PathsAndUnknownKeys) {
  auto kv = KeyValueFile::parse("registry = \"r.jsonl\"\ncatalog = c.jsonl\nport = 9000\n");
  const auto sc = config::service_config_from(kv, "/tmp/base");
  EXPECT_EQ(sc.registry_path, std::filesystem::path("/tmp/base/r.jsonl"));
  EXPECT_EQ(sc.port, 9000);
  EXPECT_THROW(config::service_config_from(KeyValueFile::parse("catalog = c\n"), "/"), ConfigError);
  try {
    config::service_config_from(KeyValueFile::parse("registry = r\ncatalog = c\nbogus = 1\n"), "/");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "bogus");
  }
}

TEST(Registry, JsonlRoundTripAndErrors) {
  const auto reg = fx::small_registry();
  const auto text = config::registry_to_jsonl(reg);
  EXPECT_EQ(config::registry_to_jsonl(config::registry_from_jsonl(text)), text);
  EXPECT_THROW(config::registry_from_jsonl("{\"feature_id\":\"x\",\"kind\":\"weird\"}"), std::exception);
}

TEST(Snapshot, RoundTrip) {
  const auto reg = fx::small_registry();
  features::ModelConfig mc;
  mc.input_dim = 64;
  mc.embed_dim = 8;
  snapshot::Snapshot s;
  fx::Gen gen(3);
  for (const auto& spec : reg.specs()) {
    auto p = features::make_params(spec, mc);
    fx::randomize(p.weights, gen.rng(), 1.0);
    s.models.push_back(std::move(p));
  }
  s.selector = selector::make_params(reg);
  s.selector.alpha[2] = 7.5;
  const auto bytes = snapshot::encode(s);
  EXPECT_EQ(bytes.substr(0, 8), "ECHOSNAP");
  EXPECT_EQ(snapshot::decode(bytes), s);
}

TEST(Snapshot, CorruptionIsDetected) {
  snapshot::Snapshot s;
  s.selector = selector::make_params(fx::small_registry());
  const auto bytes = snapshot::encode(s);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(snapshot::decode(flipped), snapshot::SnapshotError);
  EXPECT_THROW(snapshot::decode(bytes.substr(0, bytes.size() - 3)), snapshot::SnapshotError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(snapshot::decode(magic), snapshot::SnapshotError);
  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(snapshot::decode(version), snapshot::SnapshotError);
}

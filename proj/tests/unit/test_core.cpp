#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "echo/core/checksum.hpp"
#include "echo/core/event_log.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/text.hpp"
#include "echo/core/types.hpp"
#include "fixtures.hpp"

using namespace echo;
using namespace echo::core;

TEST(Fnv1a, PublishedVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, SplitsOnPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Hello, World! $20 ok"), (std::vector<std::string>{"hello", "world", "$20", "ok"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
  EXPECT_EQ(tokenize("caf\xc3\xa9 bar"), (std::vector<std::string>{"caf\xc3\xa9", "bar"}));
}

// Dense re-implementation of the hashing scheme as an oracle.
std::vector<double> featurize_oracle(std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokenize(text)) {
    v[fnv1a(tok, fnv1a("w:")) % dim] += 1;
    const std::string m = "^" + tok + "$";
    for (std::size_t i = 0; i + 3 <= m.size(); ++i) v[fnv1a(m.substr(i, 3), fnv1a("c:")) % dim] += 1;
  }
  double n = 0;
  for (double x : v) n += x * x;
  if (n > 0)
    for (double& x : v) x /= std::sqrt(n);
  return v;
}

TEST(Featurize, MatchesDenseOracle) {
  fx::Gen gen(11);
  for (int t = 0; t < 50; ++t) {
    const auto s = gen.sentence(1 + gen.rng().below(12));
    const std::size_t dim = t % 2 ? 4096 : 97;
    const auto oracle = featurize_oracle(s, dim);
    const auto got = to_dense(featurize(s, dim));
    ASSERT_EQ(got.size(), oracle.size());
    for (std::size_t i = 0; i < dim; ++i) ASSERT_NEAR(got[i], oracle[i], 1e-15) << s;
  }
}

TEST(Featurize, UnitNormSortedIndices) {
  fx::Gen gen(3);
  for (int t = 0; t < 100; ++t) {
    const auto v = featurize(gen.sentence(1 + gen.rng().below(10)));
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    for (std::size_t i = 1; i < v.nnz(); ++i) EXPECT_LT(v.index[i - 1], v.index[i]);
  }
}

TEST(Featurize, EmptyTextIsFlaggedZero) {
  const auto v = featurize("!!! ??");
  EXPECT_TRUE(v.empty);
  EXPECT_EQ(v.nnz(), 0u);
  EXPECT_DOUBLE_EQ(cosine_distance(v, featurize("hello")), 1.0);
}

TEST(Cosine, DistanceBoundsAndIdentity) {
  const auto a = featurize("red running shoes");
  EXPECT_NEAR(cosine_distance(a, a), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  fx::Gen gen(5);
  for (int t = 0; t < 50; ++t) {
    const double d = cosine_distance(featurize(gen.sentence(3)), featurize(gen.sentence(3)));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Normalize, ZeroVectorReturnsFalse) {
  std::vector<double> z(4, 0.0);
  EXPECT_FALSE(normalize(z));
  std::vector<double> v{3.0, 4.0};
  EXPECT_TRUE(normalize(v));
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(Rng, DeterministicAndSubstreamsDiffer) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  auto s1 = Rng::substream({7}, "x", 0);
  auto s2 = Rng::substream({7}, "x", 1);
  auto s3 = Rng::substream({7}, "y", 0);
  const auto v1 = s1.next(), v2 = s2.next(), v3 = s3.next();
  EXPECT_NE(v1, v2);
  EXPECT_NE(v1, v3);
}

TEST(Rng, RangesAndRoughUniformity) {
  Rng r(99);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 40000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = r.below(4);
    ASSERT_LT(k, 4u);
    ++counts[k];
  }
  for (const auto& [k, c] : counts) EXPECT_NEAR(c / 40000.0, 0.25, 0.01);
}

TEST(Checksum, SensitiveToValueAndOrder) {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
  auto b = a;
  b[4] = std::nextafter(5.0, 6.0);
  auto c = a;
  std::swap(c[0], c[1]);
  const auto h = [](const std::vector<double>& v) { return Checksum().add(std::span<const double>(v)).value(); };
  EXPECT_EQ(h(a), h(a));
  EXPECT_NE(h(a), h(b));
  EXPECT_NE(h(a), h(c));
  EXPECT_NE(h({}), h({0.0}));
}

TEST(FeatureRegistry, RejectsDuplicatesAndBadSpecs) {
  auto r = fx::small_registry();
  EXPECT_EQ(r.size(), 5u);
  EXPECT_EQ(r.index_of("gift"), 2u);
  EXPECT_THROW(r.add(fx::binary("gift", {})), std::invalid_argument);
  auto bad = fx::categorical("one", {"Only"}, {});
  EXPECT_THROW(validate(bad), std::invalid_argument);
  EXPECT_THROW((void)r.index_of("nope"), std::out_of_range);
}

TEST(EventLog, IdsAreContiguous) {
  EventLog log;
  log.emit("s1", EventKind::message, 10, Json{{"text", "a"}});
  log.emit("s2", EventKind::message, 11, Json{{"text", "b"}});
  EXPECT_EQ(log.last_id(), 2u);
  SessionEvent bad;
  bad.event_id = 5;
  EXPECT_THROW(log.append(bad), std::invalid_argument);
}

TEST(EventLog, JsonlRoundTripIsByteStable) {
  EventLog log;
  log.emit("s1", EventKind::message, 10, Json{{"text", "x\"y"}, {"n", 1}});
  log.emit("s1", EventKind::click, 12, Json{{"impression_id", "imp-1"}});
  const auto text = log.to_jsonl();
  const auto back = EventLog::from_jsonl(text);
  EXPECT_EQ(back.to_jsonl(), text);
  EXPECT_EQ(back.events()[1].kind, EventKind::click);
}

TEST(EventLog, SessionPage) {
  EventLog log;
  for (int i = 0; i < 6; ++i) log.emit(i % 2 ? "b" : "a", EventKind::message, i, Json::object());
  const auto page = log.session_page("a", 1, 10);
  ASSERT_EQ(page.size(), 2u);
  EXPECT_EQ(page[0].event_id, 3u);
  EXPECT_EQ(page[1].event_id, 5u);
  EXPECT_EQ(log.session_page("a", 0, 1).size(), 1u);
}

TEST(EventLog, SinkMirrorsAppends) {
  const auto dir = std::filesystem::temp_directory_path() / "echo_sink_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  EventLog log;
  log.attach_sink(dir / "e.jsonl");
  log.emit("s", EventKind::message, 1, Json{{"t", 1}});
  log.emit("s", EventKind::message, 2, Json{{"t", 2}});
  EXPECT_EQ(EventLog::read(dir / "e.jsonl").to_jsonl(), log.to_jsonl());
  std::filesystem::remove_all(dir);
}

TEST(EventKind, StringRoundTrip) {
  for (auto k : {EventKind::message, EventKind::taskability_decision, EventKind::survey_shown,
                 EventKind::author_response, EventKind::impression, EventKind::click, EventKind::model_update,
                 EventKind::recommendation})
    EXPECT_EQ(event_kind_from_string(to_string(k)), k);
  EXPECT_THROW(event_kind_from_string("bogus"), std::invalid_argument);
}

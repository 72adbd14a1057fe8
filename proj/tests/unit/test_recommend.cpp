#include <gtest/gtest.h>

#include <cmath>

#include "echo/recommend.hpp"
#include "echo/sim.hpp"
#include "fixtures.hpp"
#include "impression_cases.hpp"

using namespace echo;
using namespace echo::recommend;

namespace {

const Product& product(const Catalog& c, const std::string& id) { return *c.find(id); }

/// Random raw displays over a few sessions, products and texts.
std::vector<Impression> random_displays(std::uint64_t seed, std::size_t n) {
  core::Rng rng(seed);
  std::vector<Impression> out;
  std::int64_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Impression d;
    d.impression_id = "d" + std::to_string(i);
    d.session_id = "s" + std::to_string(rng.below(3));
    d.user_id = "u";
    d.product_id = "p" + std::to_string(1 + rng.below(3));
    d.vertical = "v";
    d.content_hash = rng.below(5);
    d.source = rng.bernoulli(0.5) ? Source::echo : Source::baseline;
    t += static_cast<std::int64_t>(rng.below(20'000));
    d.shown_at = t;
    d.last_attempt_at = t;
    for (std::size_t k = rng.below(3); k > 0; --k) d.clicks.push_back(t + 1);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST(Ctr, PaperFixture) {
  EXPECT_EQ(format_ctr(ctr(24, 1711)), "0.0140");
  EXPECT_EQ(format_ctr(ctr(789, 10378)), "0.0760");
  EXPECT_FALSE(ctr(3, 0).has_value());
  EXPECT_EQ(format_ctr(std::nullopt), "");
}

TEST(Ctr, MonotoneInClicksAndImpressions) {
  core::Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const std::size_t imps = 1 + rng.below(1000);
    const std::size_t clicks = rng.below(1000);
    EXPECT_GE(*ctr(clicks + 1, imps), *ctr(clicks, imps));
    EXPECT_LE(*ctr(clicks, imps + 1), *ctr(clicks, imps));
  }
}

TEST(Ledger, MultiClickReloadAndMerge) {
  const auto cat = fx::small_catalog();
  Ledger l(10'000);
  const auto a = l.record_impression("s1", "u1", Source::echo, product(cat, "p1"), "ad one", 0);
  EXPECT_TRUE(a.created);
  EXPECT_EQ(l.record_click(a.impression_id, 1), 1u);
  EXPECT_EQ(l.record_click(a.impression_id, 2), 2u);
  EXPECT_EQ(l.record_click(a.impression_id, 3), 3u);

  // reload of the same content much later
  const auto b = l.record_impression("s1", "u1", Source::echo, product(cat, "p1"), "ad one", 3'600'000);
  EXPECT_TRUE(b.deduplicated);
  EXPECT_EQ(b.impression_id, a.impression_id);

  const auto c = l.record_impression("s1", "u1", Source::echo, product(cat, "p2"), "ad two", 4'000'000);
  const auto d = l.record_impression("s1", "u1", Source::echo, product(cat, "p3"), "ad three", 4'002'000);
  EXPECT_TRUE(c.created);
  EXPECT_TRUE(d.merged);
  EXPECT_EQ(d.impression_id, c.impression_id);

  // the other arm keeps its own merge chain
  const auto e = l.record_impression("s1", "u1", Source::baseline, product(cat, "p3"), "ad three b", 4'002'500);
  EXPECT_TRUE(e.created);

  EXPECT_EQ(l.impressions().size(), 3u);
  EXPECT_EQ(l.total_clicks(), 3u);
  EXPECT_THROW(l.record_click("imp-99", 5), std::out_of_range);
}

TEST(Ledger, MergeWindowBoundaryIsExclusive) {
  const auto cat = fx::small_catalog();
  Ledger l(10'000);
  l.record_impression("s1", "u1", Source::echo, product(cat, "p1"), "x", 0);
  EXPECT_TRUE(l.record_impression("s1", "u1", Source::echo, product(cat, "p2"), "y", 10'000).created);
  EXPECT_TRUE(l.record_impression("s1", "u1", Source::echo, product(cat, "p3"), "z", 19'999).merged);
}

TEST(MergePass, IdempotentAndConservesClicks) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto raw = random_displays(seed, 40);
    std::size_t raw_clicks = 0;
    for (const auto& d : raw) raw_clicks += d.clicks.size();
    const auto once = merge_pass(raw, 10'000);
    const auto twice = merge_pass(once, 10'000);
    ASSERT_EQ(once, twice) << seed;
    std::size_t merged_clicks = 0;
    for (const auto& i : once) merged_clicks += i.clicks.size();
    EXPECT_EQ(merged_clicks, raw_clicks) << seed;
    EXPECT_LE(once.size(), raw.size());
  }
}

TEST(MergePass, MatchesLedgerOnline) {
  const auto cat = fx::small_catalog();
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto raw = random_displays(seed, 30);
    Ledger l(10'000);
    for (auto& d : raw) {
      d.clicks.clear();
      const auto& p = product(cat, d.product_id);
      const auto text = "t" + std::to_string(d.content_hash);
      const auto r = l.record_impression(d.session_id, d.user_id, d.source, p, text, d.shown_at);
      // merge_pass keys content on the hash the ledger computes
      d.content_hash = core::fnv1a(text, core::fnv1a(p.product_id + "\n"));
      d.vertical = p.vertical;
      if (r.created) d.impression_id = r.impression_id;
    }
    const auto offline = merge_pass(raw, 10'000);
    ASSERT_EQ(offline.size(), l.impressions().size()) << seed;
    for (std::size_t i = 0; i < offline.size(); ++i)
      EXPECT_EQ(offline[i].impression_id, l.impressions()[i].impression_id);
  }
}

TEST(CtrReport, GroupsSumToTotals) {
  const auto imps = merge_pass(random_displays(5, 300), 10'000);
  const auto rep = ctr_report(imps);
  for (const auto* src : {"echo", "baseline"}) {
    const auto* total = rep.find(std::string("source=") + src);
    ASSERT_NE(total, nullptr);
    for (const auto* prefix : {"|day=", "|weekday=", "|vertical="}) {
      std::size_t i = 0, c = 0;
      for (const auto& r : rep.rows) {
        if (r.group.rfind(std::string("source=") + src + prefix, 0) == 0) {
          i += r.impressions;
          c += r.clicks;
        }
      }
      EXPECT_EQ(i, total->impressions) << src << prefix;
      EXPECT_EQ(c, total->clicks) << src << prefix;
    }
  }
  EXPECT_EQ(rep.to_csv().substr(0, 27), "group,impressions,clicks,ct");
}

TEST(CtrReport, WeekdayNames) {
  EXPECT_EQ(weekday_name(0), "Thu");
  EXPECT_EQ(weekday_name(86'400'000LL * 4), "Mon");
  EXPECT_EQ(day_index(-1), -1);
}

TEST(Recommend, ClosestProductAboveThreshold) {
  const auto reg = fx::small_registry();
  const auto cat = fx::small_catalog();
  std::vector<SelectedValue> sel{{&reg.at("color"), core::FeatureValue::categorical(1)}};
  RecommendConfig cfg;
  cfg.display_threshold = 0.0;
  const auto d = recommend::recommend(sel, cat, cfg, "a shopping question");
  ASSERT_TRUE(d.show);
  EXPECT_EQ(d.rendered_text.rfind("Recommended: ", 0), 0u);
  cfg.display_threshold = 1.01;
  EXPECT_FALSE(recommend::recommend(sel, cat, cfg).show);
  EXPECT_TRUE(recommend::recommend(sel, Catalog{}, cfg).empty_catalog);
}

TEST(Recommend, KeywordBaseline) {
  const auto cat = fx::small_catalog();
  const auto d = baseline_recommend("a winter scarf for the rain", cat);
  ASSERT_TRUE(d.show);
  EXPECT_EQ(d.product->product_id, "p1");  // two keywords beat one
  EXPECT_FALSE(baseline_recommend("nothing matching here", cat).show);
}

TEST(Catalog, JsonlRoundTrip) {
  const auto cat = fx::small_catalog();
  const auto again = Catalog::from_jsonl(cat.to_jsonl());
  EXPECT_EQ(again.to_jsonl(), cat.to_jsonl());
  EXPECT_THROW(Catalog::from_jsonl("{\"product_id\":\"a\"}\n{\"product_id\":\"a\"}"), std::exception);
}

class ImpressionGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(ImpressionGolden, MatchesExpectationsAndGoldenLog) {
  const auto path = std::filesystem::path(ECHO_TEST_DATA_DIR) / "impressions" / (GetParam() + ".json");
  EXPECT_EQ(fx::check_impression_case(path), "");
}

INSTANTIATE_TEST_SUITE_P(Cases, ImpressionGolden,
                         ::testing::Values("multi_click", "reload_dedup", "merge_window", "outside_window",
                                           "merge_chain", "merge_window_config", "sessions_independent",
                                           "no_match"));

namespace {

std::vector<double> dense(const core::SparseVector& v, std::size_t dim) {
  std::vector<double> d(dim, 0.0);
  for (std::size_t k = 0; k < v.nnz(); ++k) d[v.index[k]] += v.value[k];
  return d;
}

double dense_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return aa == 0.0 || bb == 0.0 ? 0.0 : ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Recommend, ArgmaxMatchesExhaustiveScan) {
  const auto world = sim::default_world({17, 100, 1024});
  RecommendConfig cfg;
  cfg.dim = 1024;
  cfg.display_threshold = -1.0;
  core::Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    std::vector<SelectedValue> sel;
    for (std::size_t i = 0; i < world.registry.size() && sel.size() < 4; ++i) {
      const auto& spec = world.registry.at(i);
      if (spec.kind == core::FeatureKind::free_text || !rng.bernoulli(0.5)) continue;
      sel.push_back({&spec, core::FeatureValue::categorical(rng.below(spec.label_count()))});
    }
    if (sel.empty()) continue;
    const auto pref = dense(preference_vector(sel, 1024), 1024);
    std::size_t best = 0;
    double best_s = -2.0;
    for (std::size_t p = 0; p < world.catalog.size(); ++p) {
      const double s = dense_cosine(pref, dense(world.catalog.products()[p].attribute_embedding, 1024));
      if (s > best_s + 1e-12) {
        best_s = s;
        best = p;
      }
    }
    const auto d = recommend::recommend(sel, world.catalog, cfg);
    ASSERT_NE(d.product, nullptr);
    EXPECT_EQ(d.product->product_id, world.catalog.products()[best].product_id) << t;
    EXPECT_NEAR(d.similarity, best_s, 1e-9);
  }
}

TEST(Recommend, KeywordOverlapMatchesBruteForce) {
  const auto world = sim::default_world({18, 100, 1024});
  core::Rng rng(18);
  std::vector<std::string> vocab;
  for (const auto& p : world.catalog.products())
    for (const auto& k : p.keywords) vocab.push_back(k);
  vocab.push_back("weather");
  vocab.push_back("tomorrow");
  for (int t = 0; t < 100; ++t) {
    std::string msg = "I want";
    for (std::size_t w = 0, n = 1 + rng.below(5); w < n; ++w) msg += " " + vocab[rng.below(vocab.size())];
    const auto toks = core::tokenize(msg);
    std::size_t best = 0, best_n = 0;
    for (std::size_t p = 0; p < world.catalog.size(); ++p) {
      std::size_t n = 0;
      for (const auto& kw : world.catalog.products()[p].keywords) {
        bool all = true;
        for (const auto& kt : core::tokenize(kw)) all = all && std::find(toks.begin(), toks.end(), kt) != toks.end();
        n += all ? 1 : 0;
      }
      EXPECT_EQ(keyword_overlap(msg, world.catalog.products()[p]), n);
      if (n > best_n) {
        best_n = n;
        best = p;
      }
    }
    const auto d = baseline_recommend(msg, world.catalog);
    EXPECT_EQ(d.show, best_n >= 1);
    if (d.show) EXPECT_EQ(d.product->product_id, world.catalog.products()[best].product_id);
  }
}

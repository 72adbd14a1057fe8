#include <gtest/gtest.h>

#include <cmath>

#include "echo/sim.hpp"

using namespace echo;
using namespace echo::sim;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(World, Shape) {
  const auto w = default_world({42, 60, 1024});
  EXPECT_EQ(w.registry.size(), 16u);
  EXPECT_EQ(w.catalog.size(), 60u);
  std::size_t attrs = 0;
  for (const auto& f : w.features) attrs += f.product_attribute ? 1 : 0;
  EXPECT_EQ(attrs, 3u);
  EXPECT_EQ(default_world({42, 60, 1024}).catalog.to_jsonl(), w.catalog.to_jsonl());
}

TEST(ClickModel, NoAffinityNoNoveltyIsBaseLogit) {
  const auto w = default_world({1, 20, 1024});
  core::Rng rng(1);
  auto a = make_author(w, "a", rng);
  a.click_model = {-2.0, 0.0, 0.0, 3.0};
  for (const auto& p : w.catalog.products()) EXPECT_DOUBLE_EQ(click_probability(a, p, 0), logistic(-2.0));
}

TEST(ClickModel, NoveltyFadesWithImpressions) {
  const auto w = default_world({1, 20, 1024});
  core::Rng rng(2);
  auto a = make_author(w, "a", rng);
  const auto& p = w.catalog.products().front();
  const double far = click_probability(a, p, 100000);
  a.click_model.novelty_amplitude = 0.0;
  EXPECT_NEAR(far, click_probability(a, p, 0), 1e-12);
}

TEST(ClickModel, MonteCarloMatchesClosedForm) {
  const auto w = default_world({3, 50, 1024});
  core::Rng rng(3);
  auto a = make_author(w, "a", rng);
  a.click_model = {-1.0, 2.0, 0.0, 3.0};
  double analytic = 0.0;
  std::size_t clicks = 0;
  const std::size_t n = 10'000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = w.catalog.products()[i % w.catalog.size()];
    analytic += click_probability(a, p, 0);
    clicks += click_decision(a, recommend::Source::echo, p, rng) ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(clicks) / n, analytic / n, 0.01);
}

TEST(Messages, MentionedFeaturesAndDeterminism) {
  const auto w = default_world({4, 30, 1024});
  core::Rng r1(9), r2(9);
  const auto a = make_author(w, "a", r1);
  make_author(w, "a", r2);
  MessageOptions opts;
  opts.greeting_prob = 0.0;
  opts.must_include = {0};
  for (int i = 0; i < 50; ++i) {
    const auto m1 = gen_message(w, a, r1, opts);
    const auto m2 = gen_message(w, a, r2, opts);
    EXPECT_EQ(m1.text, m2.text);
    EXPECT_GE(m1.mentioned.size(), 1u);
    EXPECT_NE(std::find(m1.mentioned.begin(), m1.mentioned.end(), 0u), m1.mentioned.end());
  }
}

TEST(Answers, NoiselessAuthorAnswersTruth) {
  const auto w = default_world({5, 30, 1024});
  core::Rng rng(5);
  auto a = make_author(w, "a", rng);
  a.label_noise = 0.0;
  a.abstain_prob = 0.0;
  tasks::LabelTask t;
  t.task_id = "t";
  t.feature_id = w.registry.at(0).feature_id;
  const auto labels = w.registry.at(0).label_count();
  for (std::size_t l = 0; l < labels && t.options.size() < 4; ++l) {
    t.options.push_back(w.registry.at(0).label_space[l]);
    t.option_labels.push_back(l);
  }
  const auto truth = a.latent_values[0].class_index();
  if (truth >= t.options.size()) {
    t.options.back() = w.registry.at(0).label_space[truth];
    t.option_labels.back() = truth;
  }
  for (int i = 0; i < 20; ++i) {
    const auto r = answer_task(w, a, t, rng, 0);
    const auto idx = std::get<std::size_t>(r.answer);
    EXPECT_EQ(*t.option_labels[idx], truth);
    EXPECT_GE(r.read_latency_s, 0.0);
  }
}

TEST(Scenario, RenderParseRoundTrip) {
  SimScenario sc;
  sc.seed = 11;
  sc.sessions = 123;
  sc.warmup_sessions = 40;
  sc.arms = Arms::echo;
  sc.weekday_factors = {0.9, 0.8, 1, 1, 1.1, 0.7, 1.2};
  sc.author.click_model.novelty_decay = 5.5;
  sc.message.cue_noise = 0.25;
  sc.engine.recommend.merge_window_ms = 3000;
  const auto text = render_scenario(sc);
  const auto back = scenario_from_config(config::KeyValueFile::parse(text));
  EXPECT_EQ(render_scenario(back), text);
  EXPECT_EQ(back.sessions, 123u);
  EXPECT_EQ(back.arms, Arms::echo);
}

TEST(Scenario, InvalidValuesNameTheKey) {
  auto field = [](std::string_view text) -> std::string {
    try {
      validate(scenario_from_config(config::KeyValueFile::parse(text)));
    } catch (const config::ConfigError& e) {
      return e.field();
    }
    return "<none>";
  };
  EXPECT_EQ(field("[scenario]\narms = neither\n"), "scenario.arms");
  EXPECT_EQ(field("[scenario]\nweekday_factors = [1, 2]\n"), "scenario.weekday_factors");
  EXPECT_EQ(field("[author]\nlabel_noise = 2\n"), "author.label_noise");
  EXPECT_EQ(field("[engine]\necho_arm = true\n"), "engine.echo_arm");
  EXPECT_EQ(field("[scenario]\nnope = 1\n"), "scenario.nope");
  EXPECT_EQ(field("[scenario]\nsessions = 10\nwarmup_sessions = 5\n"), "<none>");
}

TEST(Scenario, NoAuthorsGivesEmptyReports) {
  SimScenario sc;
  sc.authors = 0;
  sc.sessions = 20;
  sc.warmup_sessions = 5;
  sc.products = 10;
  validate(sc);
  const auto run = run_experiment(sc);
  EXPECT_TRUE(run.log.empty());
  EXPECT_TRUE(run.ctr.rows.empty());
  EXPECT_FALSE(run.source_ctr(recommend::Source::echo).has_value());
  EXPECT_FALSE(run.completion_rate.has_value());
}

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "echo/features.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace echo;
using namespace echo::features;

namespace {

ModelConfig small_cfg() {
  ModelConfig c;
  c.input_dim = 256;
  c.embed_dim = 16;
  return c;
}

}  // namespace

TEST(FeatureModel, FreshCategoricalIsUniform) {
  const auto spec = fx::categorical("c", {"A", "B", "C", "D"}, {});
  const auto p = make_params(spec, small_cfg());
  const auto probs = class_probabilities(p, core::featurize("anything at all", 256));
  for (double q : probs) EXPECT_NEAR(q, 0.25, 1e-12);
  const auto v = predict(p, core::featurize("anything", 256));
  EXPECT_EQ(v.class_index(), 0u);  // ties go to the lowest option
  EXPECT_NEAR(v.confidence, 0.25, 1e-12);
}

TEST(FeatureModel, SoftmaxMatchesHandComputation) {
  const auto spec = fx::categorical("c", {"A", "B", "C"}, {});
  auto p = make_params(spec, small_cfg());
  const auto x = core::featurize("blue", 256);
  fx::Gen gen(1);
  fx::randomize(p.weights, gen.rng(), 1.0);
  fx::randomize(p.bias, gen.rng(), 1.0);
  std::vector<double> z(3);
  for (std::size_t l = 0; l < 3; ++l) {
    z[l] = p.bias[l];
    for (std::size_t k = 0; k < x.nnz(); ++k) z[l] += p.weights[l * 256 + x.index[k]] * x.value[k];
  }
  double s = 0;
  for (double v : z) s += std::exp(v);
  const auto probs = class_probabilities(p, x);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(probs[l], std::exp(z[l]) / s, 1e-12);
  EXPECT_NEAR(cross_entropy(p, x, 1), -std::log(std::exp(z[1]) / s), 1e-12);
}

TEST(FeatureModel, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EXPECT_LE(fx::check_cross_entropy(seed), 1e-5) << seed;
    EXPECT_LE(fx::check_cosine_loss(seed), 1e-5) << seed;
  }
}

TEST(FeatureModel, AuthorUpdateReducesLoss) {
  const auto spec = fx::categorical("c", {"A", "B", "C", "D"}, {});
  auto p = make_params(spec, small_cfg());
  const auto x = core::featurize("we want the green one", 256);
  const double before = cross_entropy(p, x, 2);
  EXPECT_TRUE(update_from_author(p, x, core::FeatureValue::categorical(2), small_cfg()));
  EXPECT_LT(cross_entropy(p, x, 2), before);
  EXPECT_EQ(p.update_count, 1u);
}

TEST(FeatureModel, AbstainAndEmptyInputLeaveParamsUntouched) {
  const auto spec = fx::categorical("c", {"A", "B"}, {});
  auto p = make_params(spec, small_cfg());
  const auto before = p.checksum();
  auto abstain = core::FeatureValue::categorical(1);
  abstain.abstain = true;
  EXPECT_FALSE(update_from_author(p, core::featurize("text here", 256), abstain, small_cfg()));
  EXPECT_FALSE(update_from_author(p, core::featurize("...", 256), core::FeatureValue::categorical(1), small_cfg()));
  EXPECT_EQ(p.checksum(), before);
  EXPECT_TRUE(predict(p, core::featurize("", 256)).abstain);
}

TEST(FeatureModel, FreeTextLearnsAndNamesFromBank) {
  const auto spec = fx::free_text("item", {});
  const auto cfg = small_cfg();
  auto p = make_params(spec, cfg);
  const auto x1 = core::featurize("looking for a warm coat", 256);
  const auto x2 = core::featurize("need new running sneakers", 256);
  const auto coat = author_value(spec, "coat", cfg);
  const auto shoes = author_value(spec, "sneakers", cfg);
  const double before = cosine_loss(p, x1, std::get<core::FreeText>(coat.value).embedding);
  for (int i = 0; i < 30; ++i) {
    update_from_author(p, x1, coat, cfg);
    update_from_author(p, x2, shoes, cfg);
  }
  EXPECT_LT(cosine_loss(p, x1, std::get<core::FreeText>(coat.value).embedding), before);
  EXPECT_EQ(p.label_bank.size(), 2u);
  EXPECT_EQ(std::get<core::FreeText>(predict(p, x1).value).text, "coat");
  EXPECT_EQ(std::get<core::FreeText>(predict(p, x2).value).text, "sneakers");
}

TEST(FeatureModel, LabelBankCapacity) {
  const auto spec = fx::free_text("item", {});
  auto cfg = small_cfg();
  cfg.label_bank_capacity = 3;
  auto p = make_params(spec, cfg);
  fx::Gen gen(4);
  for (int i = 0; i < 10; ++i)
    update_from_author(p, core::featurize(gen.sentence(3), 256), author_value(spec, gen.word(), cfg), cfg);
  EXPECT_EQ(p.label_bank.size(), 3u);
}

TEST(FeatureModel, TypedAnswerMapsToClosestOption) {
  const auto spec = fx::categorical("c", {"Dark Blue", "Bright Red", "Green"}, {});
  EXPECT_EQ(author_value(spec, "red", small_cfg()).class_index(), 1u);
  EXPECT_EQ(author_value(fx::binary("b", {}), "no", small_cfg()).class_index(), 1u);
}

TEST(Ensemble, UpdateTouchesOnlyTheQueriedModel) {
  const auto reg = fx::small_registry();
  Ensemble m(reg, small_cfg());
  fx::Gen gen(9);
  for (int t = 0; t < 40; ++t) {
    const auto i = gen.rng().below(reg.size());
    const auto text = gen.sentence(4);
    const auto x = core::featurize(text, 256);
    const auto before = m.checksums();
    core::FeatureValue v = reg.at(i).kind == core::FeatureKind::free_text
                               ? author_value(reg.at(i), gen.word(), small_cfg())
                               : core::FeatureValue::categorical(gen.rng().below(reg.at(i).label_count()));
    if (reg.at(i).kind == core::FeatureKind::binary) v = core::FeatureValue::binary(gen.rng().bernoulli(0.5));
    ASSERT_TRUE(m.update(reg, i, text, x, v));
    const auto after = m.checksums();
    for (std::size_t j = 0; j < reg.size(); ++j) {
      if (j == i) {
        EXPECT_NE(after[j], before[j]);
      } else {
        EXPECT_EQ(after[j], before[j]);
      }
    }
  }
}

TEST(Ensemble, PredictPoolKeepsRegistryOrderAndRejectsUnknownIds) {
  const auto reg = fx::small_registry();
  Ensemble m(reg, small_cfg());
  const std::vector<core::FeatureId> ids{"gift", "color"};
  const auto pool = predict_pool(reg, m, "a shopping trip", ids);
  ASSERT_EQ(pool.size(), 2u);
  EXPECT_EQ(pool.entries[0].feature_id, "color");
  EXPECT_EQ(pool.entries[1].feature_id, "gift");
  const std::vector<core::FeatureId> bad{"nope"};
  EXPECT_THROW(predict_pool(reg, m, "x", bad), std::out_of_range);
}

namespace {

struct FixedAdapter : FeatureModelAdapter {
  int updates = 0;
  core::FeatureValue predict(const core::FeatureSpec&, std::string_view) override {
    return core::FeatureValue::categorical(3, 0.9);
  }
  void update(const core::FeatureSpec&, std::string_view, const core::FeatureValue&) override { ++updates; }
};

}  // namespace

TEST(Ensemble, AdapterSlotOverridesBuiltInModel) {
  const auto reg = fx::small_registry();
  Ensemble m(reg, small_cfg());
  auto adapter = std::make_shared<FixedAdapter>();
  m.set_adapter(0, adapter);
  const auto x = core::featurize("hello there friend", 256);
  EXPECT_EQ(m.predict(reg, 0, "hello there friend", x).class_index(), 3u);
  m.update(reg, 0, "hello there friend", x, core::FeatureValue::categorical(1));
  EXPECT_EQ(adapter->updates, 1);
}

TEST(Ensemble, PoolEntriesEqualIndividualPredictions) {
  const auto reg = fx::small_registry();
  Ensemble m(reg, small_cfg());
  fx::Gen gen(12);
  for (int t = 0; t < 20; ++t) {
    const auto text = gen.sentence(5);
    const auto x = core::featurize(text, 256);
    for (std::size_t i = 0; i < reg.size(); ++i) {
      if (reg.at(i).kind == core::FeatureKind::free_text) continue;
      m.update(reg, i, text, x, core::FeatureValue::categorical(gen.rng().below(reg.at(i).label_count())));
    }
    std::vector<core::FeatureId> ids;
    for (const auto& s : reg.specs()) ids.push_back(s.feature_id);
    const auto pool = predict_pool(reg, m, text, ids);
    ASSERT_EQ(pool.size(), reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const auto& a = pool.entries[i].value;
      const auto b = m.predict(reg, i, text, x);
      EXPECT_EQ(a.abstain, b.abstain);
      EXPECT_DOUBLE_EQ(a.confidence, b.confidence);
      if (reg.at(i).kind == core::FeatureKind::free_text) {
        EXPECT_EQ(std::get<core::FreeText>(a.value).text, std::get<core::FreeText>(b.value).text);
      } else {
        EXPECT_EQ(a.class_index(), b.class_index());
      }
    }
  }
}

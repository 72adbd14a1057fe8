#pragma once

// Shared fixtures and seeded generators for the unit and acceptance tests.

#include <cstdint>
#include <string>
#include <vector>

#include "echo/core/rng.hpp"
#include "echo/core/types.hpp"
#include "echo/recommend.hpp"

namespace echo::fx {

inline core::FeatureSpec categorical(std::string id, std::vector<std::string> labels,
                                     std::vector<std::string> keywords) {
  core::FeatureSpec s;
  s.feature_id = std::move(id);
  s.name = s.feature_id;
  s.kind = core::FeatureKind::categorical;
  s.label_space = std::move(labels);
  s.relevance_keywords = std::move(keywords);
  s.question_template = "What fits {tokens}?";
  return s;
}

inline core::FeatureSpec binary(std::string id, std::vector<std::string> keywords) {
  core::FeatureSpec s;
  s.feature_id = std::move(id);
  s.name = s.feature_id;
  s.kind = core::FeatureKind::binary;
  s.label_space = {"Yes", "No"};
  s.relevance_keywords = std::move(keywords);
  s.question_template = "Is this true for {tokens}?";
  return s;
}

inline core::FeatureSpec free_text(std::string id, std::vector<std::string> keywords) {
  core::FeatureSpec s;
  s.feature_id = std::move(id);
  s.name = s.feature_id;
  s.kind = core::FeatureKind::free_text;
  s.relevance_keywords = std::move(keywords);
  s.question_template = "Which item for {tokens}?";
  return s;
}

/// Five features, four with a shared "shopping" keyword so one message can
/// make all of them relevant.
inline core::FeatureRegistry small_registry() {
  core::FeatureRegistry r;
  r.add(categorical("color", {"Red", "Green", "Blue", "Black"}, {"shopping", "color"}));
  r.add(categorical("size", {"Small", "Medium", "Large"}, {"shopping", "size"}));
  r.add(binary("gift", {"shopping", "gift"}));
  r.add(free_text("item", {"shopping", "item"}));
  r.add(categorical("mood", {"Happy", "Sad", "Calm", "Angry"}, {"mood"}));
  return r;
}

inline recommend::Catalog small_catalog() {
  std::vector<recommend::Product> ps;
  auto add = [&](std::string id, std::string vertical, std::string title, std::string attrs,
                 std::vector<std::string> kw) {
    recommend::Product p;
    p.product_id = std::move(id);
    p.vertical = std::move(vertical);
    p.title = std::move(title);
    p.attribute_text = std::move(attrs);
    p.keywords = std::move(kw);
    ps.push_back(std::move(p));
  };
  add("p1", "Apparel", "Red Scarf", "red small yes scarf", {"scarf", "winter"});
  add("p2", "Apparel", "Blue Jacket", "blue large no jacket", {"jacket", "rain"});
  add("p3", "Home", "Green Lamp", "green medium yes lamp", {"lamp", "light"});
  return recommend::Catalog(std::move(ps));
}

/// Hand-rolled seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  core::Rng& rng() { return rng_; }

  std::vector<std::size_t> labels(std::size_t n, std::size_t k) {
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = rng_.below(k);
    return v;
  }
  std::vector<double> distribution(std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) s += x = rng_.uniform() + (rng_.bernoulli(0.2) ? 0.0 : 1e-3);
    for (auto& x : v) x /= s;
    return v;
  }
  std::string word(std::size_t min_len = 3, std::size_t max_len = 8) {
    const std::size_t n = min_len + rng_.below(max_len - min_len + 1);
    std::string w;
    for (std::size_t i = 0; i < n; ++i) w += static_cast<char>('a' + rng_.below(26));
    return w;
  }
  std::string sentence(std::size_t words) {
    std::string s;
    for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + word();
    return s;
  }

 private:
  core::Rng rng_;
};

}  // namespace echo::fx

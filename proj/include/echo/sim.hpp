#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echo/config.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/types.hpp"
#include "echo/engine.hpp"
#include "echo/recommend.hpp"
#include "echo/tasks.hpp"

namespace echo::sim {

/// Generative description of one feature: how authors talk about each value.
struct SimFeature {
  core::FeatureSpec spec;
  /// Cue words per label (categorical/binary), or the vocabulary of one-word
  /// answers (free text; the cue is the answer itself).
  std::vector<std::vector<std::string>> cues;
  std::vector<std::string> free_text_values;
  /// Free-text answers drawn from the group of the author's value of
  /// feature `parent` (which must come earlier in the registry).
  std::size_t parent = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::string>> values_by_parent_label;
  /// Fragment templates with {kw} and {cue} slots.
  std::vector<std::string> templates;
  /// Part of the product attributes that drive clicks.
  bool product_attribute = false;
};

struct World {
  std::vector<SimFeature> features;
  core::FeatureRegistry registry;
  recommend::Catalog catalog;

  std::size_t index_of(const core::FeatureId& id) const { return registry.index_of(id); }
};

struct WorldConfig {
  std::uint64_t seed = 42;
  std::size_t products = 100;
  std::size_t dim = core::kDefaultFeatureDim;
};

/// Sixteen-feature shopping-assistant world: three product attributes
/// (category, style, budget) plus thirteen intent/context features.
World default_world(const WorldConfig& cfg = {});

struct ClickModel {
  double base_logit = -7.0;
  double affinity_weight = 7.0;
  double novelty_amplitude = 1.0;
  /// Decay constant in impressions.
  double novelty_decay = 3.0;
};

struct SimAuthor {
  std::string author_id;
  /// Ground truth per registry feature.
  std::vector<core::FeatureValue> latent_values;
  double label_noise = 0.1;
  double abstain_prob = 0.02;
  double completion_prob = 0.843;
  ClickModel click_model;
  core::SparseVector preference;  // unit, over the product attributes
  std::map<recommend::Source, std::size_t> impressions_seen;
};

struct AuthorDefaults {
  double label_noise = 0.1;
  double abstain_prob = 0.02;
  double completion_prob = 0.843;
  ClickModel click_model;
};

SimAuthor make_author(const World& world, std::string author_id, core::Rng& rng,
                      const AuthorDefaults& defaults = {});

struct MessageOptions {
  std::size_t min_features = 4;
  std::size_t max_features = 6;
  /// Chance each product attribute is mentioned.
  double product_mention_prob = 0.6;
  /// Chance a fragment carries the cue of a wrong value.
  double cue_noise = 0.1;
  double greeting_prob = 0.03;
  /// Force these features into the message.
  std::vector<std::size_t> must_include;
};

/// A generated message plus which features it mentions.
struct GeneratedMessage {
  std::string text;
  std::vector<std::size_t> mentioned;
  bool greeting = false;
};

/// Throws std::invalid_argument when the world has no templates to draw from.
GeneratedMessage gen_message(const World& world, const SimAuthor& author, core::Rng& rng,
                             const MessageOptions& opts = {});

/// Abstains with abstain_prob; otherwise picks the true option with
/// probability 1 - label_noise and a uniformly chosen other option otherwise.
/// Free-text answers are the latent word, character-perturbed under noise.
tasks::AuthorResponse answer_task(const World& world, const SimAuthor& author,
                                  const tasks::LabelTask& task, core::Rng& rng,
                                  std::int64_t shown_at);

/// p = logistic(b + w * cos(preference, product) + nu * exp(-t / tau)), with t
/// the author's prior impressions from that source.
double click_probability(const SimAuthor& author, const recommend::Product& product,
                         std::size_t prior_impressions);
bool click_decision(SimAuthor& author, recommend::Source source, const recommend::Product& product,
                    core::Rng& rng);

enum class Arms { echo, baseline, both };

struct SimScenario {
  std::uint64_t seed = 42;
  std::size_t authors = 200;
  std::size_t sessions = 5000;
  std::size_t warmup_sessions = 1500;
  std::size_t products = 100;
  std::size_t min_messages = 3;
  std::size_t max_messages = 8;
  std::size_t days = 27;
  std::size_t checkpoint_every = 250;
  std::size_t heldout_per_feature = 100;
  double rapid_message_prob = 0.02;
  double repeat_click_prob = 0.1;
  Arms arms = Arms::both;
  /// Multiplicative p(click) factor per weekday (Sun..Sat); all 1 by default.
  std::vector<double> weekday_factors = std::vector<double>(7, 1.0);
  AuthorDefaults author;
  MessageOptions message;
  EngineConfig engine;
  bool audit = false;
};

struct CurvePoint {
  std::size_t session = 0;
  core::FeatureId feature_id;
  double value = 0.0;
};

struct RunArtifacts {
  core::EventLog log;
  recommend::CtrReport ctr;
  std::vector<CurvePoint> learning_curves;
  std::vector<CurvePoint> sigma;
  std::optional<double> completion_rate;
  AuditStats audit;
  std::uint64_t engine_checksum = 0;
  std::size_t surveys_shown = 0;
  std::size_t labels = 0;

  std::optional<double> source_ctr(recommend::Source s) const;
  std::string learning_curves_csv() const;
  std::string sigma_csv() const;
  /// Mean held-out accuracy over features at the first and last checkpoint.
  double initial_accuracy() const;
  double final_accuracy() const;
};

/// Warmup (labeling only), then the comparison window where both arms see
/// the same message stream.
RunArtifacts run_experiment(const SimScenario& scenario);
/// Same as above, also handing back the engine that produced the log.
RunArtifacts run_experiment(const SimScenario& scenario, std::optional<Engine>& engine_out);

/// Writes events.jsonl, ctr.csv, learning_curves.csv, sigma.csv plus the
/// registry/catalog/engine.conf needed to replay the log.
void write_run(const RunArtifacts& run, const SimScenario& scenario, const std::filesystem::path& dir);

/// Scenario file: the engine keys plus [scenario], [author], [click] and
/// [message] sections (see README). `seed` seeds both world and engine.
/// engine.echo_arm / engine.baseline_arm are rejected in favour of
/// scenario.arms. Throws config::ConfigError naming the offending key.
SimScenario scenario_from_config(const config::KeyValueFile& kv);
SimScenario load_scenario(const std::filesystem::path& path);
/// Field-level checks on a scenario (engine settings included).
void validate(const SimScenario& sc);
std::string render_scenario(const SimScenario& sc);

/// Held-out accuracy of every feature model on fresh messages that mention it.
std::vector<double> heldout_accuracy(const World& world, const features::Ensemble& models,
                                     const std::vector<SimAuthor>& authors,
                                     const std::vector<GeneratedMessage>& messages,
                                     const std::vector<std::size_t>& author_of,
                                     const std::vector<std::size_t>& feature_of);

}  // namespace echo::sim

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echo/core/event_log.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/types.hpp"
#include "echo/features.hpp"
#include "echo/filter.hpp"
#include "echo/recommend.hpp"
#include "echo/selector.hpp"
#include "echo/tasks.hpp"

namespace echo {

struct EngineConfig {
  features::ModelConfig model;
  selector::SelectorConfig selector;
  filter::FilterConfig filter;
  tasks::TaskConfig tasks;
  recommend::RecommendConfig recommend;
  std::uint64_t seed = 42;
  /// Run the learned recommender on recommendation turns.
  bool echo_arm = true;
  /// Also run the keyword-matching baseline on every recommendation turn.
  bool baseline_arm = false;
  /// Treat a skipped display as a no-click outcome for the selected set.
  bool skip_feedback = true;
};

struct ShownRecommendation {
  recommend::Source source = recommend::Source::echo;
  std::string product_id;
  std::string title;
  std::string rendered_text;
  std::string impression_id;
  bool new_impression = false;
};

struct MessageResult {
  filter::TaskabilityDecision decision;
  std::optional<tasks::Survey> survey;
  std::optional<ShownRecommendation> echo;
  std::optional<ShownRecommendation> baseline;
};

/// Counts from the per-update parameter audit (see Engine::enable_audit).
struct AuditStats {
  std::size_t feature_updates = 0;
  std::size_t uncertainty_updates = 0;
  std::size_t relevance_updates = 0;
  std::size_t isolation_violations = 0;      // another feature model changed
  std::size_t stop_gradient_violations = 0;  // a feature model changed on a relevance update
  std::size_t dual_loop_violations = 0;      // the other selector loop's state changed
  std::size_t non_finite = 0;

  std::size_t violations() const noexcept {
    return isolation_violations + stop_gradient_violations + dual_loop_violations + non_finite;
  }
};

/// Per-feature running agreement between predictions and author labels.
struct FeatureAccuracy {
  std::size_t labels = 0;
  double matches = 0.0;
};

/// The online loop: filter -> feature models -> selector -> surveys and
/// recommendations, with both training signals. Every state change is
/// appended to the event log before the call returns, and replaying the
/// input events of a log reproduces the state exactly.
class Engine {
 public:
  Engine(core::FeatureRegistry registry, recommend::Catalog catalog, EngineConfig cfg);

  MessageResult on_message(const core::Message& message, bool recommend = true);
  /// Throws std::out_of_range when the task does not belong to the session.
  tasks::ResponseOutcome on_response(const std::string& session_id, const tasks::AuthorResponse& response);
  /// Returns the impression's click count. Throws std::out_of_range for an
  /// unknown impression or one from another session.
  std::size_t on_click(const std::string& session_id, const std::string& impression_id,
                       std::int64_t at);

  const core::EventLog& log() const noexcept { return log_; }
  core::EventLog& mutable_log() noexcept { return log_; }
  const core::FeatureRegistry& registry() const noexcept { return registry_; }
  const recommend::Catalog& catalog() const noexcept { return catalog_; }
  const EngineConfig& config() const noexcept { return cfg_; }
  const features::Ensemble& models() const noexcept { return models_; }
  features::Ensemble& models() noexcept { return models_; }
  const selector::SelectorParams& selector() const noexcept { return selector_; }
  const filter::Filter& filter() const noexcept { return filter_; }
  filter::Filter& filter() noexcept { return filter_; }
  const recommend::Ledger& ledger() const noexcept { return ledger_; }
  const tasks::SurveyBook& surveys() const noexcept { return surveys_; }
  const std::vector<FeatureAccuracy>& feature_accuracy() const noexcept { return accuracy_; }

  /// Fingerprint of all learned state (feature models, selector, gates).
  std::uint64_t checksum() const;

  /// Checksums every parameter block around every update from now on.
  void enable_audit() { audit_ = true; }
  const AuditStats& audit() const noexcept { return audit_stats_; }

  /// Rebuilds an engine from the input events of `log`.
  static Engine replay(const core::EventLog& log, core::FeatureRegistry registry,
                       recommend::Catalog catalog, EngineConfig cfg);

 private:
  struct PendingReward {
    std::string session_id;
    std::vector<core::FeatureId> selected;
    std::vector<selector::MetaFeatures> meta;
    bool settled = false;
  };
  struct Snapshot {
    std::vector<std::uint64_t> models;
    std::uint64_t weights = 0;
    std::uint64_t counters = 0;
  };

  Snapshot snapshot() const;
  void apply_relevance(const std::string& session_id, std::int64_t at,
                       const std::vector<core::FeatureId>& selected,
                       const std::vector<selector::MetaFeatures>& meta, double reward,
                       const std::string& cause);
  void settle_session(const std::string& session_id, std::int64_t at);
  std::optional<ShownRecommendation> run_echo(const core::Message& message,
                                              const filter::TaskabilityDecision& decision,
                                              const core::SparseVector& x);
  std::optional<ShownRecommendation> run_baseline(const core::Message& message);
  std::optional<ShownRecommendation> show(const core::Message& message, recommend::Source source,
                                          const recommend::Decision& d, core::Json payload);

  core::FeatureRegistry registry_;
  recommend::Catalog catalog_;
  EngineConfig cfg_;
  features::Ensemble models_;
  selector::SelectorParams selector_;
  filter::Filter filter_;
  tasks::SurveyBook surveys_;
  recommend::Ledger ledger_;
  core::EventLog log_;
  std::map<std::string, core::Message> survey_messages_;
  std::map<std::string, PendingReward> pending_;
  std::vector<FeatureAccuracy> accuracy_;
  std::uint64_t survey_counter_ = 0;
  bool audit_ = false;
  AuditStats audit_stats_;
};

}  // namespace echo

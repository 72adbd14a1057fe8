#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echo/core/text.hpp"
#include "echo/core/types.hpp"

namespace echo::filter {

using core::FeatureId;

enum class RejectionReason { spam, greeting, too_short, rate_limited, too_few_features };

std::string_view to_string(RejectionReason r) noexcept;

struct FilterConfig {
  std::vector<std::string> greeting_lexicon{
      "hi",       "hello", "hey",     "hiya",  "yo",     "sup",   "howdy", "greetings",
      "thanks",   "thank", "you",     "thx",   "ty",     "ok",    "okay",  "k",
      "bye",      "goodbye", "cya",   "good",  "morning", "afternoon", "evening", "night",
      "there",    "all",   "everyone", "cool", "nice",   "lol",   "yes",   "no"};
  std::size_t min_tokens = 3;
  std::size_t duplicate_window = 10;
  double gate_threshold = 0.5;
  /// Relevant features needed for a survey; equals the questions per survey.
  std::size_t survey_question_count = 4;
  /// User messages required after a survey before the next one.
  std::size_t messages_between_surveys = 5;

  std::int64_t rapid_interval_ms = 3000;
  std::size_t rapid_ban_count = 10;
  /// Share of near-duplicate messages that marks reward-seeking behavior.
  double reward_seeking_ban_score = 0.6;
  std::size_t reward_seeking_min_messages = 10;
  double near_duplicate_cosine = 0.9;
};

/// Linear relevance gate over featurize(text) for one feature.
struct RelevanceGate {
  std::vector<double> weights;
  double bias = 0.0;
  bool operator==(const RelevanceGate&) const = default;
};

RelevanceGate make_gate(std::size_t dim = core::kDefaultFeatureDim);

struct Relevance {
  bool relevant = false;
  double score = 0.0;
};

/// True when a keyword phrase occurs as a contiguous run of message tokens.
bool keyword_hit(std::span<const std::string> tokens, const core::FeatureSpec& spec);

/// score = 0.5 * [keyword hit] + 0.5 * sigmoid(gate . x + bias), so a keyword
/// hit always reaches the default threshold and a zero gate alone scores 0.25.
/// relevant = score >= threshold.
Relevance feature_relevance(std::span<const std::string> tokens, const core::SparseVector& x,
                            const core::FeatureSpec& spec, const RelevanceGate& gate,
                            double threshold = 0.5);
Relevance feature_relevance(std::string_view text, const core::FeatureSpec& spec,
                            const RelevanceGate& gate, double threshold = 0.5);

/// Gate probability sigmoid(gate . x + bias) alone.
double gate_probability(const RelevanceGate& gate, const core::SparseVector& x);
/// One logistic-regression SGD step of the gate toward `relevant`.
void train_gate(RelevanceGate& gate, const core::SparseVector& x, bool relevant, double lr);

struct FraudFlags {
  std::string user_id;
  std::size_t rapid_message_count = 0;
  double reward_seeking_score = 0.0;
  bool trusted = true;
  bool banned = false;
};

/// Per-user rolling state for the spam rules.
struct UserHistory {
  std::deque<std::string> recent;  // normalized texts, newest last
  std::deque<core::SparseVector> recent_vectors;
  std::int64_t last_timestamp_ms = -1;
  std::size_t message_count = 0;
  std::size_t near_duplicate_count = 0;
  FraudFlags flags;
};

/// Lowercased tokens joined by single spaces.
std::string normalize_text(std::string_view text);

/// Greeting lexicon, minimum length, then duplicate of one of the user's last
/// `duplicate_window` messages. nullopt means the message passes.
std::optional<RejectionReason> check_spam_greeting(const core::Message& message,
                                                   const UserHistory& history,
                                                   const FilterConfig& cfg);

struct TaskabilityDecision {
  std::string session_id;
  std::uint64_t turn_index = 0;
  bool is_taskable = false;
  /// Registry order.
  std::vector<FeatureId> relevant_features;
  /// Gate score for every registry feature, registry order.
  std::vector<double> gate_scores;
  std::optional<RejectionReason> rejection_reason;
};

/// Session-level counters used by the survey rate limit.
struct SessionHistory {
  std::optional<std::size_t> messages_since_survey;  // nullopt: no survey yet
};

/// Applies the threshold and rate limit to an already spam-checked message.
TaskabilityDecision decide_taskable(const core::Message& message,
                                    const core::FeatureRegistry& registry,
                                    std::span<const RelevanceGate> gates,
                                    const SessionHistory& session, const FraudFlags& fraud,
                                    const FilterConfig& cfg);

/// Stateful front end: owns the gates and per-user/per-session histories.
class Filter {
 public:
  Filter() = default;
  Filter(const core::FeatureRegistry& registry, FilterConfig cfg,
         std::size_t dim = core::kDefaultFeatureDim);

  const FilterConfig& config() const noexcept { return cfg_; }
  std::vector<RelevanceGate>& gates() noexcept { return gates_; }
  const std::vector<RelevanceGate>& gates() const noexcept { return gates_; }

  /// Full decision for a user message; updates histories.
  TaskabilityDecision evaluate(const core::Message& message, const core::FeatureRegistry& registry);
  /// Resets the session's rate-limit counter.
  void record_survey(const std::string& session_id);

  void set_trusted(const std::string& user_id, bool trusted);
  const FraudFlags* flags(const std::string& user_id) const;

 private:
  void observe(const core::Message& message, const std::string& normalized,
               const core::SparseVector& x);

  FilterConfig cfg_;
  std::vector<RelevanceGate> gates_;
  std::map<std::string, UserHistory> users_;
  std::map<std::string, SessionHistory> sessions_;
};

}  // namespace echo::filter

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "echo/core/event_log.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/types.hpp"
#include "echo/features.hpp"
#include "echo/selector.hpp"

namespace echo::tasks {

using core::FeatureId;

struct TaskConfig {
  std::size_t question_count = 4;
  std::size_t option_count = 4;
  double min_read_seconds = 5.0;
  /// Bookkeeping only; passed through to cost reports.
  double reward_per_task = 0.08;
};

enum class TaskKind { multiple_choice, free_text };
std::string_view to_string(TaskKind k) noexcept;

inline const std::string kNotSure = "Not sure";
inline const std::string kOther = "Other";

struct LabelTask {
  std::string task_id;
  std::string survey_id;
  std::string session_id;
  FeatureId feature_id;
  std::string question_text;
  TaskKind kind = TaskKind::multiple_choice;
  std::vector<std::string> options;
  /// Label-space index behind each option; nullopt for padding options.
  std::vector<std::optional<std::size_t>> option_labels;
  std::size_t predicted_option_index = 0;
  core::FeatureValue predicted;
  double min_read_seconds = 5.0;
  std::int64_t created_at = 0;
};

struct Survey {
  std::string survey_id;
  std::string session_id;
  std::vector<LabelTask> tasks;
  std::int64_t shown_at = 0;
  bool completed = false;
};

struct Abstain {
  bool operator==(const Abstain&) const = default;
};
using Answer = std::variant<std::size_t, std::string, Abstain>;

struct AuthorResponse {
  std::string task_id;
  Answer answer;
  std::int64_t answered_at = 0;
  double read_latency_s = 0.0;
};

/// Up to three informative tokens of the message, for question templates.
std::vector<std::string> key_tokens(std::string_view text, std::size_t max_tokens = 3);

std::string render_question(const core::FeatureSpec& spec, std::string_view message_text);

/// Builds a survey from the `question_count` highest-sigma features among the
/// selected ones (ties keep selection order). Throws std::invalid_argument if
/// fewer features were selected than questions are needed.
Survey build_survey(const selector::SelectorOutput& selection, const core::CandidatePool& pool,
                    const core::FeatureRegistry& registry, core::Rng& rng,
                    const TaskConfig& cfg, std::string_view message_text,
                    std::string survey_id, std::string session_id, std::int64_t created_at);

/// Author answer as a feature value. Padding options ("Not sure", "Other")
/// and explicit abstentions give an abstaining value.
core::FeatureValue interpret_answer(const LabelTask& task, const core::FeatureSpec& spec,
                                    const Answer& answer, const features::ModelConfig& mcfg);

enum class ResponseRejection { too_fast, duplicate, unknown_task, invalid_answer };
std::string_view to_string(ResponseRejection r) noexcept;

struct ResponseOutcome {
  bool accepted = false;
  std::optional<ResponseRejection> reason;
  bool abstained = false;
  const LabelTask* task = nullptr;
  core::FeatureValue author_value;
  bool survey_completed = false;
};

/// Open surveys and their responses. Accepted answers are final.
class SurveyBook {
 public:
  void add(Survey survey);
  const Survey* survey(const std::string& survey_id) const;
  const LabelTask* task(const std::string& task_id) const;

  ResponseOutcome accept_response(const AuthorResponse& response, const core::FeatureRegistry& registry,
                                  const features::ModelConfig& mcfg);

  std::size_t shown() const noexcept { return surveys_.size(); }
  std::size_t completed() const noexcept;

 private:
  std::map<std::string, Survey> surveys_;
  std::map<std::string, std::pair<std::string, std::size_t>> task_index_;
  std::set<std::string> answered_;
};

/// Completed / shown surveys from a log; nullopt when no survey was shown.
std::optional<double> completion_rate(const core::EventLog& log);

}  // namespace echo::tasks

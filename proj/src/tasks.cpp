#include "echo/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace echo::tasks {

std::string_view to_string(TaskKind k) noexcept {
  return k == TaskKind::multiple_choice ? "multiple_choice" : "free_text";
}

std::string_view to_string(ResponseRejection r) noexcept {
  switch (r) {
    case ResponseRejection::too_fast: return "too_fast";
    case ResponseRejection::duplicate: return "duplicate";
    case ResponseRejection::unknown_task: return "unknown_task";
    case ResponseRejection::invalid_answer: return "invalid_answer";
  }
  return "invalid_answer";
}

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words{
      "the",  "and",  "for",   "with", "that", "this", "what", "when", "where", "which",
      "have", "from", "your",  "about", "into", "just", "some", "would", "could", "should",
      "will", "there", "their", "they", "them", "then", "than", "been", "being", "also",
      "very", "really", "want", "need", "like", "make", "does", "dont", "know", "think"};
  return words;
}

}  // namespace

std::vector<std::string> key_tokens(std::string_view text, std::size_t max_tokens) {
  std::vector<std::string> out;
  for (auto& t : core::tokenize(text)) {
    if (out.size() >= max_tokens) break;
    if (t.size() < 4 || stopwords().count(t) != 0) continue;
    if (std::find(out.begin(), out.end(), t) != out.end()) continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::string render_question(const core::FeatureSpec& spec, std::string_view message_text) {
  std::string tokens;
  for (const auto& t : key_tokens(message_text)) {
    if (!tokens.empty()) tokens += ' ';
    tokens += t;
  }
  std::string q = spec.question_template.empty()
                      ? "Regarding \"{tokens}\", what best describes your " + spec.name + "?"
                      : spec.question_template;
  const std::string slot = "{tokens}";
  for (auto pos = q.find(slot); pos != std::string::npos; pos = q.find(slot, pos + tokens.size()))
    q.replace(pos, slot.size(), tokens);
  return q;
}

Survey build_survey(const selector::SelectorOutput& selection, const core::CandidatePool& pool,
                    const core::FeatureRegistry& registry, core::Rng& rng,
                    const TaskConfig& cfg, std::string_view message_text,
                    std::string survey_id, std::string session_id, std::int64_t created_at) {
  if (selection.selected.size() < cfg.question_count)
    throw std::invalid_argument("survey needs at least question_count selected features");

  // Highest sigma first; stable sort keeps selection order on ties.
  std::vector<FeatureId> chosen = selection.selected;
  std::stable_sort(chosen.begin(), chosen.end(), [&](const FeatureId& a, const FeatureId& b) {
    return selection.sigma_for(a) > selection.sigma_for(b);
  });
  chosen.resize(cfg.question_count);

  Survey survey;
  survey.survey_id = std::move(survey_id);
  survey.session_id = std::move(session_id);
  survey.shown_at = created_at;
  for (std::size_t q = 0; q < chosen.size(); ++q) {
    const auto& spec = registry.at(chosen[q]);
    const auto* entry = pool.find(chosen[q]);
    if (entry == nullptr) throw std::invalid_argument("selected feature missing from pool: " + chosen[q]);

    LabelTask t;
    t.task_id = survey.survey_id + "-t" + std::to_string(q);
    t.survey_id = survey.survey_id;
    t.session_id = survey.session_id;
    t.feature_id = spec.feature_id;
    t.question_text = render_question(spec, message_text);
    t.predicted = entry->value;
    t.min_read_seconds = cfg.min_read_seconds;
    t.created_at = created_at;

    const bool padded_binary = spec.kind == core::FeatureKind::binary;
    const bool enough_labels = spec.kind == core::FeatureKind::categorical &&
                               spec.label_space.size() >= cfg.option_count;
    if (padded_binary || enough_labels) {
      t.kind = TaskKind::multiple_choice;
      const std::size_t predicted = entry->value.class_index();
      std::vector<std::optional<std::size_t>> labels{predicted};
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < spec.label_space.size(); ++i)
        if (i != predicted) rest.push_back(i);
      rng.shuffle(rest);
      for (std::size_t i = 0; i < rest.size() && labels.size() < cfg.option_count; ++i)
        labels.emplace_back(rest[i]);
      while (labels.size() < cfg.option_count) labels.emplace_back(std::nullopt);
      rng.shuffle(labels);
      std::size_t pad = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
          t.options.push_back(spec.label_space[*labels[i]]);
          if (*labels[i] == predicted) t.predicted_option_index = i;
        } else {
          t.options.push_back(pad++ == 0 ? kNotSure : kOther);
        }
      }
      t.option_labels = std::move(labels);
    } else {
      t.kind = TaskKind::free_text;
    }
    survey.tasks.push_back(std::move(t));
  }
  return survey;
}

core::FeatureValue interpret_answer(const LabelTask& task, const core::FeatureSpec& spec,
                                    const Answer& answer, const features::ModelConfig& mcfg) {
  auto abstention = [&] {
    core::FeatureValue v = spec.kind == core::FeatureKind::free_text
                               ? core::FeatureValue::free_text("", std::vector<double>(mcfg.embed_dim, 0.0), 0.0)
                           : spec.kind == core::FeatureKind::binary ? core::FeatureValue::binary(true, 0.0)
                                                                    : core::FeatureValue::categorical(0, 0.0);
    v.abstain = true;
    return v;
  };
  if (std::holds_alternative<Abstain>(answer)) return abstention();
  if (const auto* opt = std::get_if<std::size_t>(&answer)) {
    if (task.kind != TaskKind::multiple_choice || *opt >= task.options.size())
      throw std::invalid_argument("option index out of range");
    const auto label = task.option_labels[*opt];
    if (!label) return abstention();
    if (spec.kind == core::FeatureKind::binary) return core::FeatureValue::binary(*label == 0);
    return core::FeatureValue::categorical(*label);
  }
  const auto& words = std::get<std::string>(answer);
  if (task.kind == TaskKind::multiple_choice) {
    // A typed answer matching an option's text counts as that option.
    for (std::size_t i = 0; i < task.options.size(); ++i)
      if (core::trim(words) == task.options[i]) return interpret_answer(task, spec, Answer{i}, mcfg);
    throw std::invalid_argument("multiple-choice task expects an option index");
  }
  // One-word answers: keep only the first token.
  const auto tokens = core::tokenize(words);
  if (tokens.empty()) return abstention();
  return features::author_value(spec, tokens.front(), mcfg);
}

void SurveyBook::add(Survey survey) {
  const auto id = survey.survey_id;
  for (std::size_t i = 0; i < survey.tasks.size(); ++i) task_index_[survey.tasks[i].task_id] = {id, i};
  surveys_[id] = std::move(survey);
}

const Survey* SurveyBook::survey(const std::string& survey_id) const {
  auto it = surveys_.find(survey_id);
  return it == surveys_.end() ? nullptr : &it->second;
}

const LabelTask* SurveyBook::task(const std::string& task_id) const {
  auto it = task_index_.find(task_id);
  if (it == task_index_.end()) return nullptr;
  return &surveys_.at(it->second.first).tasks[it->second.second];
}

ResponseOutcome SurveyBook::accept_response(const AuthorResponse& response,
                                            const core::FeatureRegistry& registry,
                                            const features::ModelConfig& mcfg) {
  ResponseOutcome out;
  auto it = task_index_.find(response.task_id);
  if (it == task_index_.end()) {
    out.reason = ResponseRejection::unknown_task;
    return out;
  }
  auto& survey = surveys_.at(it->second.first);
  const auto& task = survey.tasks[it->second.second];
  out.task = &task;
  if (answered_.count(response.task_id) != 0) {
    out.reason = ResponseRejection::duplicate;
    return out;
  }
  if (response.read_latency_s < task.min_read_seconds) {
    out.reason = ResponseRejection::too_fast;
    return out;
  }
  try {
    out.author_value = interpret_answer(task, registry.at(task.feature_id), response.answer, mcfg);
  } catch (const std::invalid_argument&) {
    out.reason = ResponseRejection::invalid_answer;
    return out;
  }
  answered_.insert(response.task_id);
  out.accepted = true;
  out.abstained = out.author_value.abstain;
  survey.completed = std::all_of(survey.tasks.begin(), survey.tasks.end(),
                                 [&](const LabelTask& t) { return answered_.count(t.task_id) != 0; });
  out.survey_completed = survey.completed;
  return out;
}

std::size_t SurveyBook::completed() const noexcept {
  return static_cast<std::size_t>(std::count_if(surveys_.begin(), surveys_.end(),
                                                [](const auto& kv) { return kv.second.completed; }));
}

std::optional<double> completion_rate(const core::EventLog& log) {
  std::vector<std::vector<std::string>> surveys;
  std::unordered_set<std::string> accepted;
  for (const auto& e : log.events()) {
    if (e.kind == core::EventKind::survey_shown) {
      std::vector<std::string> ids;
      for (const auto& t : e.payload.at("tasks")) ids.push_back(t.at("task_id").get<std::string>());
      surveys.push_back(std::move(ids));
    } else if (e.kind == core::EventKind::author_response && e.payload.value("accepted", false)) {
      accepted.insert(e.payload.at("task_id").get<std::string>());
    }
  }
  if (surveys.empty()) return std::nullopt;
  const auto done = std::count_if(surveys.begin(), surveys.end(), [&](const auto& ids) {
    return std::all_of(ids.begin(), ids.end(), [&](const auto& id) { return accepted.count(id) != 0; });
  });
  return static_cast<double>(done) / static_cast<double>(surveys.size());
}

}  // namespace echo::tasks

#include "echo/engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "echo/core/checksum.hpp"

namespace echo {

using core::EventKind;
using core::Json;

namespace {

Json answer_to_json(const tasks::Answer& a) {
  Json j;
  if (const auto* i = std::get_if<std::size_t>(&a)) {
    j["option"] = *i;
  } else if (const auto* s = std::get_if<std::string>(&a)) {
    j["text"] = *s;
  } else {
    j["abstain"] = true;
  }
  return j;
}

tasks::Answer answer_from_json(const Json& j) {
  if (j.contains("option")) return j.at("option").get<std::size_t>();
  if (j.contains("text")) return j.at("text").get<std::string>();
  return tasks::Abstain{};
}

Json task_to_json(const tasks::LabelTask& t, const core::FeatureSpec& spec, double sigma) {
  Json j;
  j["task_id"] = t.task_id;
  j["feature_id"] = t.feature_id;
  j["kind"] = std::string(tasks::to_string(t.kind));
  j["question"] = t.question_text;
  j["options"] = t.options;
  if (t.kind == tasks::TaskKind::multiple_choice) j["predicted_option_index"] = t.predicted_option_index;
  j["predicted"] = core::value_text(spec, t.predicted);
  j["confidence"] = t.predicted.confidence;
  j["sigma"] = sigma;
  j["min_read_seconds"] = t.min_read_seconds;
  return j;
}

}  // namespace

Engine::Engine(core::FeatureRegistry registry, recommend::Catalog catalog, EngineConfig cfg)
    : registry_(std::move(registry)),
      catalog_(std::move(catalog)),
      cfg_(std::move(cfg)),
      models_(registry_, cfg_.model),
      selector_(selector::make_params(registry_, cfg_.selector)),
      filter_(registry_, cfg_.filter, cfg_.model.input_dim),
      ledger_(cfg_.recommend.merge_window_ms),
      accuracy_(registry_.size()) {
  cfg_.filter.survey_question_count = std::max(cfg_.filter.survey_question_count, std::size_t{1});
}

std::uint64_t Engine::checksum() const {
  core::Checksum c;
  c.add(models_.checksum()).add(selector_.checksum());
  for (const auto& g : filter_.gates()) c.add(g.weights).add(g.bias);
  return c.value();
}

Engine::Snapshot Engine::snapshot() const {
  return {models_.checksums(), selector_.weights_checksum(), selector_.counters_checksum()};
}

MessageResult Engine::on_message(const core::Message& message, bool recommend) {
  Json in;
  in["user_id"] = message.user_id;
  in["turn_index"] = message.turn_index;
  in["role"] = message.role == core::AuthorRole::user ? "user" : "assistant";
  in["text"] = message.text;
  in["recommend"] = recommend;
  log_.emit(message.session_id, EventKind::message, message.timestamp_ms, std::move(in));

  MessageResult result;
  if (message.role != core::AuthorRole::user) return result;

  // Open impressions in this session had their chance to be clicked.
  settle_session(message.session_id, message.timestamp_ms);

  result.decision = filter_.evaluate(message, registry_);
  {
    Json d;
    d["taskable"] = result.decision.is_taskable;
    d["relevant_features"] = result.decision.relevant_features;
    if (result.decision.rejection_reason)
      d["rejection_reason"] = std::string(filter::to_string(*result.decision.rejection_reason));
    log_.emit(message.session_id, EventKind::taskability_decision, message.timestamp_ms, std::move(d));
  }

  const auto x = core::featurize(message.text, cfg_.model.input_dim);

  if (result.decision.is_taskable) {
    const auto pool = features::predict_pool(registry_, models_, message.text, result.decision.relevant_features);
    std::vector<double> gates;
    for (const auto& e : pool.entries) gates.push_back(result.decision.gate_scores[registry_.index_of(e.feature_id)]);
    const auto sel = selector::score_and_select(selector_, pool, gates);
    if (sel.selected.size() >= cfg_.tasks.question_count) {
      const auto survey_id = "sv-" + std::to_string(++survey_counter_);
      auto rng = core::Rng::substream(core::RngSeed{cfg_.seed}, "survey", survey_counter_);
      auto survey = tasks::build_survey(sel, pool, registry_, rng, cfg_.tasks, message.text, survey_id,
                                        message.session_id, message.timestamp_ms);
      Json s;
      s["survey_id"] = survey.survey_id;
      s["selected"] = sel.selected;
      Json ts = Json::array();
      for (const auto& t : survey.tasks)
        ts.push_back(task_to_json(t, registry_.at(t.feature_id), sel.sigma_for(t.feature_id)));
      s["tasks"] = std::move(ts);
      log_.emit(message.session_id, EventKind::survey_shown, message.timestamp_ms, std::move(s));
      filter_.record_survey(message.session_id);
      survey_messages_[survey.survey_id] = message;
      result.survey = survey;
      surveys_.add(std::move(survey));
    }
  }

  if (recommend) {
    if (cfg_.echo_arm) result.echo = run_echo(message, result.decision, x);
    if (cfg_.baseline_arm) result.baseline = run_baseline(message);
  }
  return result;
}

std::optional<ShownRecommendation> Engine::show(const core::Message& message, recommend::Source source,
                                                const recommend::Decision& d, Json payload) {
  payload["show"] = d.show;
  if (d.product) payload["product_id"] = d.product->product_id;
  if (d.empty_catalog) payload["empty_catalog"] = true;
  if (!d.show) {
    log_.emit(message.session_id, EventKind::recommendation, message.timestamp_ms, std::move(payload));
    return std::nullopt;
  }
  const auto r = ledger_.record_impression(message.session_id, message.user_id, source, *d.product,
                                           d.rendered_text, message.timestamp_ms);
  payload["rendered_text"] = d.rendered_text;
  payload["impression_id"] = r.impression_id;
  payload["new_impression"] = r.created;
  if (r.merged) payload["merged"] = true;
  if (r.deduplicated) payload["deduplicated"] = true;
  log_.emit(message.session_id, EventKind::recommendation, message.timestamp_ms, std::move(payload));
  if (r.created) {
    const auto* imp = ledger_.find(r.impression_id);
    Json i;
    i["impression_id"] = r.impression_id;
    i["source"] = std::string(recommend::to_string(source));
    i["product_id"] = imp->product_id;
    i["vertical"] = imp->vertical;
    i["content_hash"] = imp->content_hash;
    log_.emit(message.session_id, EventKind::impression, message.timestamp_ms, std::move(i));
  }
  ShownRecommendation s;
  s.source = source;
  s.product_id = d.product->product_id;
  s.title = d.product->title;
  s.rendered_text = d.rendered_text;
  s.impression_id = r.impression_id;
  s.new_impression = r.created;
  return s;
}

std::optional<ShownRecommendation> Engine::run_echo(const core::Message& message,
                                                    const filter::TaskabilityDecision& decision,
                                                    const core::SparseVector& x) {
  std::vector<core::FeatureId> selected;
  std::vector<selector::MetaFeatures> meta;
  std::vector<recommend::SelectedValue> values;

  if (selector_.mode == selector::Mode::select_models) {
    const auto& ids = selector_.feature_ids;
    selected = selector::select_models(selector_, ids, decision.gate_scores);
    for (const auto& id : selected) {
      const auto i = registry_.index_of(id);
      meta.push_back(selector::meta_features(selector_, i, 1.0 - selector_.sigma(i), decision.gate_scores[i]));
      values.push_back({&registry_.at(i), models_.predict(registry_, i, message.text, x)});
    }
  } else {
    core::CandidatePool pool;
    for (std::size_t i = 0; i < registry_.size(); ++i)
      pool.entries.push_back({registry_.at(i).feature_id, models_.predict(registry_, i, message.text, x)});
    const auto sel = selector::score_and_select(selector_, pool, decision.gate_scores);
    selected = sel.selected;
    for (const auto& id : selected) {
      meta.push_back(sel.meta_for(id));
      values.push_back({&registry_.at(id), pool.find(id)->value});
    }
  }

  const auto d = recommend::recommend(values, catalog_, cfg_.recommend, message.text);
  Json p;
  p["source"] = "echo";
  p["selected"] = selected;
  p["similarity"] = d.similarity;
  auto shown = show(message, recommend::Source::echo, d, std::move(p));
  if (shown && shown->new_impression) {
    pending_[shown->impression_id] = PendingReward{message.session_id, selected, meta, false};
  } else if (!shown && cfg_.skip_feedback && !selected.empty() && !catalog_.empty()) {
    apply_relevance(message.session_id, message.timestamp_ms, selected, meta, 0.0, "skip");
  }
  return shown;
}

std::optional<ShownRecommendation> Engine::run_baseline(const core::Message& message) {
  const auto d = recommend::baseline_recommend(message.text, catalog_);
  Json p;
  p["source"] = "baseline";
  p["overlap"] = static_cast<std::size_t>(d.similarity);
  return show(message, recommend::Source::baseline, d, std::move(p));
}

void Engine::apply_relevance(const std::string& session_id, std::int64_t at,
                             const std::vector<core::FeatureId>& selected,
                             const std::vector<selector::MetaFeatures>& meta, double reward,
                             const std::string& cause) {
  std::optional<Snapshot> before;
  std::vector<std::uint64_t> gates_before;
  if (audit_) before = snapshot();
  const double loss = selector::update_relevance(selector_, selected, meta, reward);
  if (audit_) {
    const auto after = snapshot();
    ++audit_stats_.relevance_updates;
    if (after.models != before->models) ++audit_stats_.stop_gradient_violations;
    if (after.counters != before->counters) ++audit_stats_.dual_loop_violations;
  }
  Json u;
  u["target"] = "relevance";
  u["cause"] = cause;
  u["reward"] = reward;
  u["selected"] = selected;
  u["loss"] = loss;
  log_.emit(session_id, EventKind::model_update, at, std::move(u));
}

void Engine::settle_session(const std::string& session_id, std::int64_t at) {
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->second.session_id != session_id) {
      ++it;
      continue;
    }
    if (!it->second.settled)
      apply_relevance(session_id, at, it->second.selected, it->second.meta, 0.0, "no_click:" + it->first);
    it = pending_.erase(it);
  }
}

tasks::ResponseOutcome Engine::on_response(const std::string& session_id,
                                           const tasks::AuthorResponse& response) {
  const auto* task = surveys_.task(response.task_id);
  if (task == nullptr || task->session_id != session_id)
    throw std::out_of_range("unknown task " + response.task_id + " for session " + session_id);

  auto outcome = surveys_.accept_response(response, registry_, cfg_.model);
  Json r;
  r["task_id"] = response.task_id;
  r["answer"] = answer_to_json(response.answer);
  r["read_latency_s"] = response.read_latency_s;
  r["feature_id"] = task->feature_id;
  r["accepted"] = outcome.accepted;
  if (outcome.reason) r["reason"] = std::string(tasks::to_string(*outcome.reason));
  if (outcome.accepted) r["abstained"] = outcome.abstained;
  if (outcome.survey_completed) r["survey_completed"] = true;
  log_.emit(session_id, EventKind::author_response, response.answered_at, std::move(r));
  if (!outcome.accepted || outcome.abstained) return outcome;

  const auto i = registry_.index_of(task->feature_id);
  const auto& message = survey_messages_.at(task->survey_id);
  const auto x = core::featurize(message.text, cfg_.model.input_dim);

  // Author loop, part 1: only this feature's model moves.
  std::optional<Snapshot> before;
  if (audit_) before = snapshot();
  models_.update(registry_, i, message.text, x, outcome.author_value);
  if (audit_) {
    auto after = snapshot();
    ++audit_stats_.feature_updates;
    for (std::size_t j = 0; j < after.models.size(); ++j)
      if (j != i && after.models[j] != before->models[j]) ++audit_stats_.isolation_violations;
    if (after.weights != before->weights || after.counters != before->counters) ++audit_stats_.isolation_violations;
    if (!models_.params(i).finite()) ++audit_stats_.non_finite;
    // Nothing touches parameters between the two updates.
    before = std::move(after);
  }
  {
    Json u;
    u["target"] = "feature_model";
    u["feature_id"] = task->feature_id;
    u["update_count"] = models_.params(i).update_count;
    log_.emit(session_id, EventKind::model_update, response.answered_at, std::move(u));
  }

  // Author loop, part 2: uncertainty counters against the shown prediction.
  selector::update_uncertainty(selector_, task->feature_id, task->predicted, outcome.author_value);
  if (audit_) {
    const auto after = snapshot();
    ++audit_stats_.uncertainty_updates;
    if (after.models != before->models) ++audit_stats_.isolation_violations;
    if (after.weights != before->weights) ++audit_stats_.dual_loop_violations;
  }
  auto& acc = accuracy_[i];
  ++acc.labels;
  if (outcome.author_value.kind() == core::FeatureKind::free_text) {
    acc.matches += 1.0 - core::cosine_distance(std::get<core::FreeText>(task->predicted.value).embedding,
                                               std::get<core::FreeText>(outcome.author_value.value).embedding);
  } else if (task->predicted.class_index() == outcome.author_value.class_index()) {
    acc.matches += 1.0;
  }
  {
    Json u;
    u["target"] = "uncertainty";
    u["feature_id"] = task->feature_id;
    u["alpha"] = selector_.alpha[i];
    u["beta"] = selector_.beta[i];
    log_.emit(session_id, EventKind::model_update, response.answered_at, std::move(u));
  }
  return outcome;
}

std::size_t Engine::on_click(const std::string& session_id, const std::string& impression_id,
                             std::int64_t at) {
  const auto* imp = ledger_.find(impression_id);
  if (imp == nullptr || imp->session_id != session_id)
    throw std::out_of_range("unknown impression " + impression_id + " for session " + session_id);
  const auto clicks = ledger_.record_click(impression_id, at);
  Json c;
  c["impression_id"] = impression_id;
  c["clicks"] = clicks;
  log_.emit(session_id, EventKind::click, at, std::move(c));

  auto it = pending_.find(impression_id);
  if (it != pending_.end() && !it->second.settled) {
    it->second.settled = true;
    apply_relevance(session_id, at, it->second.selected, it->second.meta, 1.0, "click:" + impression_id);
  }
  return clicks;
}

Engine Engine::replay(const core::EventLog& log, core::FeatureRegistry registry,
                      recommend::Catalog catalog, EngineConfig cfg) {
  Engine engine(std::move(registry), std::move(catalog), std::move(cfg));
  for (const auto& e : log.events()) {
    switch (e.kind) {
      case EventKind::message: {
        core::Message m;
        m.session_id = e.session_id;
        m.user_id = e.payload.at("user_id").get<std::string>();
        m.turn_index = e.payload.at("turn_index").get<std::uint64_t>();
        m.role = e.payload.at("role").get<std::string>() == "user" ? core::AuthorRole::user
                                                                   : core::AuthorRole::assistant;
        m.text = e.payload.at("text").get<std::string>();
        m.timestamp_ms = e.timestamp_ms;
        engine.on_message(m, e.payload.value("recommend", true));
        break;
      }
      case EventKind::author_response: {
        tasks::AuthorResponse r;
        r.task_id = e.payload.at("task_id").get<std::string>();
        r.answer = answer_from_json(e.payload.at("answer"));
        r.read_latency_s = e.payload.at("read_latency_s").get<double>();
        r.answered_at = e.timestamp_ms;
        engine.on_response(e.session_id, r);
        break;
      }
      case EventKind::click:
        engine.on_click(e.session_id, e.payload.at("impression_id").get<std::string>(), e.timestamp_ms);
        break;
      default:
        break;
    }
  }
  return engine;
}

}  // namespace echo

#include "echo/filter.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace echo::filter {

std::string_view to_string(RejectionReason r) noexcept {
  switch (r) {
    case RejectionReason::spam: return "spam";
    case RejectionReason::greeting: return "greeting";
    case RejectionReason::too_short: return "too_short";
    case RejectionReason::rate_limited: return "rate_limited";
    case RejectionReason::too_few_features: return "too_few_features";
  }
  return "spam";
}

RelevanceGate make_gate(std::size_t dim) { return RelevanceGate{std::vector<double>(dim, 0.0), 0.0}; }

bool keyword_hit(std::span<const std::string> tokens, const core::FeatureSpec& spec) {
  for (const auto& kw : spec.relevance_keywords) {
    const auto kw_tokens = core::tokenize(kw);
    if (kw_tokens.empty() || kw_tokens.size() > tokens.size()) continue;
    auto it = std::search(tokens.begin(), tokens.end(), kw_tokens.begin(), kw_tokens.end());
    if (it != tokens.end()) return true;
  }
  return false;
}

double gate_probability(const RelevanceGate& gate, const core::SparseVector& x) {
  const double z = gate.bias + (gate.weights.empty() ? 0.0 : core::dot(x, gate.weights));
  return 1.0 / (1.0 + std::exp(-z));
}

void train_gate(RelevanceGate& gate, const core::SparseVector& x, bool relevant, double lr) {
  const double err = gate_probability(gate, x) - (relevant ? 1.0 : 0.0);
  for (std::size_t k = 0; k < x.nnz(); ++k) gate.weights[x.index[k]] -= lr * err * x.value[k];
  gate.bias -= lr * err;
}

Relevance feature_relevance(std::span<const std::string> tokens, const core::SparseVector& x,
                            const core::FeatureSpec& spec, const RelevanceGate& gate,
                            double threshold) {
  const double hit = keyword_hit(tokens, spec) ? 1.0 : 0.0;
  const double score = 0.5 * hit + 0.5 * gate_probability(gate, x);
  return {score >= threshold, score};
}

Relevance feature_relevance(std::string_view text, const core::FeatureSpec& spec,
                            const RelevanceGate& gate, double threshold) {
  const auto tokens = core::tokenize(text);
  const auto dim = gate.weights.empty() ? core::kDefaultFeatureDim : gate.weights.size();
  return feature_relevance(tokens, core::featurize(text, dim), spec, gate, threshold);
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& t : core::tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

namespace {

bool is_greeting(std::span<const std::string> tokens, const std::string& normalized,
                 const FilterConfig& cfg) {
  std::set<std::string> words;
  for (const auto& entry : cfg.greeting_lexicon) {
    if (normalize_text(entry) == normalized) return true;
    for (auto& t : core::tokenize(entry)) words.insert(std::move(t));
  }
  return !tokens.empty() &&
         std::all_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return words.count(t) != 0; });
}

}  // namespace

std::optional<RejectionReason> check_spam_greeting(const core::Message& message,
                                                   const UserHistory& history,
                                                   const FilterConfig& cfg) {
  const auto tokens = core::tokenize(message.text);
  const auto normalized = normalize_text(message.text);
  if (is_greeting(tokens, normalized, cfg)) return RejectionReason::greeting;
  if (tokens.size() < cfg.min_tokens) return RejectionReason::too_short;
  const auto window = std::min(cfg.duplicate_window, history.recent.size());
  if (std::find(history.recent.end() - static_cast<std::ptrdiff_t>(window), history.recent.end(),
                normalized) != history.recent.end())
    return RejectionReason::spam;
  return std::nullopt;
}

TaskabilityDecision decide_taskable(const core::Message& message,
                                    const core::FeatureRegistry& registry,
                                    std::span<const RelevanceGate> gates,
                                    const SessionHistory& session, const FraudFlags& fraud,
                                    const FilterConfig& cfg) {
  if (gates.size() != registry.size()) throw std::invalid_argument("one gate per feature required");
  TaskabilityDecision d;
  d.session_id = message.session_id;
  d.turn_index = message.turn_index;
  const auto tokens = core::tokenize(message.text);
  const auto dim = gates.empty() || gates[0].weights.empty() ? core::kDefaultFeatureDim
                                                             : gates[0].weights.size();
  const auto x = core::featurize(message.text, dim);
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto r = feature_relevance(tokens, x, registry.at(i), gates[i], cfg.gate_threshold);
    d.gate_scores.push_back(r.score);
    if (r.relevant) d.relevant_features.push_back(registry.at(i).feature_id);
  }
  if (fraud.banned || !fraud.trusted) {
    d.rejection_reason = RejectionReason::spam;
  } else if (d.relevant_features.size() < cfg.survey_question_count) {
    d.rejection_reason = RejectionReason::too_few_features;
  } else if (session.messages_since_survey &&
             *session.messages_since_survey < cfg.messages_between_surveys) {
    d.rejection_reason = RejectionReason::rate_limited;
  }
  d.is_taskable = !d.rejection_reason.has_value();
  return d;
}

Filter::Filter(const core::FeatureRegistry& registry, FilterConfig cfg, std::size_t dim)
    : cfg_(std::move(cfg)), gates_(registry.size(), make_gate(dim)) {}

void Filter::observe(const core::Message& message, const std::string& normalized,
                     const core::SparseVector& x) {
  auto& h = users_[message.user_id];
  h.flags.user_id = message.user_id;
  ++h.message_count;
  if (h.last_timestamp_ms >= 0 && message.timestamp_ms - h.last_timestamp_ms < cfg_.rapid_interval_ms)
    ++h.flags.rapid_message_count;
  h.last_timestamp_ms = message.timestamp_ms;
  const bool near_dup = std::any_of(h.recent_vectors.begin(), h.recent_vectors.end(), [&](const auto& v) {
    return core::cosine_similarity(v, x) >= cfg_.near_duplicate_cosine;
  });
  if (near_dup) ++h.near_duplicate_count;
  h.flags.reward_seeking_score =
      static_cast<double>(h.near_duplicate_count) / static_cast<double>(h.message_count);
  if (h.flags.rapid_message_count >= cfg_.rapid_ban_count ||
      (h.message_count >= cfg_.reward_seeking_min_messages &&
       h.flags.reward_seeking_score >= cfg_.reward_seeking_ban_score))
    h.flags.banned = true;

  h.recent.push_back(normalized);
  h.recent_vectors.push_back(x);
  while (h.recent.size() > cfg_.duplicate_window) {
    h.recent.pop_front();
    h.recent_vectors.pop_front();
  }
}

TaskabilityDecision Filter::evaluate(const core::Message& message,
                                     const core::FeatureRegistry& registry) {
  if (message.role != core::AuthorRole::user)
    throw std::invalid_argument("only user messages are filtered");
  auto& session = sessions_[message.session_id];
  if (session.messages_since_survey) ++*session.messages_since_survey;

  const auto& history = users_[message.user_id];
  const auto rejection = check_spam_greeting(message, history, cfg_);
  const auto normalized = normalize_text(message.text);
  const auto dim = gates_.empty() ? core::kDefaultFeatureDim : gates_[0].weights.size();
  observe(message, normalized, core::featurize(message.text, dim));

  auto d = decide_taskable(message, registry, gates_, session, users_[message.user_id].flags, cfg_);
  if (rejection) {
    d.rejection_reason = rejection;
    d.is_taskable = false;
  }
  return d;
}

void Filter::record_survey(const std::string& session_id) { sessions_[session_id].messages_since_survey = 0; }

void Filter::set_trusted(const std::string& user_id, bool trusted) {
  auto& h = users_[user_id];
  h.flags.user_id = user_id;
  h.flags.trusted = trusted;
}

const FraudFlags* Filter::flags(const std::string& user_id) const {
  auto it = users_.find(user_id);
  return it == users_.end() ? nullptr : &it->second.flags;
}

}  // namespace echo::filter

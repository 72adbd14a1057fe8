#include "echo/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "echo/core/checksum.hpp"
#include "echo/core/text.hpp"

namespace echo::selector {

std::size_t SelectorParams::index_of(const FeatureId& id) const {
  auto it = std::find(feature_ids.begin(), feature_ids.end(), id);
  if (it == feature_ids.end()) throw std::out_of_range("selector has no feature " + id);
  return static_cast<std::size_t>(it - feature_ids.begin());
}

std::uint64_t SelectorParams::weights_checksum() const noexcept {
  core::Checksum c;
  for (const auto& w : weights) c.add(std::span<const double>(w));
  return c.value();
}

std::uint64_t SelectorParams::counters_checksum() const noexcept {
  core::Checksum c;
  c.add(alpha).add(beta);
  return c.value();
}

std::uint64_t SelectorParams::checksum() const noexcept {
  core::Checksum c;
  c.add(weights_checksum()).add(counters_checksum());
  c.add(static_cast<std::uint64_t>(k)).add(static_cast<std::uint64_t>(mode)).add(learning_rate);
  return c.value();
}

SelectorParams make_params(const core::FeatureRegistry& registry, const SelectorConfig& cfg) {
  if (cfg.k == 0) throw std::invalid_argument("selector k must be positive");
  SelectorParams p;
  for (const auto& s : registry.specs()) p.feature_ids.push_back(s.feature_id);
  p.weights.assign(registry.size(), cfg.initial_weights);
  p.alpha.assign(registry.size(), 1.0);
  p.beta.assign(registry.size(), 1.0);
  p.k = std::min(cfg.k, std::max<std::size_t>(registry.size(), 1));
  p.mode = cfg.mode;
  p.learning_rate = cfg.learning_rate;
  return p;
}

const MetaFeatures& SelectorOutput::meta_for(const FeatureId& id) const {
  for (std::size_t i = 0; i < feature_ids.size(); ++i)
    if (feature_ids[i] == id) return meta[i];
  throw std::out_of_range("feature not in selector output: " + id);
}

double SelectorOutput::sigma_for(const FeatureId& id) const {
  for (std::size_t i = 0; i < feature_ids.size(); ++i)
    if (feature_ids[i] == id) return sigmas[i];
  throw std::out_of_range("feature not in selector output: " + id);
}

MetaFeatures meta_features(const SelectorParams& p, std::size_t feature_index, double confidence,
                           double gate_score) {
  return {confidence, gate_score, 1.0, p.sigma(feature_index)};
}

double relevance_score(const SelectorParams& p, std::size_t feature_index,
                       const MetaFeatures& phi) noexcept {
  const auto& w = p.weights[feature_index];
  double s = 0.0;
  for (std::size_t d = 0; d < kMetaDim; ++d) s += w[d] * phi[d];
  return s;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const FeatureId> ids,
                               std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

SelectorOutput score_and_select(const SelectorParams& p, const core::CandidatePool& pool,
                                std::span<const double> gate_scores) {
  if (pool.empty()) throw std::invalid_argument("score_and_select needs a non-empty pool");
  if (gate_scores.size() != pool.size())
    throw std::invalid_argument("gate scores must align with the pool");
  SelectorOutput out;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const auto& e = pool.entries[j];
    const auto i = p.index_of(e.feature_id);
    auto phi = meta_features(p, i, e.value.confidence, gate_scores[j]);
    out.feature_ids.push_back(e.feature_id);
    out.scores.push_back(relevance_score(p, i, phi));
    out.sigmas.push_back(p.sigma(i));
    out.meta.push_back(phi);
  }
  for (auto j : top_k(out.scores, out.feature_ids, p.k)) out.selected.push_back(out.feature_ids[j]);
  out.short_selection = pool.size() < p.k;
  return out;
}

std::vector<FeatureId> select_models(const SelectorParams& p, std::span<const FeatureId> candidates,
                                     std::span<const double> gate_scores) {
  if (gate_scores.size() != candidates.size())
    throw std::invalid_argument("gate scores must align with the candidates");
  std::vector<double> scores;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const auto i = p.index_of(candidates[j]);
    scores.push_back(relevance_score(p, i, meta_features(p, i, 1.0 - p.sigma(i), gate_scores[j])));
  }
  std::vector<FeatureId> out;
  for (auto j : top_k(scores, candidates, p.k)) out.push_back(candidates[j]);
  return out;
}

bool update_uncertainty(SelectorParams& p, const FeatureId& feature_id,
                        const core::FeatureValue& predicted, const core::FeatureValue& author) {
  if (author.abstain) return false;
  const auto i = p.index_of(feature_id);
  if (author.kind() == core::FeatureKind::free_text) {
    const auto& pe = std::get<core::FreeText>(predicted.value).embedding;
    const auto& ae = std::get<core::FreeText>(author.value).embedding;
    const double d = core::cosine_distance(pe, ae);
    p.alpha[i] += d;
    p.beta[i] += 1.0 - d;
  } else if (predicted.class_index() != author.class_index()) {
    p.alpha[i] += 1.0;
  } else {
    p.beta[i] += 1.0;
  }
  return true;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double mean_score(const SelectorParams& p, std::span<const FeatureId> selected,
                  std::span<const MetaFeatures> meta) {
  if (selected.empty() || selected.size() != meta.size())
    throw std::invalid_argument("relevance update needs aligned, non-empty selection");
  double z = 0.0;
  for (std::size_t j = 0; j < selected.size(); ++j)
    z += relevance_score(p, p.index_of(selected[j]), meta[j]);
  return z / static_cast<double>(selected.size());
}

}  // namespace

double relevance_loss(const SelectorParams& p, std::span<const FeatureId> selected,
                      std::span<const MetaFeatures> meta, double reward) {
  const double z = mean_score(p, selected, meta);
  // log(1 + e^-z) and log(1 + e^z) in overflow-safe form.
  const double softplus_neg = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  const double softplus_pos = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return reward * softplus_neg + (1.0 - reward) * softplus_pos;
}

std::vector<MetaFeatures> relevance_gradient(const SelectorParams& p,
                                             std::span<const FeatureId> selected,
                                             std::span<const MetaFeatures> meta, double reward) {
  const double err = sigmoid(mean_score(p, selected, meta)) - reward;
  const double scale = err / static_cast<double>(selected.size());
  std::vector<MetaFeatures> g(selected.size());
  for (std::size_t j = 0; j < selected.size(); ++j)
    for (std::size_t d = 0; d < kMetaDim; ++d) g[j][d] = scale * meta[j][d];
  return g;
}

double update_relevance(SelectorParams& p, std::span<const FeatureId> selected,
                        std::span<const MetaFeatures> meta, double reward) {
  const double loss = relevance_loss(p, selected, meta, reward);
  const auto g = relevance_gradient(p, selected, meta, reward);
  // A feature listed twice accumulates both gradient terms.
  for (std::size_t j = 0; j < selected.size(); ++j) {
    auto& w = p.weights[p.index_of(selected[j])];
    for (std::size_t d = 0; d < kMetaDim; ++d) w[d] -= p.learning_rate * g[j][d];
  }
  return loss;
}

}  // namespace echo::selector

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "echo/core/types.hpp"

namespace echo::selector {

using core::FeatureId;

enum class Mode {
  /// Run every gated feature model, then rank the predicted values.
  select_values,
  /// Rank feature models before running them; only the top-k are evaluated.
  select_models,
};

/// Per-feature inputs to the relevance score:
/// [model confidence, relevance-gate score, constant prior bias, uncertainty].
using MetaFeatures = std::array<double, 4>;
inline constexpr std::size_t kMetaDim = 4;

struct SelectorConfig {
  std::size_t k = 4;
  Mode mode = Mode::select_values;
  double learning_rate = 0.1;
  /// Starting relevance weights: the gate score plus a prior offset near the
  /// logit of a low click rate, so untried features do not outrank tried ones.
  MetaFeatures initial_weights{0.0, 1.0, -2.0, 0.0};
};

/// theta_S: relevance weights plus a Beta(alpha, beta) mismatch posterior per
/// feature, both indexed in registry order.
struct SelectorParams {
  std::vector<FeatureId> feature_ids;
  std::vector<MetaFeatures> weights;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::size_t k = 4;
  Mode mode = Mode::select_values;
  double learning_rate = 0.1;

  std::size_t index_of(const FeatureId& id) const;
  double sigma(std::size_t i) const noexcept { return alpha[i] / (alpha[i] + beta[i]); }

  std::uint64_t weights_checksum() const noexcept;
  std::uint64_t counters_checksum() const noexcept;
  std::uint64_t checksum() const noexcept;
  bool operator==(const SelectorParams&) const = default;
};

SelectorParams make_params(const core::FeatureRegistry& registry, const SelectorConfig& cfg = {});

struct SelectorOutput {
  /// Pool order.
  std::vector<FeatureId> feature_ids;
  std::vector<double> scores;
  std::vector<double> sigmas;
  std::vector<MetaFeatures> meta;
  /// Top-k by score descending, ties to the lower feature_id.
  std::vector<FeatureId> selected;
  bool short_selection = false;

  const MetaFeatures& meta_for(const FeatureId& id) const;
  double sigma_for(const FeatureId& id) const;
};

MetaFeatures meta_features(const SelectorParams& p, std::size_t feature_index, double confidence,
                           double gate_score);

double relevance_score(const SelectorParams& p, std::size_t feature_index,
                       const MetaFeatures& phi) noexcept;

/// Indices of the top-k scores; ties broken by the lower id.
std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const FeatureId> ids,
                               std::size_t k);

/// Scores and selects over a non-empty pool. `gate_scores` is aligned with
/// the pool entries. Throws std::invalid_argument on an empty pool.
SelectorOutput score_and_select(const SelectorParams& p, const core::CandidatePool& pool,
                                std::span<const double> gate_scores);

/// select_models variant: rank registry features before any model runs,
/// with 1 - sigma standing in for the unknown model confidence.
std::vector<FeatureId> select_models(const SelectorParams& p, std::span<const FeatureId> candidates,
                                     std::span<const double> gate_scores);

/// Binarized author-label loss: a class mismatch adds to alpha, a match to
/// beta; free text adds the cosine distance d to alpha and 1 - d to beta.
/// Abstentions leave the counters unchanged and return false.
bool update_uncertainty(SelectorParams& p, const FeatureId& feature_id,
                        const core::FeatureValue& predicted, const core::FeatureValue& author);

/// Binary cross-entropy between sigmoid(mean selected score) and the reward.
/// The meta-features are constants here: nothing upstream of the selector
/// receives gradient.
double relevance_loss(const SelectorParams& p, std::span<const FeatureId> selected,
                      std::span<const MetaFeatures> meta, double reward);

/// Gradient with respect to each selected feature's weights.
std::vector<MetaFeatures> relevance_gradient(const SelectorParams& p,
                                             std::span<const FeatureId> selected,
                                             std::span<const MetaFeatures> meta, double reward);

/// One SGD step of relevance_loss on the selected features only. Returns the
/// loss before the step.
double update_relevance(SelectorParams& p, std::span<const FeatureId> selected,
                        std::span<const MetaFeatures> meta, double reward);

}  // namespace echo::selector

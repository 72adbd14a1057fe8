#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "echo/core/text.hpp"
#include "echo/core/types.hpp"

namespace echo::features {

using core::FeatureId;
using core::FeatureKind;
using core::FeatureSpec;
using core::FeatureValue;
using core::SparseVector;

struct ModelConfig {
  std::size_t input_dim = core::kDefaultFeatureDim;
  /// Dimension of free-text label embeddings.
  std::size_t embed_dim = 128;
  double learning_rate = 0.1;
  /// Distinct author answers remembered per free-text feature.
  std::size_t label_bank_capacity = 512;
};

/// Parameters of one feature model M_i.
///
/// Binary/categorical: softmax regression, `weights` is (labels x input_dim)
/// row-major plus a bias per label. Free text: a linear map (embed_dim x
/// input_dim) whose normalized image is the predicted embedding; answers seen
/// so far are kept in `label_bank` so a prediction can be named.
struct FeatureModelParams {
  FeatureId feature_id;
  FeatureKind kind = FeatureKind::categorical;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<core::FreeText> label_bank;
  std::uint64_t update_count = 0;
  double learning_rate = 0.1;

  std::uint64_t checksum() const noexcept;
  bool finite() const noexcept;
  bool operator==(const FeatureModelParams&) const = default;
};

/// Fresh parameters. Categorical models start at zero; free-text maps start
/// from small non-negative values seeded by the feature id (a zero map has
/// no direction to normalize).
FeatureModelParams make_params(const FeatureSpec& spec, const ModelConfig& cfg = {});

std::vector<double> class_probabilities(const FeatureModelParams& p, const SparseVector& x);

/// Unnormalized linear image W x of a free-text model.
std::vector<double> project(const FeatureModelParams& p, const SparseVector& x);

FeatureValue predict(const FeatureModelParams& p, const SparseVector& x);
FeatureValue predict(const FeatureModelParams& p, std::string_view text);

/// Cross-entropy of the softmax model on (x, label).
double cross_entropy(const FeatureModelParams& p, const SparseVector& x, std::size_t label);
/// 1 - cos(W x, target); unclamped so the gradient is defined everywhere.
double cosine_loss(const FeatureModelParams& p, const SparseVector& x,
                   std::span<const double> target);

/// Dense gradient with the layout of FeatureModelParams::weights / bias.
struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};
Gradient cross_entropy_gradient(const FeatureModelParams& p, const SparseVector& x,
                                std::size_t label);
Gradient cosine_loss_gradient(const FeatureModelParams& p, const SparseVector& x,
                              std::span<const double> target);

/// One SGD step toward the author's answer. Returns false (and leaves the
/// parameters untouched) for abstentions and zero-featurized input.
bool update_from_author(FeatureModelParams& p, const SparseVector& x,
                        const FeatureValue& author_value, const ModelConfig& cfg = {});
bool update_from_author(FeatureModelParams& p, std::string_view text,
                        const FeatureValue& author_value, const ModelConfig& cfg = {});

/// Author answer in model space: class value, or free text with its embedding.
FeatureValue author_value(const FeatureSpec& spec, std::string_view free_text,
                          const ModelConfig& cfg = {});

/// Slot for externally-backed feature models (e.g. prompted LLMs).
class FeatureModelAdapter {
 public:
  virtual ~FeatureModelAdapter() = default;
  virtual FeatureValue predict(const FeatureSpec& spec, std::string_view text) = 0;
  virtual void update(const FeatureSpec& spec, std::string_view text,
                      const FeatureValue& author_value) = 0;
};

/// The ensemble M = {M_1..M_n}, aligned with a registry.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(const core::FeatureRegistry& registry, ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return params_.size(); }
  const FeatureModelParams& params(std::size_t i) const { return params_.at(i); }
  FeatureModelParams& params(std::size_t i) { return params_.at(i); }
  const std::vector<FeatureModelParams>& all() const noexcept { return params_; }

  void set_adapter(std::size_t i, std::shared_ptr<FeatureModelAdapter> adapter);

  FeatureValue predict(const core::FeatureRegistry& registry, std::size_t i,
                       std::string_view text, const SparseVector& x) const;
  bool update(const core::FeatureRegistry& registry, std::size_t i, std::string_view text,
              const SparseVector& x, const FeatureValue& author);

  std::vector<std::uint64_t> checksums() const;
  std::uint64_t checksum() const;

 private:
  ModelConfig cfg_;
  std::vector<FeatureModelParams> params_;
  std::vector<std::shared_ptr<FeatureModelAdapter>> adapters_;
};

/// One value per gated feature, in registry order. Unknown ids throw
/// std::out_of_range.
core::CandidatePool predict_pool(const core::FeatureRegistry& registry, const Ensemble& models,
                                 std::string_view text, std::span<const FeatureId> gated_ids);

}  // namespace echo::features

#include "echo/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "echo/core/checksum.hpp"
#include "echo/core/rng.hpp"

namespace echo::features {

std::uint64_t FeatureModelParams::checksum() const noexcept {
  core::Checksum c;
  c.add(std::string_view(feature_id));
  c.add(static_cast<std::uint64_t>(kind));
  c.add(weights).add(bias);
  for (const auto& e : label_bank) {
    c.add(std::string_view(e.text));
    c.add(e.embedding);
  }
  c.add(update_count).add(learning_rate);
  return c.value();
}

bool FeatureModelParams::finite() const noexcept {
  auto ok = [](double x) { return std::isfinite(x); };
  return std::all_of(weights.begin(), weights.end(), ok) && std::all_of(bias.begin(), bias.end(), ok);
}

FeatureModelParams make_params(const FeatureSpec& spec, const ModelConfig& cfg) {
  FeatureModelParams p;
  p.feature_id = spec.feature_id;
  p.kind = spec.kind;
  p.input_dim = cfg.input_dim;
  p.learning_rate = cfg.learning_rate;
  if (spec.kind == FeatureKind::free_text) {
    p.output_dim = cfg.embed_dim;
    p.weights.resize(p.output_dim * p.input_dim);
    auto rng = core::Rng::substream(core::RngSeed{0}, "free_text_init:" + spec.feature_id);
    for (double& w : p.weights) w = 0.01 * rng.uniform();
  } else {
    p.output_dim = spec.label_space.size();
    p.weights.assign(p.output_dim * p.input_dim, 0.0);
    p.bias.assign(p.output_dim, 0.0);
  }
  return p;
}

namespace {

void check_input(const FeatureModelParams& p, const SparseVector& x) {
  if (x.dim != p.input_dim)
    throw std::invalid_argument("featurized input dimension does not match model " + p.feature_id);
}

std::vector<double> logits(const FeatureModelParams& p, const SparseVector& x) {
  std::vector<double> z(p.bias);
  for (std::size_t l = 0; l < p.output_dim; ++l) {
    const double* row = p.weights.data() + l * p.input_dim;
    for (std::size_t k = 0; k < x.nnz(); ++k) z[l] += row[x.index[k]] * x.value[k];
  }
  return z;
}

void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::vector<double> class_probabilities(const FeatureModelParams& p, const SparseVector& x) {
  check_input(p, x);
  auto z = logits(p, x);
  softmax_inplace(z);
  return z;
}

std::vector<double> project(const FeatureModelParams& p, const SparseVector& x) {
  check_input(p, x);
  std::vector<double> u(p.output_dim, 0.0);
  for (std::size_t e = 0; e < p.output_dim; ++e) {
    const double* row = p.weights.data() + e * p.input_dim;
    for (std::size_t k = 0; k < x.nnz(); ++k) u[e] += row[x.index[k]] * x.value[k];
  }
  return u;
}

FeatureValue predict(const FeatureModelParams& p, const SparseVector& x) {
  if (p.kind == FeatureKind::free_text) {
    if (x.empty || x.nnz() == 0) {
      FeatureValue v = FeatureValue::free_text("", std::vector<double>(p.output_dim, 0.0), 0.0);
      v.abstain = true;
      return v;
    }
    auto u = project(p, x);
    core::normalize(u);
    std::string best_text;
    double best = 1.0;
    for (const auto& entry : p.label_bank) {
      const double d = core::cosine_distance(u, entry.embedding);
      if (d < best || best_text.empty()) {
        best = d;
        best_text = entry.text;
      }
    }
    auto v = FeatureValue::free_text(std::move(best_text), std::move(u), 1.0 - best);
    return v;
  }

  const auto probs = x.empty || x.nnz() == 0 ? std::vector<double>{} : class_probabilities(p, x);
  if (probs.empty()) {
    FeatureValue v = p.kind == FeatureKind::binary ? FeatureValue::binary(true, 0.0)
                                                   : FeatureValue::categorical(0, 0.0);
    v.abstain = true;
    return v;
  }
  // max_element returns the first maximum: ties go to the lowest option.
  const auto best = static_cast<std::size_t>(
      std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
  if (p.kind == FeatureKind::binary) return FeatureValue::binary(best == 0, probs[best]);
  return FeatureValue::categorical(best, probs[best]);
}

FeatureValue predict(const FeatureModelParams& p, std::string_view text) {
  return predict(p, core::featurize(text, p.input_dim));
}

double cross_entropy(const FeatureModelParams& p, const SparseVector& x, std::size_t label) {
  auto z = logits(p, x);
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return -(z.at(label) - m - std::log(s));
}

double cosine_loss(const FeatureModelParams& p, const SparseVector& x,
                   std::span<const double> target) {
  auto u = project(p, x);
  const double n = norm2(u);
  if (n == 0.0) return 1.0;
  return 1.0 - core::dot(u, target) / n;
}

Gradient cross_entropy_gradient(const FeatureModelParams& p, const SparseVector& x,
                                std::size_t label) {
  auto probs = class_probabilities(p, x);
  probs.at(label) -= 1.0;
  Gradient g;
  g.weights.assign(p.weights.size(), 0.0);
  g.bias = probs;
  for (std::size_t l = 0; l < p.output_dim; ++l)
    for (std::size_t k = 0; k < x.nnz(); ++k)
      g.weights[l * p.input_dim + x.index[k]] = probs[l] * x.value[k];
  return g;
}

namespace {

/// dL/du for L = 1 - (u . t) / |u|.
std::vector<double> cosine_loss_du(std::span<const double> u, std::span<const double> target) {
  const double n = norm2(u);
  std::vector<double> g(u.size(), 0.0);
  if (n == 0.0) return g;
  const double cos = core::dot(u, target) / n;
  for (std::size_t e = 0; e < u.size(); ++e) g[e] = -(target[e] - cos * u[e] / n) / n;
  return g;
}

}  // namespace

Gradient cosine_loss_gradient(const FeatureModelParams& p, const SparseVector& x,
                              std::span<const double> target) {
  const auto du = cosine_loss_du(project(p, x), target);
  Gradient g;
  g.weights.assign(p.weights.size(), 0.0);
  for (std::size_t e = 0; e < p.output_dim; ++e)
    for (std::size_t k = 0; k < x.nnz(); ++k)
      g.weights[e * p.input_dim + x.index[k]] = du[e] * x.value[k];
  return g;
}

bool update_from_author(FeatureModelParams& p, const SparseVector& x,
                        const FeatureValue& author, const ModelConfig& cfg) {
  if (author.abstain || x.empty || x.nnz() == 0) return false;
  check_input(p, x);
  const double lr = p.learning_rate;

  if (p.kind == FeatureKind::free_text) {
    const auto* ft = std::get_if<core::FreeText>(&author.value);
    if (ft == nullptr) throw std::invalid_argument("free-text model given a class answer");
    if (ft->embedding.size() != p.output_dim)
      throw std::invalid_argument("author embedding dimension mismatch for " + p.feature_id);
    const auto du = cosine_loss_du(project(p, x), ft->embedding);
    // Only the columns hit by x receive gradient.
    for (std::size_t e = 0; e < p.output_dim; ++e) {
      double* row = p.weights.data() + e * p.input_dim;
      for (std::size_t k = 0; k < x.nnz(); ++k) row[x.index[k]] -= lr * du[e] * x.value[k];
    }
    const bool known = std::any_of(p.label_bank.begin(), p.label_bank.end(),
                                   [&](const core::FreeText& b) { return b.text == ft->text; });
    if (!known && p.label_bank.size() < cfg.label_bank_capacity && !ft->text.empty())
      p.label_bank.push_back(*ft);
  } else {
    const std::size_t label = author.class_index();
    if (label >= p.output_dim) throw std::invalid_argument("author label out of range");
    auto probs = class_probabilities(p, x);
    probs[label] -= 1.0;
    for (std::size_t l = 0; l < p.output_dim; ++l) {
      double* row = p.weights.data() + l * p.input_dim;
      for (std::size_t k = 0; k < x.nnz(); ++k) row[x.index[k]] -= lr * probs[l] * x.value[k];
      p.bias[l] -= lr * probs[l];
    }
  }
  ++p.update_count;
  return true;
}

bool update_from_author(FeatureModelParams& p, std::string_view text,
                        const FeatureValue& author, const ModelConfig& cfg) {
  return update_from_author(p, core::featurize(text, p.input_dim), author, cfg);
}

FeatureValue author_value(const FeatureSpec& spec, std::string_view free_text,
                          const ModelConfig& cfg) {
  const auto text = core::trim(free_text);
  if (spec.kind == FeatureKind::free_text)
    return FeatureValue::free_text(text, core::embed(text, cfg.embed_dim));
  // Typed answer for a class feature: closest option by hashed-text cosine.
  const auto a = core::featurize(text, cfg.input_dim);
  std::size_t best = 0;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < spec.label_space.size(); ++i) {
    const double s = core::cosine_similarity(a, core::featurize(spec.label_space[i], cfg.input_dim));
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  if (spec.kind == FeatureKind::binary) return FeatureValue::binary(best == 0);
  return FeatureValue::categorical(best);
}

Ensemble::Ensemble(const core::FeatureRegistry& registry, ModelConfig cfg) : cfg_(cfg) {
  params_.reserve(registry.size());
  for (const auto& spec : registry.specs()) params_.push_back(make_params(spec, cfg_));
  adapters_.resize(registry.size());
}

void Ensemble::set_adapter(std::size_t i, std::shared_ptr<FeatureModelAdapter> adapter) {
  adapters_.at(i) = std::move(adapter);
}

FeatureValue Ensemble::predict(const core::FeatureRegistry& registry, std::size_t i,
                               std::string_view text, const SparseVector& x) const {
  if (adapters_.at(i)) return adapters_[i]->predict(registry.at(i), text);
  return features::predict(params_.at(i), x);
}

bool Ensemble::update(const core::FeatureRegistry& registry, std::size_t i, std::string_view text,
                      const SparseVector& x, const FeatureValue& author) {
  if (author.abstain) return false;
  if (adapters_.at(i)) {
    adapters_[i]->update(registry.at(i), text, author);
    ++params_[i].update_count;
    return true;
  }
  return update_from_author(params_.at(i), x, author, cfg_);
}

std::vector<std::uint64_t> Ensemble::checksums() const {
  std::vector<std::uint64_t> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.checksum());
  return out;
}

std::uint64_t Ensemble::checksum() const {
  core::Checksum c;
  for (auto v : checksums()) c.add(v);
  return c.value();
}

core::CandidatePool predict_pool(const core::FeatureRegistry& registry, const Ensemble& models,
                                 std::string_view text, std::span<const FeatureId> gated_ids) {
  std::vector<std::size_t> idx;
  idx.reserve(gated_ids.size());
  for (const auto& id : gated_ids) idx.push_back(registry.index_of(id));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

  core::CandidatePool pool;
  const auto x = core::featurize(text, models.config().input_dim);
  for (auto i : idx) pool.entries.push_back({registry.at(i).feature_id, models.predict(registry, i, text, x)});
  return pool;
}

}  // namespace echo::features

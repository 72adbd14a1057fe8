#include "echo/core/types.hpp"

#include <cmath>
#include <set>

namespace echo::core {

std::string_view to_string(FeatureKind k) noexcept {
  switch (k) {
    case FeatureKind::binary: return "binary";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::free_text: return "free_text";
  }
  return "categorical";
}

FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "binary") return FeatureKind::binary;
  if (s == "categorical") return FeatureKind::categorical;
  if (s == "free_text") return FeatureKind::free_text;
  throw std::invalid_argument("unknown feature kind: " + std::string(s));
}

void validate(const FeatureSpec& spec) {
  if (spec.feature_id.empty()) throw std::invalid_argument("feature_id must be non-empty");
  const auto where = "feature " + spec.feature_id + ": ";
  switch (spec.kind) {
    case FeatureKind::binary:
      if (spec.label_space.size() != 2 || spec.label_space[0] == spec.label_space[1])
        throw std::invalid_argument(where + "binary label_space must be two distinct options");
      break;
    case FeatureKind::categorical: {
      std::set<std::string> distinct(spec.label_space.begin(), spec.label_space.end());
      if (spec.label_space.size() < 2 || distinct.size() != spec.label_space.size())
        throw std::invalid_argument(where + "categorical label_space needs >= 2 distinct options");
      break;
    }
    case FeatureKind::free_text:
      break;
  }
}

FeatureKind FeatureValue::kind() const noexcept {
  switch (value.index()) {
    case 0: return FeatureKind::binary;
    case 1: return FeatureKind::categorical;
    default: return FeatureKind::free_text;
  }
}

std::size_t FeatureValue::class_index() const {
  if (const auto* b = std::get_if<bool>(&value)) return *b ? 0 : 1;
  if (const auto* i = std::get_if<std::size_t>(&value)) return *i;
  throw std::logic_error("free-text value has no class index");
}

std::string value_text(const FeatureSpec& spec, const FeatureValue& v) {
  if (const auto* ft = std::get_if<FreeText>(&v.value)) return ft->text;
  const auto i = v.class_index();
  return i < spec.label_space.size() ? spec.label_space[i] : std::string{};
}

FeatureRegistry::FeatureRegistry(std::vector<FeatureSpec> specs) {
  for (auto& s : specs) add(std::move(s));
}

void FeatureRegistry::add(FeatureSpec spec) {
  if (spec.kind == FeatureKind::binary && spec.label_space.empty()) spec.label_space = {"Yes", "No"};
  validate(spec);
  if (by_id_.count(spec.feature_id) != 0)
    throw std::invalid_argument("duplicate feature_id: " + spec.feature_id);
  by_id_.emplace(spec.feature_id, specs_.size());
  specs_.push_back(std::move(spec));
}

std::size_t FeatureRegistry::index_of(const FeatureId& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("unknown feature_id: " + id);
  return it->second;
}

const PoolEntry* CandidatePool::find(const FeatureId& id) const noexcept {
  for (const auto& e : entries)
    if (e.feature_id == id) return &e;
  return nullptr;
}

}  // namespace echo::core

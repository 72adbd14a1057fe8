#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace echo::core {

enum class AuthorRole { user, assistant };

struct Message {
  std::string session_id;
  std::string user_id;
  std::uint64_t turn_index = 0;
  AuthorRole role = AuthorRole::user;
  std::string text;
  std::int64_t timestamp_ms = 0;
};

enum class FeatureKind { binary, categorical, free_text };

std::string_view to_string(FeatureKind k) noexcept;
FeatureKind feature_kind_from_string(std::string_view s);

using FeatureId = std::string;

struct FeatureSpec {
  FeatureId feature_id;
  std::string name;
  FeatureKind kind = FeatureKind::categorical;
  /// Option texts. Binary features use {"Yes", "No"}; index 0 means true.
  std::vector<std::string> label_space;
  std::vector<std::string> relevance_keywords;
  std::string description;
  /// Survey question; "{tokens}" is replaced by key tokens of the message.
  std::string question_template;

  std::size_t label_count() const noexcept {
    return kind == FeatureKind::free_text ? 0 : label_space.size();
  }
};

/// Throws std::invalid_argument when the feature spec breaks an invariant.
void validate(const FeatureSpec& spec);

struct FreeText {
  std::string text;
  std::vector<double> embedding;  // unit norm, or all-zero when abstaining
  bool operator==(const FreeText&) const = default;
};

/// A predicted or author-supplied value for one feature.
struct FeatureValue {
  std::variant<bool, std::size_t, FreeText> value;
  double confidence = 0.0;
  /// The model had no usable input (zero featurization or empty label bank).
  bool abstain = false;

  FeatureKind kind() const noexcept;
  /// Class index for binary (true -> 0) and categorical values.
  std::size_t class_index() const;

  static FeatureValue binary(bool v, double confidence = 1.0) { return {v, confidence, false}; }
  static FeatureValue categorical(std::size_t i, double confidence = 1.0) {
    return {i, confidence, false};
  }
  static FeatureValue free_text(std::string text, std::vector<double> embedding,
                                double confidence = 1.0) {
    return {FreeText{std::move(text), std::move(embedding)}, confidence, false};
  }
};

/// Display text of a value ("Yes"/"No", the option label, or the free text).
std::string value_text(const FeatureSpec& spec, const FeatureValue& v);

/// Ordered, id-unique feature vocabulary.
class FeatureRegistry {
 public:
  FeatureRegistry() = default;
  explicit FeatureRegistry(std::vector<FeatureSpec> specs);

  void add(FeatureSpec spec);
  std::size_t size() const noexcept { return specs_.size(); }
  bool empty() const noexcept { return specs_.empty(); }
  const std::vector<FeatureSpec>& specs() const noexcept { return specs_; }
  const FeatureSpec& at(std::size_t i) const { return specs_.at(i); }
  const FeatureSpec& at(const FeatureId& id) const { return specs_.at(index_of(id)); }
  std::size_t index_of(const FeatureId& id) const;
  bool contains(const FeatureId& id) const noexcept { return by_id_.count(id) != 0; }

 private:
  std::vector<FeatureSpec> specs_;
  std::unordered_map<FeatureId, std::size_t> by_id_;
};

struct PoolEntry {
  FeatureId feature_id;
  FeatureValue value;
};

/// Predicted values for one message, in registry order.
struct CandidatePool {
  std::vector<PoolEntry> entries;
  std::string session_id;
  std::uint64_t turn_index = 0;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
  const PoolEntry* find(const FeatureId& id) const noexcept;
};

}  // namespace echo::core

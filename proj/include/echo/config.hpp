#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "echo/core/types.hpp"
#include "echo/engine.hpp"

namespace echo::config {

/// A configuration problem tied to one key (or "<file>" for I/O and syntax).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Parsed key/value file. Grammar (one item per line):
///
///   # comment                 whole-line comment; also allowed after a value
///   [section]                 later keys become "section.key"
///   key = value               key: [A-Za-z0-9_.-]+
///
/// Values are a double-quoted string (escapes \" \\ \n \t), a bare word or
/// number, true/false, or a list `[v, v, ...]` of quoted strings or bare words.
/// Duplicate keys are an error.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::vector<std::string> keys() const;

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Marks a key as understood; see unknown_keys().
  void mark_used(const std::string& key) const { used_.insert({key, true}); }
  std::vector<std::string> unknown_keys() const;

  void set(const std::string& key, std::string raw) { values_[key] = std::move(raw); }

 private:
  std::map<std::string, std::string> values_;  // raw value text
  mutable std::map<std::string, bool> used_;
};

/// Process-level settings wrapped around the engine.
struct ServiceConfig {
  EngineConfig engine;
  std::filesystem::path registry_path;
  std::filesystem::path catalog_path;
  std::filesystem::path data_dir = "data";
  int port = 8080;
};

/// Fills every engine key present in `kv` (see README for the key list).
void apply_engine_keys(const KeyValueFile& kv, EngineConfig& cfg);
/// Throws ConfigError naming the first invalid field.
void validate(const EngineConfig& cfg);

/// Parses, applies ECHO_DATA_DIR, resolves relative paths against the config
/// file's directory and validates. Unknown keys are rejected.
ServiceConfig load_service_config(const std::filesystem::path& path);
ServiceConfig service_config_from(const KeyValueFile& kv, const std::filesystem::path& base_dir);

/// Renders the engine settings in the same format; parse(render(c)) == c.
std::string render_engine_config(const EngineConfig& cfg);

std::string quote(std::string_view s);

/// Feature registry as line-delimited JSON: {feature_id, name, kind,
/// label_space[], relevance_keywords[], description, question_template}.
core::FeatureRegistry registry_from_jsonl(std::string_view text);
std::string registry_to_jsonl(const core::FeatureRegistry& registry);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace echo::config

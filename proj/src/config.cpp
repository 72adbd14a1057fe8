#include "echo/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "echo/core/event_log.hpp"

namespace echo::config {

namespace {

bool valid_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

// Raw value up to an unquoted '#'.
std::string strip_comment(std::string_view v) {
  bool quoted = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && quoted) {
      ++i;
      continue;
    }
    if (v[i] == '"') quoted = !quoted;
    if (v[i] == '#' && !quoted) return core::trim(v.substr(0, i));
  }
  return core::trim(v);
}

std::string unquote(const std::string& key, std::string_view raw) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') return std::string(raw);
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\\') {
      if (i + 2 >= raw.size()) throw ConfigError(key, "dangling escape");
      c = raw[++i];
      switch (c) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"':
        case '\\': out += c; break;
        default: throw ConfigError(key, std::string("unknown escape \\") + c);
      }
    } else if (c == '"') {
      throw ConfigError(key, "unescaped quote inside string");
    } else {
      out += c;
    }
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = core::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    const auto where = "line " + std::to_string(line_no);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError("<file>", where + ": unterminated section header");
      section = core::trim(std::string_view(line).substr(1, close - 1));
      for (char c : section)
        if (!valid_key_char(c)) throw ConfigError("<file>", where + ": bad section name '" + section + "'");
      if (!strip_comment(std::string_view(line).substr(close + 1)).empty())
        throw ConfigError("<file>", where + ": text after section header");
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("<file>", where + ": expected key = value");
      const auto name = core::trim(std::string_view(line).substr(0, eq));
      if (name.empty()) throw ConfigError("<file>", where + ": empty key");
      for (char c : name)
        if (!valid_key_char(c)) throw ConfigError("<file>", where + ": bad key '" + name + "'");
      const auto key = section.empty() ? name : section + "." + name;
      if (kv.values_.count(key)) throw ConfigError(key, where + ": duplicate key");
      kv.values_[key] = strip_comment(std::string_view(line).substr(eq + 1));
    }
    if (end == text.size()) break;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string KeyValueFile::get_string(const std::string& key) const {
  mark_used(key);
  return unquote(key, values_.at(key));
}

double KeyValueFile::get_double(const std::string& key) const {
  const auto s = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw ConfigError(key, "expected a number, got '" + s + "'");
  return v;
}

std::int64_t KeyValueFile::get_int(const std::string& key) const {
  const auto s = get_string(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(key, "expected an integer, got '" + s + "'");
  return v;
}

std::size_t KeyValueFile::get_size(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError(key, "must be non-negative");
  return static_cast<std::size_t>(v);
}

bool KeyValueFile::get_bool(const std::string& key) const {
  const auto s = get_string(key);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + s + "'");
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key) const {
  mark_used(key);
  const auto& raw = values_.at(key);
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
    throw ConfigError(key, "expected a list [a, b, ...]");
  std::vector<std::string> out;
  std::string item;
  bool quoted = false;
  bool any = false;
  const auto body = std::string_view(raw).substr(1, raw.size() - 2);
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (quoted && c == '\\' && i + 1 < body.size()) {
      item += c;
      item += body[++i];
      continue;
    }
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      const auto t = core::trim(item);
      if (t.empty()) throw ConfigError(key, "empty list item");
      out.push_back(unquote(key, t));
      item.clear();
      any = true;
      continue;
    }
    item += c;
  }
  if (quoted) throw ConfigError(key, "unterminated string in list");
  const auto t = core::trim(item);
  if (!t.empty()) {
    out.push_back(unquote(key, t));
  } else if (any) {
    throw ConfigError(key, "empty list item");
  }
  return out;
}

std::vector<std::string> KeyValueFile::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

namespace {

using Setter = std::function<void(const KeyValueFile&, const std::string&, EngineConfig&)>;

const std::vector<std::pair<std::string, Setter>>& engine_keys() {
  static const std::vector<std::pair<std::string, Setter>> keys = {
      {"seed", [](auto& kv, auto& k, auto& c) { c.seed = static_cast<std::uint64_t>(kv.get_size(k)); }},
      {"engine.echo_arm", [](auto& kv, auto& k, auto& c) { c.echo_arm = kv.get_bool(k); }},
      {"engine.baseline_arm", [](auto& kv, auto& k, auto& c) { c.baseline_arm = kv.get_bool(k); }},
      {"engine.skip_feedback", [](auto& kv, auto& k, auto& c) { c.skip_feedback = kv.get_bool(k); }},
      {"model.input_dim", [](auto& kv, auto& k, auto& c) { c.model.input_dim = kv.get_size(k); }},
      {"model.embed_dim", [](auto& kv, auto& k, auto& c) { c.model.embed_dim = kv.get_size(k); }},
      {"model.learning_rate", [](auto& kv, auto& k, auto& c) { c.model.learning_rate = kv.get_double(k); }},
      {"model.label_bank_capacity",
       [](auto& kv, auto& k, auto& c) { c.model.label_bank_capacity = kv.get_size(k); }},
      {"selector.k", [](auto& kv, auto& k, auto& c) { c.selector.k = kv.get_size(k); }},
      {"selector.mode",
       [](auto& kv, auto& k, auto& c) {
         const auto m = kv.get_string(k);
         if (m == "select_values") {
           c.selector.mode = selector::Mode::select_values;
         } else if (m == "select_models") {
           c.selector.mode = selector::Mode::select_models;
         } else {
           throw ConfigError(k, "expected select_values or select_models, got '" + m + "'");
         }
       }},
      {"selector.learning_rate",
       [](auto& kv, auto& k, auto& c) { c.selector.learning_rate = kv.get_double(k); }},
      {"selector.initial_weights",
       [](auto& kv, auto& k, auto& c) {
         const auto items = kv.get_list(k);
         if (items.size() != selector::kMetaDim) throw ConfigError(k, "expected 4 numbers");
         for (std::size_t i = 0; i < items.size(); ++i) {
           char* end = nullptr;
           c.selector.initial_weights[i] = std::strtod(items[i].c_str(), &end);
           if (end != items[i].c_str() + items[i].size()) throw ConfigError(k, "bad number '" + items[i] + "'");
         }
       }},
      {"tasks.question_count", [](auto& kv, auto& k, auto& c) { c.tasks.question_count = kv.get_size(k); }},
      {"tasks.option_count", [](auto& kv, auto& k, auto& c) { c.tasks.option_count = kv.get_size(k); }},
      {"tasks.min_read_seconds",
       [](auto& kv, auto& k, auto& c) { c.tasks.min_read_seconds = kv.get_double(k); }},
      {"tasks.reward_per_task", [](auto& kv, auto& k, auto& c) { c.tasks.reward_per_task = kv.get_double(k); }},
      {"filter.greeting_lexicon",
       [](auto& kv, auto& k, auto& c) { c.filter.greeting_lexicon = kv.get_list(k); }},
      {"filter.min_tokens", [](auto& kv, auto& k, auto& c) { c.filter.min_tokens = kv.get_size(k); }},
      {"filter.duplicate_window", [](auto& kv, auto& k, auto& c) { c.filter.duplicate_window = kv.get_size(k); }},
      {"filter.gate_threshold", [](auto& kv, auto& k, auto& c) { c.filter.gate_threshold = kv.get_double(k); }},
      {"filter.messages_between_surveys",
       [](auto& kv, auto& k, auto& c) { c.filter.messages_between_surveys = kv.get_size(k); }},
      {"filter.rapid_interval_ms",
       [](auto& kv, auto& k, auto& c) { c.filter.rapid_interval_ms = kv.get_int(k); }},
      {"filter.rapid_ban_count", [](auto& kv, auto& k, auto& c) { c.filter.rapid_ban_count = kv.get_size(k); }},
      {"filter.reward_seeking_ban_score",
       [](auto& kv, auto& k, auto& c) { c.filter.reward_seeking_ban_score = kv.get_double(k); }},
      {"filter.reward_seeking_min_messages",
       [](auto& kv, auto& k, auto& c) { c.filter.reward_seeking_min_messages = kv.get_size(k); }},
      {"filter.near_duplicate_cosine",
       [](auto& kv, auto& k, auto& c) { c.filter.near_duplicate_cosine = kv.get_double(k); }},
      {"recommend.display_threshold",
       [](auto& kv, auto& k, auto& c) { c.recommend.display_threshold = kv.get_double(k); }},
      {"recommend.merge_window_ms",
       [](auto& kv, auto& k, auto& c) { c.recommend.merge_window_ms = kv.get_int(k); }},
  };
  return keys;
}

void check(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

bool unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void apply_engine_keys(const KeyValueFile& kv, EngineConfig& cfg) {
  for (const auto& [key, setter] : engine_keys())
    if (kv.has(key)) setter(kv, key, cfg);
  cfg.recommend.dim = cfg.model.input_dim;
  cfg.filter.survey_question_count = cfg.tasks.question_count;
}

void validate(const EngineConfig& c) {
  check(c.model.input_dim > 0, "model.input_dim", "must be positive");
  check(c.model.embed_dim > 0, "model.embed_dim", "must be positive");
  check(c.model.learning_rate > 0.0, "model.learning_rate", "must be positive");
  check(c.model.label_bank_capacity > 0, "model.label_bank_capacity", "must be positive");
  check(c.selector.k > 0, "selector.k", "must be positive");
  check(c.selector.learning_rate > 0.0, "selector.learning_rate", "must be positive");
  check(c.tasks.question_count > 0, "tasks.question_count", "must be positive");
  check(c.tasks.question_count <= c.selector.k, "tasks.question_count",
        "must not exceed selector.k (" + std::to_string(c.selector.k) + ")");
  check(c.tasks.option_count >= 2, "tasks.option_count", "must be at least 2");
  check(c.tasks.min_read_seconds >= 0.0, "tasks.min_read_seconds", "must be non-negative");
  check(c.tasks.reward_per_task >= 0.0, "tasks.reward_per_task", "must be non-negative");
  check(c.filter.min_tokens > 0, "filter.min_tokens", "must be positive");
  check(unit_interval(c.filter.gate_threshold), "filter.gate_threshold", "must be in [0, 1]");
  check(c.filter.messages_between_surveys > 0, "filter.messages_between_surveys", "must be positive");
  check(c.filter.rapid_interval_ms >= 0, "filter.rapid_interval_ms", "must be non-negative");
  check(unit_interval(c.filter.reward_seeking_ban_score), "filter.reward_seeking_ban_score",
        "must be in [0, 1]");
  check(c.filter.near_duplicate_cosine >= -1.0 && c.filter.near_duplicate_cosine <= 1.0,
        "filter.near_duplicate_cosine", "must be in [-1, 1]");
  check(c.recommend.display_threshold >= -1.0 && c.recommend.display_threshold <= 1.0,
        "recommend.display_threshold", "must be in [-1, 1]");
  check(c.recommend.merge_window_ms >= 0, "recommend.merge_window_ms", "must be non-negative");
}

ServiceConfig service_config_from(const KeyValueFile& kv, const std::filesystem::path& base_dir) {
  ServiceConfig sc;
  apply_engine_keys(kv, sc.engine);
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };
  if (!kv.has("registry")) throw ConfigError("registry", "missing (path to the feature registry JSONL)");
  if (!kv.has("catalog")) throw ConfigError("catalog", "missing (path to the product catalog JSONL)");
  sc.registry_path = resolve(kv.get_string("registry"));
  sc.catalog_path = resolve(kv.get_string("catalog"));
  if (kv.has("data_dir")) sc.data_dir = resolve(kv.get_string("data_dir"));
  if (const char* env = std::getenv("ECHO_DATA_DIR"); env != nullptr && *env != '\0') sc.data_dir = env;
  if (kv.has("port")) {
    const auto port = kv.get_int("port");
    check(port >= 0 && port <= 65535, "port", "must be in [0, 65535]");
    sc.port = static_cast<int>(port);
  }
  if (const auto unknown = kv.unknown_keys(); !unknown.empty())
    throw ConfigError(unknown.front(), "unknown key");
  validate(sc.engine);
  return sc;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  const auto kv = KeyValueFile::load(path);
  return service_config_from(kv, path.parent_path());
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string render_engine_config(const EngineConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "seed = " << c.seed << "\n\n[engine]\n"
    << "echo_arm = " << b(c.echo_arm) << "\nbaseline_arm = " << b(c.baseline_arm)
    << "\nskip_feedback = " << b(c.skip_feedback) << "\n\n[model]\n"
    << "input_dim = " << c.model.input_dim << "\nembed_dim = " << c.model.embed_dim
    << "\nlearning_rate = " << format_double(c.model.learning_rate)
    << "\nlabel_bank_capacity = " << c.model.label_bank_capacity << "\n\n[selector]\n"
    << "k = " << c.selector.k << "\nmode = "
    << (c.selector.mode == selector::Mode::select_values ? "select_values" : "select_models")
    << "\nlearning_rate = " << format_double(c.selector.learning_rate) << "\ninitial_weights = [";
  for (std::size_t i = 0; i < c.selector.initial_weights.size(); ++i)
    o << (i ? ", " : "") << format_double(c.selector.initial_weights[i]);
  o << "]\n\n[tasks]\n"
    << "question_count = " << c.tasks.question_count << "\noption_count = " << c.tasks.option_count
    << "\nmin_read_seconds = " << format_double(c.tasks.min_read_seconds)
    << "\nreward_per_task = " << format_double(c.tasks.reward_per_task) << "\n\n[filter]\n"
    << "greeting_lexicon = [";
  for (std::size_t i = 0; i < c.filter.greeting_lexicon.size(); ++i)
    o << (i ? ", " : "") << quote(c.filter.greeting_lexicon[i]);
  o << "]\nmin_tokens = " << c.filter.min_tokens << "\nduplicate_window = " << c.filter.duplicate_window
    << "\ngate_threshold = " << format_double(c.filter.gate_threshold)
    << "\nmessages_between_surveys = " << c.filter.messages_between_surveys
    << "\nrapid_interval_ms = " << c.filter.rapid_interval_ms
    << "\nrapid_ban_count = " << c.filter.rapid_ban_count
    << "\nreward_seeking_ban_score = " << format_double(c.filter.reward_seeking_ban_score)
    << "\nreward_seeking_min_messages = " << c.filter.reward_seeking_min_messages
    << "\nnear_duplicate_cosine = " << format_double(c.filter.near_duplicate_cosine) << "\n\n[recommend]\n"
    << "display_threshold = " << format_double(c.recommend.display_threshold)
    << "\nmerge_window_ms = " << c.recommend.merge_window_ms << "\n";
  return o.str();
}

core::FeatureRegistry registry_from_jsonl(std::string_view text) {
  core::FeatureRegistry registry;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (core::trim(line).empty()) continue;
    const auto where = "registry line " + std::to_string(line_no);
    try {
      const auto j = core::Json::parse(line);
      core::FeatureSpec s;
      s.feature_id = j.at("feature_id").get<std::string>();
      s.name = j.value("name", s.feature_id);
      s.kind = core::feature_kind_from_string(j.at("kind").get<std::string>());
      s.label_space = j.value("label_space", std::vector<std::string>{});
      s.relevance_keywords = j.value("relevance_keywords", std::vector<std::string>{});
      s.description = j.value("description", std::string{});
      s.question_template = j.value("question_template", std::string{});
      registry.add(std::move(s));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where, e.what());
    }
  }
  return registry;
}

std::string registry_to_jsonl(const core::FeatureRegistry& registry) {
  std::string out;
  for (const auto& s : registry.specs()) {
    core::Json j;
    j["feature_id"] = s.feature_id;
    j["name"] = s.name;
    j["kind"] = std::string(core::to_string(s.kind));
    j["label_space"] = s.label_space;
    j["relevance_keywords"] = s.relevance_keywords;
    j["description"] = s.description;
    j["question_template"] = s.question_template;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace echo::config

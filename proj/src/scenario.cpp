#include <charconv>
#include <cstdlib>
#include <sstream>

#include "echo/sim.hpp"

namespace echo::sim {

namespace {

using config::ConfigError;

double parse_number(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(key, "bad number '" + s + "'");
  return v;
}

void check(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const char* arms_name(Arms a) {
  switch (a) {
    case Arms::echo: return "echo";
    case Arms::baseline: return "baseline";
    case Arms::both: return "both";
  }
  return "both";
}

}  // namespace

SimScenario scenario_from_config(const config::KeyValueFile& kv) {
  for (const char* k : {"engine.echo_arm", "engine.baseline_arm"})
    if (kv.has(k)) throw ConfigError(k, "not allowed in a scenario; set scenario.arms instead");

  SimScenario sc;
  config::apply_engine_keys(kv, sc.engine);
  sc.seed = sc.engine.seed;

  auto size = [&](const char* key, std::size_t& out) {
    if (kv.has(key)) out = kv.get_size(key);
  };
  auto real = [&](const char* key, double& out) {
    if (kv.has(key)) out = kv.get_double(key);
  };

  size("scenario.authors", sc.authors);
  size("scenario.sessions", sc.sessions);
  size("scenario.warmup_sessions", sc.warmup_sessions);
  size("scenario.products", sc.products);
  size("scenario.min_messages", sc.min_messages);
  size("scenario.max_messages", sc.max_messages);
  size("scenario.days", sc.days);
  size("scenario.checkpoint_every", sc.checkpoint_every);
  size("scenario.heldout_per_feature", sc.heldout_per_feature);
  real("scenario.rapid_message_prob", sc.rapid_message_prob);
  real("scenario.repeat_click_prob", sc.repeat_click_prob);
  if (kv.has("scenario.audit")) sc.audit = kv.get_bool("scenario.audit");
  if (kv.has("scenario.arms")) {
    const auto a = kv.get_string("scenario.arms");
    if (a == "echo") {
      sc.arms = Arms::echo;
    } else if (a == "baseline") {
      sc.arms = Arms::baseline;
    } else if (a == "both") {
      sc.arms = Arms::both;
    } else {
      throw ConfigError("scenario.arms", "expected echo, baseline or both, got '" + a + "'");
    }
  }
  if (kv.has("scenario.weekday_factors")) {
    const auto items = kv.get_list("scenario.weekday_factors");
    sc.weekday_factors.clear();
    for (const auto& it : items) sc.weekday_factors.push_back(parse_number("scenario.weekday_factors", it));
  }

  real("author.label_noise", sc.author.label_noise);
  real("author.abstain_prob", sc.author.abstain_prob);
  real("author.completion_prob", sc.author.completion_prob);
  real("click.base_logit", sc.author.click_model.base_logit);
  real("click.affinity_weight", sc.author.click_model.affinity_weight);
  real("click.novelty_amplitude", sc.author.click_model.novelty_amplitude);
  real("click.novelty_decay", sc.author.click_model.novelty_decay);
  size("message.min_features", sc.message.min_features);
  size("message.max_features", sc.message.max_features);
  real("message.product_mention_prob", sc.message.product_mention_prob);
  real("message.cue_noise", sc.message.cue_noise);
  real("message.greeting_prob", sc.message.greeting_prob);

  if (const auto unknown = kv.unknown_keys(); !unknown.empty()) throw ConfigError(unknown.front(), "unknown key");
  validate(sc);
  return sc;
}

SimScenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_config(config::KeyValueFile::load(path));
}

void validate(const SimScenario& sc) {
  config::validate(sc.engine);
  check(sc.sessions > 0, "scenario.sessions", "must be positive");
  check(sc.warmup_sessions <= sc.sessions, "scenario.warmup_sessions", "must not exceed scenario.sessions");
  check(sc.products > 0, "scenario.products", "must be positive");
  check(sc.min_messages > 0, "scenario.min_messages", "must be positive");
  check(sc.min_messages <= sc.max_messages, "scenario.max_messages", "must be at least scenario.min_messages");
  check(sc.days > 0, "scenario.days", "must be positive");
  check(sc.checkpoint_every > 0, "scenario.checkpoint_every", "must be positive");
  check(sc.heldout_per_feature > 0, "scenario.heldout_per_feature", "must be positive");
  check(probability(sc.rapid_message_prob), "scenario.rapid_message_prob", "must be in [0, 1]");
  check(probability(sc.repeat_click_prob), "scenario.repeat_click_prob", "must be in [0, 1]");
  check(sc.repeat_click_prob < 1.0, "scenario.repeat_click_prob", "must be below 1");
  check(sc.weekday_factors.size() == 7, "scenario.weekday_factors", "expected 7 numbers (Sunday first)");
  for (double f : sc.weekday_factors) check(f >= 0.0, "scenario.weekday_factors", "must be non-negative");
  check(probability(sc.author.label_noise), "author.label_noise", "must be in [0, 1]");
  check(probability(sc.author.abstain_prob), "author.abstain_prob", "must be in [0, 1]");
  check(probability(sc.author.completion_prob), "author.completion_prob", "must be in [0, 1]");
  check(sc.author.click_model.novelty_decay > 0.0, "click.novelty_decay", "must be positive");
  check(sc.message.min_features > 0, "message.min_features", "must be positive");
  check(sc.message.min_features <= sc.message.max_features, "message.max_features",
        "must be at least message.min_features");
  check(probability(sc.message.product_mention_prob), "message.product_mention_prob", "must be in [0, 1]");
  check(probability(sc.message.cue_noise), "message.cue_noise", "must be in [0, 1]");
  check(probability(sc.message.greeting_prob), "message.greeting_prob", "must be in [0, 1]");
}

std::string render_scenario(const SimScenario& sc) {
  EngineConfig e = sc.engine;
  e.seed = sc.seed;
  std::string engine = config::render_engine_config(e);
  // The engine arm flags come from scenario.arms.
  std::istringstream in(engine);
  std::string line, kept;
  while (std::getline(in, line))
    if (line.rfind("echo_arm", 0) != 0 && line.rfind("baseline_arm", 0) != 0) kept += line + "\n";

  std::ostringstream o;
  o << kept << "\n[scenario]\n"
    << "authors = " << sc.authors << "\nsessions = " << sc.sessions
    << "\nwarmup_sessions = " << sc.warmup_sessions << "\nproducts = " << sc.products
    << "\nmin_messages = " << sc.min_messages << "\nmax_messages = " << sc.max_messages
    << "\ndays = " << sc.days << "\ncheckpoint_every = " << sc.checkpoint_every
    << "\nheldout_per_feature = " << sc.heldout_per_feature
    << "\nrapid_message_prob = " << num(sc.rapid_message_prob)
    << "\nrepeat_click_prob = " << num(sc.repeat_click_prob) << "\narms = " << arms_name(sc.arms)
    << "\naudit = " << (sc.audit ? "true" : "false") << "\nweekday_factors = [";
  for (std::size_t i = 0; i < sc.weekday_factors.size(); ++i) o << (i ? ", " : "") << num(sc.weekday_factors[i]);
  o << "]\n\n[author]\n"
    << "label_noise = " << num(sc.author.label_noise) << "\nabstain_prob = " << num(sc.author.abstain_prob)
    << "\ncompletion_prob = " << num(sc.author.completion_prob) << "\n\n[click]\n"
    << "base_logit = " << num(sc.author.click_model.base_logit)
    << "\naffinity_weight = " << num(sc.author.click_model.affinity_weight)
    << "\nnovelty_amplitude = " << num(sc.author.click_model.novelty_amplitude)
    << "\nnovelty_decay = " << num(sc.author.click_model.novelty_decay) << "\n\n[message]\n"
    << "min_features = " << sc.message.min_features << "\nmax_features = " << sc.message.max_features
    << "\nproduct_mention_prob = " << num(sc.message.product_mention_prob)
    << "\ncue_noise = " << num(sc.message.cue_noise) << "\ngreeting_prob = " << num(sc.message.greeting_prob)
    << "\n";
  return o.str();
}

}  // namespace echo::sim

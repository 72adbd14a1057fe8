#pragma once

// Scripted impression/click cases run through the engine (keyword baseline
// arm only, so displays depend on message text alone).
//
// Script: {name, merge_window_ms?, steps:[{op:"message", session, user, text, t}
//          | {op:"click", session, step, t}], expect:{impressions, clicks,
//          per_impression:[...], ctr}}
// A click's `step` is the index of the message step whose card is clicked.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "echo/engine.hpp"
#include "fixtures.hpp"

namespace echo::fx {

struct CaseOutcome {
  std::string name;
  std::string log_jsonl;
  std::size_t impressions = 0;
  std::size_t clicks = 0;
  std::vector<std::size_t> per_impression;
  std::string ctr;
  core::Json expect;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CaseOutcome run_impression_case(const core::Json& script) {
  EngineConfig cfg;
  cfg.echo_arm = false;
  cfg.baseline_arm = true;
  cfg.recommend.merge_window_ms = script.value("merge_window_ms", std::int64_t{10'000});
  Engine engine(small_registry(), small_catalog(), cfg);

  std::vector<std::string> shown;  // impression id per step ("" when none)
  for (const auto& step : script.at("steps")) {
    const auto op = step.at("op").get<std::string>();
    if (op == "message") {
      core::Message m;
      m.session_id = step.at("session").get<std::string>();
      m.user_id = step.at("user").get<std::string>();
      m.text = step.at("text").get<std::string>();
      m.timestamp_ms = step.at("t").get<std::int64_t>();
      const auto r = engine.on_message(m);
      shown.push_back(r.baseline ? r.baseline->impression_id : "");
    } else if (op == "click") {
      const auto& id = shown.at(step.at("step").get<std::size_t>());
      engine.on_click(step.at("session").get<std::string>(), id, step.at("t").get<std::int64_t>());
      shown.push_back("");
    } else {
      throw std::invalid_argument("unknown op " + op);
    }
  }

  CaseOutcome out;
  out.name = script.at("name").get<std::string>();
  out.log_jsonl = engine.log().to_jsonl();
  out.expect = script.at("expect");
  for (const auto& imp : engine.ledger().impressions()) {
    ++out.impressions;
    out.clicks += imp.clicks.size();
    out.per_impression.push_back(imp.clicks.size());
  }
  out.ctr = recommend::format_ctr(recommend::ctr(out.clicks, out.impressions));
  return out;
}

/// Sorted script paths under `dir`.
inline std::vector<std::filesystem::path> impression_scripts(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Empty string when the case matches its expectations and golden log,
/// otherwise a description of the first mismatch.
inline std::string check_impression_case(const std::filesystem::path& script_path) {
  const auto script = core::Json::parse(read_file(script_path));
  const auto out = run_impression_case(script);
  const auto& e = out.expect;
  if (out.impressions != e.at("impressions").get<std::size_t>())
    return out.name + ": impressions " + std::to_string(out.impressions);
  if (out.clicks != e.at("clicks").get<std::size_t>()) return out.name + ": clicks " + std::to_string(out.clicks);
  if (out.per_impression != e.at("per_impression").get<std::vector<std::size_t>>())
    return out.name + ": per-impression clicks differ";
  if (out.ctr != e.at("ctr").get<std::string>()) return out.name + ": ctr " + out.ctr;
  auto golden = script_path;
  golden.replace_extension(".events.jsonl");
  if (const char* upd = std::getenv("ECHO_UPDATE_GOLDEN"); upd && std::string(upd) == "1") {
    std::ofstream(golden, std::ios::binary) << out.log_jsonl;
  }
  if (!std::filesystem::exists(golden)) return out.name + ": missing golden " + golden.string();
  if (read_file(golden) != out.log_jsonl) return out.name + ": event log differs from golden";
  return {};
}

}  // namespace echo::fx

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "echo/config.hpp"
#include "echo/core/event_log.hpp"
#include "echo/engine.hpp"

namespace echo::service {

/// Milliseconds since the Unix epoch.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct Response {
  int status = 200;
  core::Json body = core::Json::object();
};

/// The session API, transport-free. All requests are serialized on one
/// mutex; every mutation is in the event log (and its file sink, when
/// persistent) before handle() returns.
///
///   POST /session                           {user_id?}
///   POST /session/{id}/message              {text, role?, recommend?}
///   POST /session/{id}/response             {task_id, answer | abstain, read_latency_s}
///   POST /session/{id}/click                {impression_id}
///   GET  /metrics
///   GET  /session/{id}/events?after=N&limit=M
///
/// Unknown ids give 404, malformed bodies 400 with {"error", "field"}.
class Api {
 public:
  /// In-memory only.
  Api(core::FeatureRegistry registry, recommend::Catalog catalog, EngineConfig cfg,
      Clock clock = system_clock_ms);

  /// Persistent: loads registry and catalog, replays data_dir/events.jsonl
  /// and data_dir/sessions.jsonl if present, then appends to both.
  static std::unique_ptr<Api> open(const config::ServiceConfig& sc, Clock clock = system_clock_ms);

  Response handle(std::string_view method, std::string_view target, std::string_view body);

  /// Consistent copy of the event log.
  core::EventLog log_snapshot() const;
  std::uint64_t engine_checksum() const;
  core::Json metrics() const;

 private:
  struct Session {
    std::string user_id;
    std::uint64_t next_turn = 0;
  };

  Api(Engine engine, Clock clock);
  void attach(const std::filesystem::path& data_dir);

  Response create_session(const core::Json& body);
  Response post_message(const std::string& sid, const core::Json& body);
  Response post_response(const std::string& sid, const core::Json& body);
  Response post_click(const std::string& sid, const core::Json& body);
  Response get_events(const std::string& sid, std::string_view query) const;
  core::Json metrics_locked() const;

  mutable std::mutex mu_;
  Engine engine_;
  Clock clock_;
  std::map<std::string, Session> sessions_;
  std::uint64_t session_counter_ = 0;
  std::optional<std::filesystem::path> sessions_file_;
};

/// Blocks serving `api` over HTTP until the process is stopped.
/// Returns false if the port cannot be bound.
bool serve(Api& api, const std::string& host, int port);

}  // namespace echo::service

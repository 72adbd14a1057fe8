#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace echo::core {

/// Field order is preserved so serialized events are byte-stable.
using Json = nlohmann::ordered_json;

enum class EventKind {
  message,
  taskability_decision,
  survey_shown,
  author_response,
  impression,
  click,
  model_update,
  recommendation,
};

std::string_view to_string(EventKind k) noexcept;
EventKind event_kind_from_string(std::string_view s);

/// Events that carry external input. Everything else is re-derived on replay.
constexpr bool is_input(EventKind k) noexcept {
  return k == EventKind::message || k == EventKind::author_response || k == EventKind::click;
}

struct SessionEvent {
  std::uint64_t event_id = 0;
  std::string session_id;
  EventKind kind = EventKind::message;
  std::int64_t timestamp_ms = 0;
  Json payload = Json::object();

  Json to_json() const;
  static SessionEvent from_json(const Json& j);
  /// One line, no trailing whitespace or newline.
  std::string to_line() const;
};

/// Append-only event log. Ids start at 1 and increase by exactly one.
class EventLog {
 public:
  EventLog() = default;

  /// Throws std::invalid_argument if event.event_id != last_id() + 1.
  const SessionEvent& append(SessionEvent event);
  /// Assigns the next id and appends.
  const SessionEvent& emit(std::string session_id, EventKind kind, std::int64_t timestamp_ms,
                           Json payload);

  std::uint64_t last_id() const noexcept { return events_.empty() ? 0 : events_.back().event_id; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  const std::vector<SessionEvent>& events() const noexcept { return events_; }

  /// Events of one session with event_id > after, at most `limit` of them.
  std::vector<SessionEvent> session_page(std::string_view session_id, std::uint64_t after,
                                         std::size_t limit) const;

  /// Mirror every appended event to a JSONL file (write-ahead persistence).
  void attach_sink(const std::filesystem::path& path);

  std::string to_jsonl() const;
  static EventLog from_jsonl(std::string_view text);
  void write(const std::filesystem::path& path) const;
  static EventLog read(const std::filesystem::path& path);

 private:
  std::vector<SessionEvent> events_;
  std::shared_ptr<std::ofstream> sink_;
};

}  // namespace echo::core

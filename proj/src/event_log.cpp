#include "echo/core/event_log.hpp"

#include <array>
#include <sstream>
#include <stdexcept>

namespace echo::core {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 8> kKindNames{{
    {EventKind::message, "message"},
    {EventKind::taskability_decision, "taskability_decision"},
    {EventKind::survey_shown, "survey_shown"},
    {EventKind::author_response, "author_response"},
    {EventKind::impression, "impression"},
    {EventKind::click, "click"},
    {EventKind::model_update, "model_update"},
    {EventKind::recommendation, "recommendation"},
}};

}  // namespace

std::string_view to_string(EventKind k) noexcept {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "message";
}

EventKind event_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  throw std::invalid_argument("unknown event kind: " + std::string(s));
}

Json SessionEvent::to_json() const {
  Json j;
  j["event_id"] = event_id;
  j["session_id"] = session_id;
  j["kind"] = std::string(to_string(kind));
  j["timestamp_ms"] = timestamp_ms;
  j["payload"] = payload;
  return j;
}

SessionEvent SessionEvent::from_json(const Json& j) {
  SessionEvent e;
  e.event_id = j.at("event_id").get<std::uint64_t>();
  e.session_id = j.at("session_id").get<std::string>();
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  e.payload = j.at("payload");
  return e;
}

std::string SessionEvent::to_line() const { return to_json().dump(); }

const SessionEvent& EventLog::append(SessionEvent event) {
  if (event.event_id != last_id() + 1) {
    throw std::invalid_argument("out-of-order event_id " + std::to_string(event.event_id) +
                                " (expected " + std::to_string(last_id() + 1) + ")");
  }
  if (sink_) {
    *sink_ << event.to_line() << '\n';
    sink_->flush();
  }
  events_.push_back(std::move(event));
  return events_.back();
}

const SessionEvent& EventLog::emit(std::string session_id, EventKind kind,
                                   std::int64_t timestamp_ms, Json payload) {
  SessionEvent e;
  e.event_id = last_id() + 1;
  e.session_id = std::move(session_id);
  e.kind = kind;
  e.timestamp_ms = timestamp_ms;
  e.payload = std::move(payload);
  return append(std::move(e));
}

std::vector<SessionEvent> EventLog::session_page(std::string_view session_id,
                                                 std::uint64_t after, std::size_t limit) const {
  std::vector<SessionEvent> out;
  for (const auto& e : events_) {
    if (e.event_id <= after || e.session_id != session_id) continue;
    out.push_back(e);
    if (out.size() >= limit) break;
  }
  return out;
}

void EventLog::attach_sink(const std::filesystem::path& path) {
  auto out = std::make_shared<std::ofstream>(path, std::ios::app | std::ios::binary);
  if (!*out) throw std::runtime_error("cannot open event sink: " + path.string());
  sink_ = std::move(out);
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) {
    out += e.to_line();
    out += '\n';
  }
  return out;
}

EventLog EventLog::from_jsonl(std::string_view text) {
  EventLog log;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      log.append(SessionEvent::from_json(Json::parse(line)));
    } catch (const std::exception& ex) {
      throw std::invalid_argument("event log line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

void EventLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl();
}

EventLog EventLog::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

}  // namespace echo::core

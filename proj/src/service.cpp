#include "echo/service.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <httplib.h>

namespace echo::service {

using core::Json;

namespace {

struct BadRequest : std::runtime_error {
  BadRequest(std::string f, const std::string& msg) : std::runtime_error(msg), field(std::move(f)) {}
  std::string field;
};

Response error(int status, const std::string& message, const std::string& field = {}) {
  Response r{status, Json::object()};
  r.body["error"] = message;
  if (!field.empty()) r.body["field"] = field;
  return r;
}

std::string require_string(const Json& body, const char* field) {
  if (!body.contains(field)) throw BadRequest(field, "missing");
  const auto& v = body.at(field);
  if (!v.is_string()) throw BadRequest(field, "must be a string");
  return v.get<std::string>();
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < path.size()) {
    if (path[pos] == '/') {
      ++pos;
      continue;
    }
    const auto end = path.find('/', pos);
    out.emplace_back(path.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end;
  }
  return out;
}

std::optional<std::string> query_param(std::string_view query, std::string_view name) {
  std::size_t pos = 0;
  while (pos <= query.size()) {
    auto end = query.find('&', pos);
    if (end == std::string_view::npos) end = query.size();
    const auto part = query.substr(pos, end - pos);
    const auto eq = part.find('=');
    if (part.substr(0, eq) == name) return std::string(eq == std::string_view::npos ? "" : part.substr(eq + 1));
    pos = end + 1;
  }
  return std::nullopt;
}

std::uint64_t parse_u64(const std::string& field, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw BadRequest(field, "expected a non-negative integer");
  return v;
}

Json recommendation_json(const ShownRecommendation& r) {
  Json j;
  j["source"] = std::string(recommend::to_string(r.source));
  j["product_id"] = r.product_id;
  j["title"] = r.title;
  j["rendered_text"] = r.rendered_text;
  j["impression_id"] = r.impression_id;
  j["new_impression"] = r.new_impression;
  return j;
}

Json survey_json(const tasks::Survey& s) {
  Json j;
  j["survey_id"] = s.survey_id;
  j["shown_at"] = s.shown_at;
  j["min_read_seconds"] = s.tasks.empty() ? 0.0 : s.tasks.front().min_read_seconds;
  Json list = Json::array();
  for (const auto& t : s.tasks) {
    Json tj;
    tj["task_id"] = t.task_id;
    tj["feature_id"] = t.feature_id;
    tj["question"] = t.question_text;
    tj["kind"] = std::string(tasks::to_string(t.kind));
    tj["options"] = t.options;
    list.push_back(std::move(tj));
  }
  j["tasks"] = std::move(list);
  return j;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot append to " + path.string());
}

}  // namespace

std::int64_t system_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Api::Api(core::FeatureRegistry registry, recommend::Catalog catalog, EngineConfig cfg, Clock clock)
    : Api(Engine(std::move(registry), std::move(catalog), std::move(cfg)), std::move(clock)) {}

Api::Api(Engine engine, Clock clock) : engine_(std::move(engine)), clock_(std::move(clock)) {}

std::unique_ptr<Api> Api::open(const config::ServiceConfig& sc, Clock clock) {
  auto registry = config::registry_from_jsonl(config::read_file(sc.registry_path));
  auto catalog = recommend::Catalog::from_jsonl(config::read_file(sc.catalog_path), sc.engine.model.input_dim);
  std::filesystem::create_directories(sc.data_dir);
  const auto events_path = sc.data_dir / "events.jsonl";

  std::unique_ptr<Api> api;
  if (std::filesystem::exists(events_path)) {
    auto text = config::read_file(events_path);
    // A line without its newline was torn by a crash mid-write and never
    // acknowledged; drop it.
    if (!text.empty() && text.back() != '\n') {
      const auto last = text.rfind('\n');
      text.erase(last == std::string::npos ? 0 : last + 1);
    }
    const auto log = core::EventLog::from_jsonl(text);
    api.reset(new Api(Engine::replay(log, std::move(registry), std::move(catalog), sc.engine), std::move(clock)));
    // A crash can leave a trailing input without its derived events; the
    // replayed log is complete, so it replaces the file.
    const auto tmp = sc.data_dir / "events.jsonl.tmp";
    config::write_file(tmp, api->engine_.log().to_jsonl());
    std::filesystem::rename(tmp, events_path);
  } else {
    api.reset(new Api(Engine(std::move(registry), std::move(catalog), sc.engine), std::move(clock)));
  }
  api->attach(sc.data_dir);
  return api;
}

void Api::attach(const std::filesystem::path& data_dir) {
  sessions_file_ = data_dir / "sessions.jsonl";
  if (std::filesystem::exists(*sessions_file_)) {
    std::istringstream in(config::read_file(*sessions_file_));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = Json::parse(line);
      sessions_[j.at("session_id").get<std::string>()].user_id = j.at("user_id").get<std::string>();
      session_counter_ = std::max(session_counter_, j.at("seq").get<std::uint64_t>());
    }
  }
  for (const auto& e : engine_.log().events()) {
    if (e.kind != core::EventKind::message) continue;
    auto& s = sessions_[e.session_id];
    if (s.user_id.empty()) s.user_id = e.payload.at("user_id").get<std::string>();
    s.next_turn = std::max(s.next_turn, e.payload.at("turn_index").get<std::uint64_t>() + 1);
  }
  engine_.mutable_log().attach_sink(data_dir / "events.jsonl");
}

Response Api::handle(std::string_view method, std::string_view target, std::string_view body) {
  const auto qpos = target.find('?');
  const auto path = target.substr(0, qpos);
  const auto query = qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1);
  const auto seg = split_path(path);

  std::lock_guard lock(mu_);
  try {
    if (method == "GET") {
      if (seg.size() == 1 && seg[0] == "metrics") return Response{200, metrics_locked()};
      if (seg.size() == 3 && seg[0] == "session" && seg[2] == "events") return get_events(seg[1], query);
      return error(404, "no such endpoint");
    }
    if (method != "POST") return error(405, "method not allowed");

    Json j = Json::object();
    if (!core::trim(body).empty()) {
      j = Json::parse(body, nullptr, false);
      if (j.is_discarded()) return error(400, "malformed JSON body", "body");
      if (!j.is_object()) return error(400, "body must be a JSON object", "body");
    }
    if (seg.size() == 1 && seg[0] == "session") return create_session(j);
    if (seg.size() == 3 && seg[0] == "session") {
      if (!sessions_.count(seg[1])) return error(404, "unknown session " + seg[1]);
      if (seg[2] == "message") return post_message(seg[1], j);
      if (seg[2] == "response") return post_response(seg[1], j);
      if (seg[2] == "click") return post_click(seg[1], j);
    }
    return error(404, "no such endpoint");
  } catch (const BadRequest& e) {
    return error(400, e.what(), e.field);
  } catch (const std::out_of_range& e) {
    return error(404, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response Api::create_session(const Json& body) {
  std::string user_id;
  if (body.contains("user_id")) user_id = require_string(body, "user_id");
  char buf[32];
  const auto seq = session_counter_ + 1;
  std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(seq));
  const std::string sid = buf;
  if (user_id.empty()) user_id = "anon-" + sid;
  if (sessions_file_) {
    Json line;
    line["session_id"] = sid;
    line["user_id"] = user_id;
    line["seq"] = seq;
    line["created_at"] = clock_();
    append_line(*sessions_file_, line.dump());
  }
  session_counter_ = seq;
  sessions_[sid].user_id = user_id;
  Response r;
  r.body["session_id"] = sid;
  r.body["user_id"] = user_id;
  return r;
}

Response Api::post_message(const std::string& sid, const Json& body) {
  core::Message m;
  m.session_id = sid;
  m.text = require_string(body, "text");
  if (body.contains("role")) {
    const auto role = require_string(body, "role");
    if (role == "user") {
      m.role = core::AuthorRole::user;
    } else if (role == "assistant") {
      m.role = core::AuthorRole::assistant;
    } else {
      throw BadRequest("role", "expected user or assistant");
    }
  }
  bool recommend = true;
  if (body.contains("recommend")) {
    if (!body.at("recommend").is_boolean()) throw BadRequest("recommend", "must be a boolean");
    recommend = body.at("recommend").get<bool>();
  }
  auto& s = sessions_.at(sid);
  m.user_id = s.user_id;
  m.turn_index = s.next_turn++;
  m.timestamp_ms = clock_();

  const auto result = engine_.on_message(m, recommend);
  Response r;
  r.body["turn_index"] = m.turn_index;
  r.body["taskable"] = result.decision.is_taskable;
  if (result.decision.rejection_reason)
    r.body["reason"] = std::string(filter::to_string(*result.decision.rejection_reason));
  r.body["survey"] = result.survey ? survey_json(*result.survey) : Json(nullptr);
  r.body["recommendation"] = result.echo ? recommendation_json(*result.echo) : Json(nullptr);
  if (result.baseline) r.body["baseline_recommendation"] = recommendation_json(*result.baseline);
  return r;
}

Response Api::post_response(const std::string& sid, const Json& body) {
  tasks::AuthorResponse resp;
  resp.task_id = require_string(body, "task_id");
  if (!body.contains("read_latency_s")) throw BadRequest("read_latency_s", "missing");
  if (!body.at("read_latency_s").is_number()) throw BadRequest("read_latency_s", "must be a number");
  resp.read_latency_s = body.at("read_latency_s").get<double>();
  if (resp.read_latency_s < 0.0) throw BadRequest("read_latency_s", "must be non-negative");

  const bool abstain = body.contains("abstain") && body.at("abstain").is_boolean() && body.at("abstain").get<bool>();
  if (body.contains("abstain") && !body.at("abstain").is_boolean()) throw BadRequest("abstain", "must be a boolean");
  if (abstain) {
    if (body.contains("answer")) throw BadRequest("answer", "give either answer or abstain, not both");
    resp.answer = tasks::Abstain{};
  } else {
    if (!body.contains("answer")) throw BadRequest("answer", "missing (or set abstain: true)");
    const auto& a = body.at("answer");
    if (a.is_number_unsigned()) {
      resp.answer = a.get<std::size_t>();
    } else if (a.is_string()) {
      resp.answer = a.get<std::string>();
    } else {
      throw BadRequest("answer", "must be an option index or a free-text string");
    }
  }
  resp.answered_at = clock_();

  const auto outcome = engine_.on_response(sid, resp);
  Response r;
  r.body["task_id"] = resp.task_id;
  if (outcome.accepted) {
    r.body["status"] = "accepted";
    r.body["abstained"] = outcome.abstained;
    r.body["survey_completed"] = outcome.survey_completed;
  } else {
    r.body["status"] = "rejected";
    r.body["reason"] = outcome.reason ? std::string(tasks::to_string(*outcome.reason)) : "invalid_answer";
  }
  return r;
}

Response Api::post_click(const std::string& sid, const Json& body) {
  const auto imp = require_string(body, "impression_id");
  const auto clicks = engine_.on_click(sid, imp, clock_());
  Response r;
  r.body["impression_id"] = imp;
  r.body["clicks"] = clicks;
  return r;
}

Response Api::get_events(const std::string& sid, std::string_view query) const {
  if (!sessions_.count(sid)) return error(404, "unknown session " + sid);
  std::uint64_t after = 0;
  std::size_t limit = 1000;
  if (auto a = query_param(query, "after")) after = parse_u64("after", *a);
  if (auto l = query_param(query, "limit")) limit = static_cast<std::size_t>(std::min<std::uint64_t>(parse_u64("limit", *l), 10000));
  const auto page = engine_.log().session_page(sid, after, limit);
  Response r;
  r.body["session_id"] = sid;
  Json events = Json::array();
  for (const auto& e : page) events.push_back(e.to_json());
  r.body["events"] = std::move(events);
  r.body["next_after"] = page.empty() ? after : page.back().event_id;
  return r;
}

core::Json Api::metrics() const {
  std::lock_guard lock(mu_);
  return metrics_locked();
}

core::Json Api::metrics_locked() const {
  Json m;
  const auto report = recommend::ctr_report(engine_.ledger().impressions());
  Json ctr = Json::array();
  for (const auto& row : report.rows) {
    Json r;
    r["group"] = row.group;
    r["impressions"] = row.impressions;
    r["clicks"] = row.clicks;
    r["ctr"] = row.ctr ? Json(*row.ctr) : Json(nullptr);
    ctr.push_back(std::move(r));
  }
  m["ctr"] = std::move(ctr);

  Json sigma = Json::array();
  Json accuracy = Json::array();
  const auto& specs = engine_.registry().specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Json s;
    s["feature_id"] = specs[i].feature_id;
    s["sigma"] = engine_.selector().sigma(i);
    sigma.push_back(std::move(s));
    const auto& fa = engine_.feature_accuracy()[i];
    Json a;
    a["feature_id"] = specs[i].feature_id;
    a["labels"] = fa.labels;
    a["accuracy"] = fa.labels ? Json(fa.matches / static_cast<double>(fa.labels)) : Json(nullptr);
    accuracy.push_back(std::move(a));
  }
  m["sigma"] = std::move(sigma);
  m["feature_accuracy"] = std::move(accuracy);
  const auto shown = engine_.surveys().shown();
  m["surveys_shown"] = shown;
  m["surveys_completed"] = engine_.surveys().completed();
  m["completion_rate"] =
      shown ? Json(static_cast<double>(engine_.surveys().completed()) / static_cast<double>(shown)) : Json(nullptr);
  m["events"] = engine_.log().size();
  return m;
}

core::EventLog Api::log_snapshot() const {
  std::lock_guard lock(mu_);
  return core::EventLog::from_jsonl(engine_.log().to_jsonl());
}

std::uint64_t Api::engine_checksum() const {
  std::lock_guard lock(mu_);
  return engine_.checksum();
}

bool serve(Api& api, const std::string& host, int port) {
  httplib::Server server;
  auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
    const auto out = api.handle(req.method, req.target, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  return server.listen(host, port);
}

}  // namespace echo::service

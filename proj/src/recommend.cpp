#include "echo/recommend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <tuple>

#include "echo/core/event_log.hpp"

namespace echo::recommend {

Catalog::Catalog(std::vector<Product> products, std::size_t dim) : products_(std::move(products)) {
  std::sort(products_.begin(), products_.end(),
            [](const Product& a, const Product& b) { return a.product_id < b.product_id; });
  for (std::size_t i = 1; i < products_.size(); ++i)
    if (products_[i].product_id == products_[i - 1].product_id)
      throw std::invalid_argument("duplicate product_id: " + products_[i].product_id);
  for (auto& p : products_)
    if (p.attribute_embedding.nnz() == 0) p.attribute_embedding = core::featurize(p.attribute_text, dim);
}

Catalog Catalog::from_jsonl(std::string_view text, std::size_t dim) {
  std::vector<Product> products;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = core::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = core::Json::parse(line);
      Product p;
      p.product_id = j.at("product_id").get<std::string>();
      p.vertical = j.at("vertical").get<std::string>();
      p.title = j.at("title").get<std::string>();
      p.keywords = j.at("keywords").get<std::vector<std::string>>();
      p.attribute_text = j.at("attribute_text").get<std::string>();
      products.push_back(std::move(p));
    } catch (const std::exception& ex) {
      throw std::invalid_argument("catalog line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return Catalog(std::move(products), dim);
}

std::string Catalog::to_jsonl() const {
  std::string out;
  for (const auto& p : products_) {
    core::Json j;
    j["product_id"] = p.product_id;
    j["vertical"] = p.vertical;
    j["title"] = p.title;
    j["keywords"] = p.keywords;
    j["attribute_text"] = p.attribute_text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

const Product* Catalog::find(const std::string& product_id) const {
  auto it = std::lower_bound(products_.begin(), products_.end(), product_id,
                             [](const Product& p, const std::string& id) { return p.product_id < id; });
  return it != products_.end() && it->product_id == product_id ? &*it : nullptr;
}

std::string render_ad(const Product& product, std::string_view message_text) {
  std::string tokens;
  for (const auto& t : core::tokenize(message_text)) {
    if (t.size() < 4) continue;
    if (!tokens.empty()) tokens += ", ";
    tokens += t;
    if (std::count(tokens.begin(), tokens.end(), ',') >= 2) break;
  }
  std::string out = "Recommended: " + product.title;
  if (!tokens.empty()) out += " (you mentioned " + tokens + ")";
  return out;
}

core::SparseVector preference_vector(const std::vector<SelectedValue>& selected, std::size_t dim) {
  std::map<std::uint32_t, double> acc;
  std::size_t used = 0;
  for (const auto& s : selected) {
    if (s.value.abstain || s.spec == nullptr) continue;
    const auto v = core::featurize(core::value_text(*s.spec, s.value), dim);
    if (v.empty) continue;
    ++used;
    for (std::size_t k = 0; k < v.nnz(); ++k) acc[v.index[k]] += v.value[k];
  }
  core::SparseVector out;
  out.dim = dim;
  out.empty = used == 0;
  for (const auto& [i, x] : acc) {
    out.index.push_back(i);
    out.value.push_back(x / static_cast<double>(used));
  }
  return out;
}

Decision recommend(const std::vector<SelectedValue>& selected, const Catalog& catalog,
                   const RecommendConfig& cfg, std::string_view message_text) {
  Decision d;
  if (catalog.empty()) {
    d.empty_catalog = true;
    return d;
  }
  const auto pref = preference_vector(selected, cfg.dim);
  if (pref.empty) return d;
  double best = -2.0;
  // Catalog is sorted by id, so strict '>' keeps the lowest id on ties.
  for (const auto& p : catalog.products()) {
    const double s = core::cosine_similarity(pref, p.attribute_embedding);
    if (s > best) {
      best = s;
      d.product = &p;
    }
  }
  d.similarity = best;
  d.show = best >= cfg.display_threshold;
  if (d.show) d.rendered_text = render_ad(*d.product, message_text);
  return d;
}

std::size_t keyword_overlap(std::string_view message_text, const Product& product) {
  const auto tokens = core::tokenize(message_text);
  const std::set<std::string> words(tokens.begin(), tokens.end());
  std::size_t n = 0;
  for (const auto& kw : product.keywords) {
    const auto kt = core::tokenize(kw);
    if (!kt.empty() && std::all_of(kt.begin(), kt.end(), [&](const auto& t) { return words.count(t) != 0; }))
      ++n;
  }
  return n;
}

Decision baseline_recommend(std::string_view message_text, const Catalog& catalog) {
  Decision d;
  if (catalog.empty()) {
    d.empty_catalog = true;
    return d;
  }
  std::size_t best = 0;
  for (const auto& p : catalog.products()) {
    const auto n = keyword_overlap(message_text, p);
    if (n > best) {
      best = n;
      d.product = &p;
    }
  }
  d.similarity = static_cast<double>(best);
  d.show = best >= 1;
  if (d.show) d.rendered_text = render_ad(*d.product, message_text);
  return d;
}

std::string_view to_string(Source s) noexcept { return s == Source::echo ? "echo" : "baseline"; }

Source source_from_string(std::string_view s) {
  if (s == "echo") return Source::echo;
  if (s == "baseline") return Source::baseline;
  throw std::invalid_argument("unknown source: " + std::string(s));
}

namespace {

struct MergeState {
  std::int64_t window;
  std::vector<Impression>& out;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t>& by_content;
  std::map<std::pair<std::string, Source>, std::size_t>& last;

  /// Folds one display into `out`; returns the index it landed in and how.
  std::pair<std::size_t, RecordResult> absorb(const Impression& display) {
    RecordResult r;
    const auto content_key = std::make_pair(display.session_id, display.content_hash);
    if (auto it = by_content.find(content_key); it != by_content.end()) {
      r.deduplicated = true;
      auto& imp = out[it->second];
      imp.clicks.insert(imp.clicks.end(), display.clicks.begin(), display.clicks.end());
      r.impression_id = imp.impression_id;
      return {it->second, r};
    }
    const auto session_key = std::make_pair(display.session_id, display.source);
    if (auto it = last.find(session_key); it != last.end()) {
      auto& prev = out[it->second];
      if (display.shown_at - prev.last_attempt_at < window) {
        prev.last_attempt_at = std::max(prev.last_attempt_at, display.shown_at);
        prev.clicks.insert(prev.clicks.end(), display.clicks.begin(), display.clicks.end());
        r.merged = true;
        r.impression_id = prev.impression_id;
        return {it->second, r};
      }
    }
    out.push_back(display);
    out.back().last_attempt_at = std::max(display.last_attempt_at, display.shown_at);
    const auto idx = out.size() - 1;
    by_content[content_key] = idx;
    last[session_key] = idx;
    r.created = true;
    r.impression_id = display.impression_id;
    return {idx, r};
  }
};

}  // namespace

RecordResult Ledger::record_impression(const std::string& session_id, const std::string& user_id,
                                       Source source, const Product& product,
                                       std::string_view rendered_text, std::int64_t shown_at) {
  Impression display;
  display.impression_id = "imp-" + std::to_string(impressions_.size() + 1);
  display.session_id = session_id;
  display.user_id = user_id;
  display.product_id = product.product_id;
  display.vertical = product.vertical;
  display.content_hash = core::fnv1a(rendered_text, core::fnv1a(product.product_id + "\n"));
  display.shown_at = shown_at;
  display.last_attempt_at = shown_at;
  display.source = source;
  MergeState state{merge_window_ms_, impressions_, by_content_, last_in_session_};
  auto [idx, result] = state.absorb(display);
  if (result.created) by_id_[impressions_[idx].impression_id] = idx;
  return result;
}

std::size_t Ledger::record_click(const std::string& impression_id, std::int64_t at) {
  auto it = by_id_.find(impression_id);
  if (it == by_id_.end()) throw std::out_of_range("unknown impression: " + impression_id);
  auto& imp = impressions_[it->second];
  imp.clicks.push_back(at);
  return imp.clicks.size();
}

const Impression* Ledger::find(const std::string& impression_id) const {
  auto it = by_id_.find(impression_id);
  return it == by_id_.end() ? nullptr : &impressions_[it->second];
}

std::size_t Ledger::total_clicks() const noexcept {
  std::size_t n = 0;
  for (const auto& i : impressions_) n += i.clicks.size();
  return n;
}

std::vector<Impression> merge_pass(const std::vector<Impression>& displays,
                                   std::int64_t merge_window_ms) {
  std::vector<Impression> sorted = displays;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Impression& a, const Impression& b) { return a.shown_at < b.shown_at; });
  std::vector<Impression> out;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> by_content;
  std::map<std::pair<std::string, Source>, std::size_t> last;
  MergeState state{merge_window_ms, out, by_content, last};
  for (const auto& d : sorted) state.absorb(d);
  return out;
}

std::optional<double> ctr(std::size_t clicks, std::size_t impressions) noexcept {
  if (impressions == 0) return std::nullopt;
  return static_cast<double>(clicks) / static_cast<double>(impressions);
}

std::string format_ctr(std::optional<double> value) {
  if (!value) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *value);
  return buf;
}

std::int64_t day_index(std::int64_t timestamp_ms) noexcept {
  constexpr std::int64_t kDay = 86'400'000;
  return timestamp_ms >= 0 ? timestamp_ms / kDay : -((-timestamp_ms + kDay - 1) / kDay);
}

std::string_view weekday_name(std::int64_t timestamp_ms) noexcept {
  static constexpr std::string_view names[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
  // 1970-01-01 was a Thursday.
  const auto d = ((day_index(timestamp_ms) + 4) % 7 + 7) % 7;
  return names[d];
}

const CtrRow* CtrReport::find(std::string_view group) const {
  for (const auto& r : rows)
    if (r.group == group) return &r;
  return nullptr;
}

std::string CtrReport::to_csv() const {
  std::string out = "group,impressions,clicks,ctr\n";
  for (const auto& r : rows) {
    out += r.group + "," + std::to_string(r.impressions) + "," + std::to_string(r.clicks) + "," +
           format_ctr(r.ctr) + "\n";
  }
  return out;
}

CtrReport ctr_report(const std::vector<Impression>& impressions) {
  // Keyed (section, source, key) so rows come out grouped and sorted.
  std::map<std::tuple<int, std::string, std::string>, std::pair<std::size_t, std::size_t>> acc;
  auto add = [&](int section, const Impression& imp, std::string key) {
    auto& cell = acc[{section, std::string(to_string(imp.source)), std::move(key)}];
    ++cell.first;
    cell.second += imp.clicks.size();
  };
  for (const auto& imp : impressions) {
    add(0, imp, "");
    char day[24];
    std::snprintf(day, sizeof day, "%05lld", static_cast<long long>(day_index(imp.shown_at)));
    add(1, imp, std::string("day=") + day);
    add(2, imp, "weekday=" + std::string(weekday_name(imp.shown_at)));
    add(3, imp, "vertical=" + imp.vertical);
  }
  CtrReport report;
  for (const auto& [k, cell] : acc) {
    const auto& [section, source, key] = k;
    CtrRow row;
    row.group = "source=" + source + (key.empty() ? "" : "|" + key);
    row.impressions = cell.first;
    row.clicks = cell.second;
    row.ctr = ctr(row.clicks, row.impressions);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace echo::recommend

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echo/core/text.hpp"
#include "echo/core/types.hpp"

namespace echo::recommend {

struct Product {
  std::string product_id;
  std::string vertical;
  std::string title;
  std::string attribute_text;
  std::vector<std::string> keywords;
  core::SparseVector attribute_embedding;
};

/// Products sorted by product_id; ids are unique.
class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<Product> products, std::size_t dim = core::kDefaultFeatureDim);

  /// Line-delimited JSON with {product_id, vertical, title, keywords[], attribute_text}.
  static Catalog from_jsonl(std::string_view text, std::size_t dim = core::kDefaultFeatureDim);
  std::string to_jsonl() const;

  const std::vector<Product>& products() const noexcept { return products_; }
  std::size_t size() const noexcept { return products_.size(); }
  bool empty() const noexcept { return products_.empty(); }
  const Product* find(const std::string& product_id) const;

 private:
  std::vector<Product> products_;
};

struct RecommendConfig {
  double display_threshold = 0.2;
  std::int64_t merge_window_ms = 10'000;
  std::size_t dim = core::kDefaultFeatureDim;
};

struct Decision {
  bool show = false;
  const Product* product = nullptr;
  std::string rendered_text;
  double similarity = 0.0;
  bool empty_catalog = false;
};

struct SelectedValue {
  const core::FeatureSpec* spec = nullptr;
  core::FeatureValue value;
};

std::string render_ad(const Product& product, std::string_view message_text);

/// Mean of the selected values' hashed-text embeddings.
core::SparseVector preference_vector(const std::vector<SelectedValue>& selected, std::size_t dim);

/// Closest catalog item by cosine similarity to the mean selected-value
/// embedding; shown iff similarity >= display_threshold. Ties go to the lower
/// product_id.
Decision recommend(const std::vector<SelectedValue>& selected, const Catalog& catalog,
                   const RecommendConfig& cfg, std::string_view message_text = {});

/// Keyword-matching baseline: most product keywords present in the message;
/// shown iff the overlap is at least one.
Decision baseline_recommend(std::string_view message_text, const Catalog& catalog);
std::size_t keyword_overlap(std::string_view message_text, const Product& product);

enum class Source { echo, baseline };
std::string_view to_string(Source s) noexcept;
Source source_from_string(std::string_view s);

struct Impression {
  std::string impression_id;
  std::string session_id;
  std::string user_id;
  std::string product_id;
  std::string vertical;
  std::uint64_t content_hash = 0;
  std::int64_t shown_at = 0;
  /// Timestamp of the latest display attempt folded into this impression.
  std::int64_t last_attempt_at = 0;
  std::vector<std::int64_t> clicks;
  Source source = Source::echo;
  bool operator==(const Impression&) const = default;
};

/// Outcome of one display attempt.
struct RecordResult {
  std::string impression_id;
  bool created = false;
  bool deduplicated = false;  // same content already shown in the session
  bool merged = false;        // message too close to the previous display
};

/// Impression/click accounting:
///  - identical content within a session is one impression (reloads are free);
///  - displays from messages closer than the merge window fold into the
///    previous impression of the same session and source;
///  - every click counts, including repeats on one impression.
class Ledger {
 public:
  explicit Ledger(std::int64_t merge_window_ms = 10'000) : merge_window_ms_(merge_window_ms) {}

  RecordResult record_impression(const std::string& session_id, const std::string& user_id,
                                 Source source, const Product& product,
                                 std::string_view rendered_text, std::int64_t shown_at);
  /// Returns the impression's click count. Throws std::out_of_range for an
  /// unknown impression.
  std::size_t record_click(const std::string& impression_id, std::int64_t at);

  const Impression* find(const std::string& impression_id) const;
  const std::vector<Impression>& impressions() const noexcept { return impressions_; }
  std::size_t total_clicks() const noexcept;

 private:
  std::int64_t merge_window_ms_;
  std::vector<Impression> impressions_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> by_content_;
  std::map<std::pair<std::string, Source>, std::size_t> last_in_session_;
};

/// Offline form of the ledger's rules over raw display records (each record
/// one display). Idempotent: merge_pass(merge_pass(x)) == merge_pass(x).
std::vector<Impression> merge_pass(const std::vector<Impression>& displays,
                                   std::int64_t merge_window_ms);

struct CtrRow {
  std::string group;
  std::size_t impressions = 0;
  std::size_t clicks = 0;
  std::optional<double> ctr;
};

struct CtrReport {
  std::vector<CtrRow> rows;
  const CtrRow* find(std::string_view group) const;
  /// CSV with header `group,impressions,clicks,ctr`; ctr to 4 decimals.
  std::string to_csv() const;
};

std::optional<double> ctr(std::size_t clicks, std::size_t impressions) noexcept;
/// Fixed 4-decimal rendering of a ratio, e.g. "0.0140".
std::string format_ctr(std::optional<double> value);

std::int64_t day_index(std::int64_t timestamp_ms) noexcept;
std::string_view weekday_name(std::int64_t timestamp_ms) noexcept;

/// Totals per source, then per source by day, weekday and vertical.
CtrReport ctr_report(const std::vector<Impression>& impressions);

}  // namespace echo::recommend

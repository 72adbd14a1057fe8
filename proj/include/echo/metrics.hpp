#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "echo/core/rng.hpp"

namespace echo::metrics {

inline constexpr std::size_t kOptionCount = 4;

/// One labeling task with the author's answer and other sources' answers.
struct AnnotationRecord {
  std::string record_id;
  std::string user_id;
  std::string conversation_id;
  std::string conversation;
  std::string question;
  std::vector<std::string> options;  // exactly 4
  std::size_t author_label = 0;
  /// source_id -> one option index per annotator.
  std::map<std::string, std::vector<std::size_t>> sources;
};

/// Throws std::invalid_argument when a record breaks an invariant.
void validate(const AnnotationRecord& r);

/// Line-delimited JSON: {record_id, user_id, task: {question, options[4]},
/// conversation: {conversation_id, text}, author_label, sources: {id: [..]}}.
std::vector<AnnotationRecord> records_from_jsonl(std::string_view text);
std::string records_to_jsonl(const std::vector<AnnotationRecord>& records);

/// Most frequent label; ties resolved uniformly at random by `rng`.
std::size_t majority_label(const std::vector<std::size_t>& labels, core::Rng& rng);

/// Tie-break stream for one record and source. Every metric that needs a
/// majority label draws from this, so the same seed gives the same votes.
core::Rng vote_rng(std::uint64_t seed, const AnnotationRecord& r, std::string_view source);

/// Share of records whose majority label equals the author label. Throws
/// std::invalid_argument when a record has no labels from `source`.
double author_accuracy(const std::vector<AnnotationRecord>& records, const std::string& source,
                       std::uint64_t seed = 0);

/// (p_o - p_e) / (1 - p_e) with p_e from the two marginals. When p_e = 1 the
/// value is 1 if p_o = 1, else 0. Throws on length mismatch or empty input.
double cohen_kappa(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

enum class KappaFlavor { pairwise_cohen, fleiss };

/// Source agreement. pairwise_cohen: mean of Cohen's kappa over annotator
/// slot pairs (records lacking a slot are skipped for that pair). fleiss:
/// Fleiss' kappa over records with the modal annotator count.
double source_kappa(const std::vector<AnnotationRecord>& records, const std::string& source,
                    KappaFlavor flavor = KappaFlavor::pairwise_cohen);
double fleiss_kappa(const std::vector<std::vector<std::size_t>>& ratings, std::size_t categories);

/// Smoothed distribution: (p + eps) renormalized.
std::vector<double> smooth(const std::vector<double>& p, double eps = 1e-6);
/// sum p log(p / q) in nats.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);
/// D_KL(author || source) over pooled option positions, author labels vs
/// source majority labels, both add-eps smoothed.
double kl_to_author(const std::vector<AnnotationRecord>& records, const std::string& source,
                    std::uint64_t seed = 0, double eps = 1e-6);

struct Cell {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy() const {
    return n ? std::optional<double>(static_cast<double>(correct) / static_cast<double>(n)) : std::nullopt;
  }
};

struct AgreementPartition {
  Cell three_agree;
  Cell two_agree;
  Cell none_agree;
  /// Records without exactly three annotations from the source.
  std::size_t excluded = 0;
};

AgreementPartition agreement_partition(const std::vector<AnnotationRecord>& records,
                                       const std::string& source, std::uint64_t seed = 0);

struct SourceReport {
  std::string source_id;
  double author_accuracy = 0.0;
  double kappa = 0.0;
  double kl_to_author = 0.0;
  AgreementPartition partition;
};

SourceReport source_report(const std::vector<AnnotationRecord>& records, const std::string& source,
                           std::uint64_t seed = 0, KappaFlavor flavor = KappaFlavor::pairwise_cohen);

/// Every source id that appears in any record, sorted.
std::vector<std::string> source_ids(const std::vector<AnnotationRecord>& records);

// ---- consistency predictor harness ----

struct LabeledExample {
  std::string conversation_id;
  std::string conversation;
  std::string question;
  std::vector<std::string> options;
  std::size_t label = 0;
  bool same_conversation = false;
};

struct ConsistencyQuery {
  std::string user_id;
  std::string conversation_id;
  std::string conversation;
  std::string question;
  std::vector<std::string> options;
  std::vector<LabeledExample> examples;
};

/// Pluggable next-label predictor; returns an option index.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual std::size_t predict(const ConsistencyQuery& query) = 0;
};

/// Uses the example labels as a prior over the current options: each
/// example votes for the options resembling the text it was labeled with
/// (hashed-text cosine), in-conversation examples with double weight. The
/// conversation's resemblance to each option breaks near-ties.
class PosteriorHeuristicPredictor : public Predictor {
 public:
  explicit PosteriorHeuristicPredictor(double in_conversation_weight = 2.0, double conversation_weight = 0.05)
      : in_conversation_weight_(in_conversation_weight), conversation_weight_(conversation_weight) {}
  std::string name() const override { return "posterior_heuristic"; }
  std::size_t predict(const ConsistencyQuery& query) override;

 private:
  double in_conversation_weight_;
  double conversation_weight_;
};

class RandomPredictor : public Predictor {
 public:
  explicit RandomPredictor(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  std::size_t predict(const ConsistencyQuery& query) override;

 private:
  core::Rng rng_;
};

/// Prompt text for LLM-backed predictors: the conversation, the labeled
/// examples and the question with lettered options, asking for one letter.
std::string render_prompt(const ConsistencyQuery& query);

/// Reads the first option letter (A-D) from a model reply.
std::optional<std::size_t> parse_option_letter(std::string_view reply);

struct ConsistencyConfig {
  /// "author", "random", or a source id (majority vote of that source).
  std::string label_source = "author";
  std::size_t example_count = 5;
  std::size_t runs = 3;
  std::uint64_t seed = 0;
};

struct ConsistencyResult {
  std::string label_source;
  std::vector<double> run_accuracy;
  double mean = 0.0;
  double stddev = 0.0;
  /// Index = number of in-conversation examples, pooled over runs.
  std::vector<Cell> by_in_conversation;
  std::size_t evaluated = 0;  // per run
  std::size_t skipped = 0;    // records whose user lacks enough history

  /// accuracy(in-conversation >= 1) - accuracy(in-conversation == 0).
  std::optional<double> in_conversation_gain() const;
};

ConsistencyResult consistency_experiment(const std::vector<AnnotationRecord>& records, Predictor& predictor,
                                         const ConsistencyConfig& cfg);

// ---- cost / time ----

struct CostInput {
  std::string method;
  double payment = 0.0;  // total paid for `items`
  std::size_t items = 0;
  double duration_s = 0.0;  // total time for `items`

  static CostInput from_hourly(std::string method, double hourly_rate, std::size_t items, double duration_s);
};

struct CostRow {
  std::string method;
  double cost_per_datum = 0.0;
  double seconds_per_datum = 0.0;
  double hourly_rate = 0.0;
};

/// Throws std::invalid_argument for zero items or a non-positive duration.
CostRow cost_analysis(const CostInput& in);
std::vector<CostRow> cost_analysis(const std::vector<CostInput>& inputs);

// ---- CSV reports ----

std::string table1_csv(const std::vector<SourceReport>& reports);
std::string table3_csv(const std::vector<SourceReport>& reports);
std::string table4_csv(const std::vector<ConsistencyResult>& results);
std::string in_conversation_csv(const std::vector<ConsistencyResult>& results);
std::string table5_csv(const std::vector<CostRow>& rows);

}  // namespace echo::metrics

#include "echo/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "echo/core/event_log.hpp"
#include "echo/core/text.hpp"

namespace echo::metrics {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const std::vector<std::size_t>& labels_of(const AnnotationRecord& r, const std::string& source) {
  const auto it = r.sources.find(source);
  if (it == r.sources.end() || it->second.empty())
    throw std::invalid_argument("record " + r.record_id + " has no labels from source '" + source + "'");
  return it->second;
}

std::size_t source_majority(const AnnotationRecord& r, const std::string& source, std::uint64_t seed) {
  auto rng = vote_rng(seed, r, source);
  return majority_label(labels_of(r, source), rng);
}

}  // namespace

void validate(const AnnotationRecord& r) {
  if (r.options.size() != kOptionCount)
    throw std::invalid_argument("record " + r.record_id + ": expected 4 options");
  if (r.author_label >= r.options.size())
    throw std::invalid_argument("record " + r.record_id + ": author_label out of range");
  for (const auto& [id, labels] : r.sources)
    for (auto l : labels)
      if (l >= r.options.size())
        throw std::invalid_argument("record " + r.record_id + ": label from '" + id + "' out of range");
}

std::vector<AnnotationRecord> records_from_jsonl(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (core::trim(line).empty()) continue;
    try {
      const auto j = core::Json::parse(line);
      AnnotationRecord r;
      r.record_id = j.at("record_id").get<std::string>();
      r.user_id = j.at("user_id").get<std::string>();
      const auto& task = j.at("task");
      r.question = task.at("question").get<std::string>();
      r.options = task.at("options").get<std::vector<std::string>>();
      const auto& conv = j.at("conversation");
      r.conversation_id = conv.at("conversation_id").get<std::string>();
      r.conversation = conv.value("text", std::string{});
      r.author_label = j.at("author_label").get<std::size_t>();
      if (j.contains("sources"))
        for (const auto& [id, labels] : j.at("sources").items())
          r.sources[id] = labels.get<std::vector<std::size_t>>();
      validate(r);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::invalid_argument("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string records_to_jsonl(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    core::Json j;
    j["record_id"] = r.record_id;
    j["user_id"] = r.user_id;
    j["task"] = {{"question", r.question}, {"options", r.options}};
    j["conversation"] = {{"conversation_id", r.conversation_id}, {"text", r.conversation}};
    j["author_label"] = r.author_label;
    core::Json sources = core::Json::object();
    for (const auto& [id, labels] : r.sources) sources[id] = labels;
    j["sources"] = std::move(sources);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::size_t majority_label(const std::vector<std::size_t>& labels, core::Rng& rng) {
  if (labels.empty()) throw std::invalid_argument("majority of no labels");
  std::map<std::size_t, std::size_t> counts;
  for (auto l : labels) ++counts[l];
  std::size_t best = 0;
  for (const auto& [l, c] : counts) best = std::max(best, c);
  std::vector<std::size_t> tied;
  for (const auto& [l, c] : counts)
    if (c == best) tied.push_back(l);
  return tied.size() == 1 ? tied.front() : tied[rng.below(tied.size())];
}

core::Rng vote_rng(std::uint64_t seed, const AnnotationRecord& r, std::string_view source) {
  return core::Rng::substream({seed ^ core::fnv1a(source)}, "vote", core::fnv1a(r.record_id));
}

double author_accuracy(const std::vector<AnnotationRecord>& records, const std::string& source,
                       std::uint64_t seed) {
  if (records.empty()) throw std::invalid_argument("author_accuracy: no records");
  std::size_t correct = 0;
  for (const auto& r : records) correct += source_majority(r, source, seed) == r.author_label;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double cohen_kappa(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: length mismatch");
  if (a.empty()) throw std::invalid_argument("cohen_kappa: empty input");
  const double n = static_cast<double>(a.size());
  std::map<std::size_t, double> ma, mb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i];
    ma[a[i]] += 1.0;
    mb[b[i]] += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [l, c] : ma)
    if (auto it = mb.find(l); it != mb.end()) pe += (c / n) * (it->second / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<std::size_t>>& ratings, std::size_t categories) {
  if (ratings.empty()) throw std::invalid_argument("fleiss_kappa: no items");
  const std::size_t m = ratings.front().size();
  if (m < 2) throw std::invalid_argument("fleiss_kappa: needs at least two raters per item");
  std::vector<double> totals(categories, 0.0);
  double pbar = 0.0;
  for (const auto& item : ratings) {
    if (item.size() != m) throw std::invalid_argument("fleiss_kappa: unequal rater counts");
    std::vector<double> c(categories, 0.0);
    for (auto l : item) {
      if (l >= categories) throw std::invalid_argument("fleiss_kappa: label out of range");
      c[l] += 1.0;
    }
    double sq = 0.0;
    for (std::size_t j = 0; j < categories; ++j) {
      sq += c[j] * c[j];
      totals[j] += c[j];
    }
    pbar += (sq - static_cast<double>(m)) / static_cast<double>(m * (m - 1));
  }
  const double n_items = static_cast<double>(ratings.size());
  pbar /= n_items;
  double pe = 0.0;
  for (double t : totals) {
    const double p = t / (n_items * static_cast<double>(m));
    pe += p * p;
  }
  if (pe >= 1.0) return pbar >= 1.0 ? 1.0 : 0.0;
  return (pbar - pe) / (1.0 - pe);
}

double source_kappa(const std::vector<AnnotationRecord>& records, const std::string& source,
                    KappaFlavor flavor) {
  std::size_t slots = 0;
  for (const auto& r : records)
    if (auto it = r.sources.find(source); it != r.sources.end()) slots = std::max(slots, it->second.size());
  if (slots < 2) throw std::invalid_argument("source '" + source + "' needs at least two annotators");

  if (flavor == KappaFlavor::fleiss) {
    std::map<std::size_t, std::size_t> by_count;
    for (const auto& r : records)
      if (auto it = r.sources.find(source); it != r.sources.end()) ++by_count[it->second.size()];
    std::size_t modal = 0, best = 0;
    for (const auto& [m, c] : by_count)
      if (m >= 2 && c > best) best = c, modal = m;
    std::vector<std::vector<std::size_t>> ratings;
    for (const auto& r : records)
      if (auto it = r.sources.find(source); it != r.sources.end() && it->second.size() == modal)
        ratings.push_back(it->second);
    return fleiss_kappa(ratings, kOptionCount);
  }

  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < slots; ++i) {
    for (std::size_t j = i + 1; j < slots; ++j) {
      std::vector<std::size_t> a, b;
      for (const auto& r : records) {
        const auto it = r.sources.find(source);
        if (it == r.sources.end() || it->second.size() <= j) continue;
        a.push_back(it->second[i]);
        b.push_back(it->second[j]);
      }
      if (a.empty()) continue;
      sum += cohen_kappa(a, b);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

std::vector<double> smooth(const std::vector<double>& p, double eps) {
  std::vector<double> out(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += out[i] = p[i] + eps;
  for (auto& v : out) v /= total;
  return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) d += p[i] * std::log(p[i] / q[i]);
  return d;
}

double kl_to_author(const std::vector<AnnotationRecord>& records, const std::string& source,
                    std::uint64_t seed, double eps) {
  if (records.empty()) throw std::invalid_argument("kl_to_author: no records");
  std::vector<double> p(kOptionCount, 0.0), q(kOptionCount, 0.0);
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    p[r.author_label] += 1.0 / n;
    q[source_majority(r, source, seed)] += 1.0 / n;
  }
  return kl_divergence(smooth(p, eps), smooth(q, eps));
}

AgreementPartition agreement_partition(const std::vector<AnnotationRecord>& records,
                                       const std::string& source, std::uint64_t seed) {
  AgreementPartition part;
  for (const auto& r : records) {
    const auto it = r.sources.find(source);
    if (it == r.sources.end() || it->second.size() != 3) {
      ++part.excluded;
      continue;
    }
    const auto& l = it->second;
    const std::size_t distinct = 1 + (l[1] != l[0]) + (l[2] != l[0] && l[2] != l[1]);
    Cell& cell = distinct == 1 ? part.three_agree : distinct == 2 ? part.two_agree : part.none_agree;
    ++cell.n;
    cell.correct += source_majority(r, source, seed) == r.author_label;
  }
  return part;
}

SourceReport source_report(const std::vector<AnnotationRecord>& records, const std::string& source,
                           std::uint64_t seed, KappaFlavor flavor) {
  SourceReport rep;
  rep.source_id = source;
  rep.author_accuracy = author_accuracy(records, source, seed);
  rep.kappa = source_kappa(records, source, flavor);
  rep.kl_to_author = kl_to_author(records, source, seed);
  rep.partition = agreement_partition(records, source, seed);
  return rep;
}

std::vector<std::string> source_ids(const std::vector<AnnotationRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records)
    for (const auto& [id, labels] : r.sources) out.push_back(id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---- predictors ----

std::size_t PosteriorHeuristicPredictor::predict(const ConsistencyQuery& q) {
  if (q.options.empty()) throw std::invalid_argument("query without options");
  std::vector<core::SparseVector> opts;
  for (const auto& o : q.options) opts.push_back(core::featurize(o));
  std::vector<double> score(opts.size(), 0.0);
  for (const auto& e : q.examples) {
    if (e.label >= e.options.size()) continue;
    const auto chosen = core::featurize(e.options[e.label]);
    const double w = e.same_conversation ? in_conversation_weight_ : 1.0;
    for (std::size_t j = 0; j < opts.size(); ++j) score[j] += w * core::cosine_similarity(chosen, opts[j]);
  }
  const auto conv = core::featurize(q.conversation);
  for (std::size_t j = 0; j < opts.size(); ++j)
    score[j] += conversation_weight_ * core::cosine_similarity(conv, opts[j]);
  return static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
}

std::size_t RandomPredictor::predict(const ConsistencyQuery& q) {
  if (q.options.empty()) throw std::invalid_argument("query without options");
  return rng_.below(q.options.size());
}

std::string render_prompt(const ConsistencyQuery& q) {
  auto letter = [](std::size_t i) { return std::string(1, static_cast<char>('A' + i)); };
  std::ostringstream o;
  o << "You will guess how a user answered a question about their own conversation.\n\n";
  if (!q.examples.empty()) {
    o << "Earlier answers from the same user:\n";
    for (std::size_t i = 0; i < q.examples.size(); ++i) {
      const auto& e = q.examples[i];
      o << "\n[" << (i + 1) << "]" << (e.same_conversation ? " (same conversation)" : "") << "\n"
        << "Conversation: " << e.conversation << "\nQuestion: " << e.question << "\n";
      for (std::size_t j = 0; j < e.options.size(); ++j) o << letter(j) << ") " << e.options[j] << "\n";
      o << "Answer: " << letter(e.label) << "\n";
    }
    o << "\n";
  }
  o << "Conversation: " << q.conversation << "\nQuestion: " << q.question << "\n";
  for (std::size_t j = 0; j < q.options.size(); ++j) o << letter(j) << ") " << q.options[j] << "\n";
  o << "Reply with one letter.\n";
  return o.str();
}

std::optional<std::size_t> parse_option_letter(std::string_view reply) {
  auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c < 'A' || c > 'D') continue;
    const bool left = i == 0 || !is_alpha(reply[i - 1]);
    const bool right = i + 1 == reply.size() || !is_alpha(reply[i + 1]);
    if (left && right) return static_cast<std::size_t>(c - 'A');
  }
  return std::nullopt;
}

// ---- consistency experiment ----

std::optional<double> ConsistencyResult::in_conversation_gain() const {
  Cell none, some;
  for (std::size_t i = 0; i < by_in_conversation.size(); ++i) {
    Cell& c = i == 0 ? none : some;
    c.n += by_in_conversation[i].n;
    c.correct += by_in_conversation[i].correct;
  }
  if (!none.n || !some.n) return std::nullopt;
  return *some.accuracy() - *none.accuracy();
}

ConsistencyResult consistency_experiment(const std::vector<AnnotationRecord>& records, Predictor& predictor,
                                         const ConsistencyConfig& cfg) {
  ConsistencyResult res;
  res.label_source = cfg.label_source;
  res.by_in_conversation.assign(cfg.example_count + 1, Cell{});

  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < records.size(); ++i) by_user[records[i].user_id].push_back(i);

  const core::RngSeed base{cfg.seed};
  auto example_label = [&](std::size_t idx, std::size_t run) -> std::size_t {
    const auto& r = records[idx];
    if (cfg.label_source == "author") return r.author_label;
    if (cfg.label_source == "random") {
      auto rng = core::Rng::substream(base, "random-label", core::splitmix64(run) ^ core::fnv1a(r.record_id));
      return rng.below(r.options.size());
    }
    return source_majority(r, cfg.label_source, cfg.seed);
  };

  for (std::size_t run = 0; run < cfg.runs; ++run) {
    std::size_t n = 0, correct = 0, skipped = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      std::vector<std::size_t> pool;
      for (auto j : by_user[r.user_id])
        if (j != i) pool.push_back(j);
      if (pool.size() < cfg.example_count) {
        ++skipped;
        continue;
      }
      auto rng = core::Rng::substream(base, "examples", core::splitmix64(run) ^ core::fnv1a(r.record_id));
      rng.shuffle(pool);
      pool.resize(cfg.example_count);

      ConsistencyQuery q{r.user_id, r.conversation_id, r.conversation, r.question, r.options, {}};
      std::size_t in_conv = 0;
      for (auto j : pool) {
        const auto& e = records[j];
        const bool same = e.conversation_id == r.conversation_id;
        in_conv += same;
        q.examples.push_back({e.conversation_id, e.conversation, e.question, e.options, example_label(j, run), same});
      }
      const auto guess = predictor.predict(q);
      if (guess >= r.options.size())
        throw std::out_of_range(predictor.name() + " returned option " + std::to_string(guess));
      const bool ok = guess == r.author_label;
      ++n;
      correct += ok;
      ++res.by_in_conversation[in_conv].n;
      res.by_in_conversation[in_conv].correct += ok;
    }
    res.evaluated = n;
    res.skipped = skipped;
    res.run_accuracy.push_back(n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0);
  }

  if (!res.run_accuracy.empty()) {
    const double k = static_cast<double>(res.run_accuracy.size());
    res.mean = std::accumulate(res.run_accuracy.begin(), res.run_accuracy.end(), 0.0) / k;
    if (res.run_accuracy.size() > 1) {
      double ss = 0.0;
      for (double a : res.run_accuracy) ss += (a - res.mean) * (a - res.mean);
      res.stddev = std::sqrt(ss / (k - 1.0));
    }
  }
  return res;
}

// ---- cost ----

CostInput CostInput::from_hourly(std::string method, double hourly_rate, std::size_t items, double duration_s) {
  return CostInput{std::move(method), hourly_rate * duration_s / 3600.0, items, duration_s};
}

CostRow cost_analysis(const CostInput& in) {
  if (in.items == 0) throw std::invalid_argument(in.method + ": items must be positive");
  if (!(in.duration_s > 0.0)) throw std::invalid_argument(in.method + ": duration must be positive");
  if (in.payment < 0.0) throw std::invalid_argument(in.method + ": payment must be non-negative");
  CostRow row;
  row.method = in.method;
  const double items = static_cast<double>(in.items);
  row.cost_per_datum = in.payment / items;
  row.seconds_per_datum = in.duration_s / items;
  row.hourly_rate = in.payment / in.duration_s * 3600.0;
  return row;
}

std::vector<CostRow> cost_analysis(const std::vector<CostInput>& inputs) {
  std::vector<CostRow> out;
  for (const auto& in : inputs) out.push_back(cost_analysis(in));
  return out;
}

// ---- CSV ----

std::string table1_csv(const std::vector<SourceReport>& reports) {
  std::string out = "source,author_accuracy,kappa,kl_divergence\n";
  for (const auto& r : reports)
    out += csv_field(r.source_id) + "," + fmt(r.author_accuracy) + "," + fmt(r.kappa) + "," + fmt(r.kl_to_author) + "\n";
  return out;
}

std::string table3_csv(const std::vector<SourceReport>& reports) {
  std::string out = "source,agreement,n,accuracy\n";
  for (const auto& r : reports) {
    const std::pair<const char*, const Cell*> rows[] = {
        {"three", &r.partition.three_agree}, {"two", &r.partition.two_agree}, {"none", &r.partition.none_agree}};
    for (const auto& [name, cell] : rows) {
      const auto acc = cell->accuracy();
      out += csv_field(r.source_id) + "," + name + "," + std::to_string(cell->n) + "," + (acc ? fmt(*acc) : "") + "\n";
    }
  }
  return out;
}

std::string table4_csv(const std::vector<ConsistencyResult>& results) {
  std::string out = "label_source,mean,std,runs,evaluated,skipped\n";
  for (const auto& r : results)
    out += csv_field(r.label_source) + "," + fmt(r.mean) + "," + fmt(r.stddev) + "," +
           std::to_string(r.run_accuracy.size()) + "," + std::to_string(r.evaluated) + "," +
           std::to_string(r.skipped) + "\n";
  return out;
}

std::string in_conversation_csv(const std::vector<ConsistencyResult>& results) {
  std::string out = "label_source,in_conversation,n,accuracy\n";
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.by_in_conversation.size(); ++i) {
      const auto acc = r.by_in_conversation[i].accuracy();
      out += csv_field(r.label_source) + "," + std::to_string(i) + "," + std::to_string(r.by_in_conversation[i].n) +
             "," + (acc ? fmt(*acc) : "") + "\n";
    }
  return out;
}

std::string table5_csv(const std::vector<CostRow>& rows) {
  std::string out = "method,cost_per_datum,seconds_per_datum,hourly_rate\n";
  for (const auto& r : rows)
    out += csv_field(r.method) + "," + fmt(r.cost_per_datum) + "," + fmt(r.seconds_per_datum) + "," +
           fmt(r.hourly_rate) + "\n";
  return out;
}

}  // namespace echo::metrics

// echo command-line entry point.
//
// Exit codes: 0 success, 2 configuration error, 1 runtime error.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "echo/config.hpp"
#include "echo/metrics.hpp"
#include "echo/service.hpp"
#include "echo/sim.hpp"
#include "echo/sim_annotations.hpp"

namespace {

namespace fs = std::filesystem;
using namespace echo;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

int cmd_serve(const fs::path& config_path, int port_override, const std::string& host) {
  config::ServiceConfig sc;
  try {
    sc = config::load_service_config(config_path);
    if (port_override >= 0) sc.port = port_override;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  auto api = service::Api::open(sc);
  std::cerr << "listening on " << host << ":" << sc.port << " (data in " << sc.data_dir.string() << ")\n";
  if (!service::serve(*api, host, sc.port)) {
    std::cerr << "cannot listen on " << host << ":" << sc.port << "\n";
    return kRuntimeError;
  }
  return kOk;
}

int cmd_run_sim(const fs::path& scenario_path, const fs::path& out) {
  sim::SimScenario sc;
  try {
    sc = sim::load_scenario(scenario_path);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  const auto run = sim::run_experiment(sc);
  sim::write_run(run, sc, out);
  config::write_file(out / "scenario.conf", sim::render_scenario(sc));

  auto show = [](std::optional<double> v) { return v ? recommend::format_ctr(v) : std::string("n/a"); };
  std::cout << "events            " << run.log.size() << "\n"
            << "surveys shown     " << run.surveys_shown << "\n"
            << "labels            " << run.labels << "\n"
            << "completion rate   " << show(run.completion_rate) << "\n"
            << "echo ctr          " << show(run.source_ctr(recommend::Source::echo)) << "\n"
            << "baseline ctr      " << show(run.source_ctr(recommend::Source::baseline)) << "\n";
  if (!run.learning_curves.empty())
    std::printf("heldout accuracy  %.4f -> %.4f\n", run.initial_accuracy(), run.final_accuracy());
  if (sc.audit) std::cout << "audit violations  " << run.audit.violations() << "\n";
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

struct AnalyzeOptions {
  fs::path records;
  fs::path report;
  std::string kappa = "pairwise";
  std::uint64_t seed = 0;
  std::size_t runs = 3;
  std::size_t examples = 5;
  fs::path costs;
};

// CSV rows: method,payment,hourly_rate,items,duration_s with exactly one of
// payment / hourly_rate filled in.
std::vector<metrics::CostInput> read_costs(const fs::path& path) {
  std::istringstream in(config::read_file(path));
  std::string line;
  std::vector<metrics::CostInput> out;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || core::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(core::trim(cell));
    if (line.back() == ',') f.emplace_back();
    const auto where = "costs line " + std::to_string(line_no);
    if (f.size() != 5) throw config::ConfigError(where, "expected method,payment,hourly_rate,items,duration_s");
    try {
      const auto items = static_cast<std::size_t>(std::stoul(f[3]));
      const double duration = std::stod(f[4]);
      if (!f[1].empty() == !f[2].empty()) throw config::ConfigError(where, "fill exactly one of payment, hourly_rate");
      out.push_back(f[1].empty() ? metrics::CostInput::from_hourly(f[0], std::stod(f[2]), items, duration)
                                 : metrics::CostInput{f[0], std::stod(f[1]), items, duration});
    } catch (const config::ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw config::ConfigError(where, "bad number");
    }
  }
  return out;
}

int cmd_analyze(const AnalyzeOptions& o) {
  metrics::KappaFlavor flavor;
  if (o.kappa == "pairwise") {
    flavor = metrics::KappaFlavor::pairwise_cohen;
  } else if (o.kappa == "fleiss") {
    flavor = metrics::KappaFlavor::fleiss;
  } else {
    std::cerr << "config error: --kappa must be pairwise or fleiss\n";
    return kConfigError;
  }
  std::vector<metrics::CostInput> costs;
  if (!o.costs.empty()) {
    try {
      costs = read_costs(o.costs);
    } catch (const config::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
  }

  const auto records = metrics::records_from_jsonl(config::read_file(o.records));
  if (records.empty()) throw std::runtime_error("no records in " + o.records.string());
  const auto sources = metrics::source_ids(records);

  std::vector<metrics::SourceReport> reports;
  for (const auto& s : sources) reports.push_back(metrics::source_report(records, s, o.seed, flavor));

  std::vector<std::string> label_sources{"author"};
  label_sources.insert(label_sources.end(), sources.begin(), sources.end());
  label_sources.push_back("random");
  std::vector<metrics::ConsistencyResult> consistency;
  for (const auto& ls : label_sources) {
    metrics::PosteriorHeuristicPredictor predictor;
    consistency.push_back(metrics::consistency_experiment(records, predictor, {ls, o.examples, o.runs, o.seed}));
  }

  config::write_file(o.report / "table1.csv", metrics::table1_csv(reports));
  config::write_file(o.report / "table3.csv", metrics::table3_csv(reports));
  config::write_file(o.report / "table4.csv", metrics::table4_csv(consistency));
  config::write_file(o.report / "in_conversation.csv", metrics::in_conversation_csv(consistency));
  if (!costs.empty()) config::write_file(o.report / "table5.csv", metrics::table5_csv(metrics::cost_analysis(costs)));
  std::cout << metrics::table1_csv(reports) << "\n" << metrics::table4_csv(consistency);
  std::cout << "wrote " << o.report.string() << "\n";
  return kOk;
}

int cmd_replay(const fs::path& log_path, std::optional<std::uint64_t> seed, fs::path config_path, fs::path out) {
  const auto dir = log_path.parent_path();
  if (config_path.empty()) config_path = dir / "engine.conf";
  EngineConfig cfg;
  try {
    const auto kv = config::KeyValueFile::load(config_path);
    config::apply_engine_keys(kv, cfg);
    if (const auto unknown = kv.unknown_keys(); !unknown.empty())
      throw config::ConfigError(unknown.front(), "unknown key");
    config::validate(cfg);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  if (seed) cfg.seed = *seed;

  const auto log = core::EventLog::read(log_path);
  auto registry = config::registry_from_jsonl(config::read_file(dir / "registry.jsonl"));
  auto catalog = recommend::Catalog::from_jsonl(config::read_file(dir / "catalog.jsonl"), cfg.model.input_dim);
  const auto engine = Engine::replay(log, std::move(registry), std::move(catalog), cfg);

  if (out.empty()) out = dir / "replay";
  const auto replayed = engine.log().to_jsonl();
  config::write_file(out / "events.jsonl", replayed);
  config::write_file(out / "ctr.csv", recommend::ctr_report(engine.ledger().impressions()).to_csv());
  const bool identical = replayed == log.to_jsonl();
  std::printf("events %zu, checksum %016llx, log %s\n", engine.log().size(),
              static_cast<unsigned long long>(engine.checksum()), identical ? "identical" : "DIVERGED");
  std::cout << "wrote " << out.string() << "\n";
  return identical ? kOk : kRuntimeError;
}

int cmd_make_world(const fs::path& out, std::uint64_t seed, std::size_t products) {
  const auto world = sim::default_world({seed, products, core::kDefaultFeatureDim});
  config::write_file(out / "registry.jsonl", config::registry_to_jsonl(world.registry));
  config::write_file(out / "catalog.jsonl", world.catalog.to_jsonl());
  EngineConfig cfg;
  cfg.seed = seed;
  std::string conf = "registry = \"registry.jsonl\"\ncatalog = \"catalog.jsonl\"\ndata_dir = \"data\"\nport = 8080\n";
  conf += config::render_engine_config(cfg);
  config::write_file(out / "service.conf", conf);
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

int cmd_sim_annotations(const fs::path& out, std::uint64_t seed, std::size_t users) {
  sim::AnnotationSimConfig cfg;
  cfg.seed = seed;
  cfg.users = users;
  config::write_file(out, metrics::records_to_jsonl(sim::generate_annotation_records(cfg)));
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echo: author-labeled online learning service and tools"};
  app.require_subcommand(1);

  fs::path serve_config;
  int serve_port = -1;
  std::string serve_host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Run the HTTP session API");
  serve->add_option("--config", serve_config, "Service config file")->required();
  serve->add_option("--port", serve_port, "Override the configured port");
  serve->add_option("--host", serve_host, "Bind address");

  fs::path scenario, sim_out;
  auto* run_sim = app.add_subcommand("run-sim", "Run a simulated deployment and write its reports");
  run_sim->add_option("--scenario", scenario, "Scenario config file")->required();
  run_sim->add_option("--out", sim_out, "Output directory")->required();

  AnalyzeOptions analyze_opts;
  auto* analyze = app.add_subcommand("analyze", "Annotation comparison reports from JSONL records");
  analyze->add_option("--records", analyze_opts.records, "Annotation records (JSONL)")->required();
  analyze->add_option("--report", analyze_opts.report, "Report directory")->required();
  analyze->add_option("--kappa", analyze_opts.kappa, "pairwise (default) or fleiss");
  analyze->add_option("--seed", analyze_opts.seed, "Tie-break and sampling seed");
  analyze->add_option("--runs", analyze_opts.runs, "Consistency runs");
  analyze->add_option("--examples", analyze_opts.examples, "Examples per consistency query");
  analyze->add_option("--costs", analyze_opts.costs, "Cost CSV: method,payment,hourly_rate,items,duration_s");

  fs::path replay_log, replay_config, replay_out;
  std::optional<std::uint64_t> replay_seed;
  auto* replay = app.add_subcommand("replay", "Rebuild engine state from an event log");
  replay->add_option("--log", replay_log, "events.jsonl (registry/catalog/engine.conf read from its directory)")
      ->required();
  replay->add_option("--seed", replay_seed, "Override the engine seed");
  replay->add_option("--config", replay_config, "Engine config (default: engine.conf next to the log)");
  replay->add_option("--out", replay_out, "Output directory (default: <log dir>/replay)");

  fs::path world_out;
  std::uint64_t world_seed = 42;
  std::size_t world_products = 100;
  auto* make_world = app.add_subcommand("make-world", "Write the simulated registry, catalog and a service config");
  make_world->add_option("--out", world_out, "Output directory")->required();
  make_world->add_option("--seed", world_seed, "World seed");
  make_world->add_option("--products", world_products, "Catalog size");

  fs::path ann_out;
  std::uint64_t ann_seed = 7;
  std::size_t ann_users = 500;
  auto* sim_ann = app.add_subcommand("sim-annotations", "Write simulated annotation records (JSONL)");
  sim_ann->add_option("--out", ann_out, "Output file")->required();
  sim_ann->add_option("--seed", ann_seed, "Seed");
  sim_ann->add_option("--users", ann_users, "Users (six tasks each)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*serve) return cmd_serve(serve_config, serve_port, serve_host);
    if (*run_sim) return cmd_run_sim(scenario, sim_out);
    if (*analyze) return cmd_analyze(analyze_opts);
    if (*replay) return cmd_replay(replay_log, replay_seed, replay_config, replay_out);
    if (*make_world) return cmd_make_world(world_out, world_seed, world_products);
    if (*sim_ann) return cmd_sim_annotations(ann_out, ann_seed, ann_users);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}

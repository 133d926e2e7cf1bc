// qic: experiment driver.
//
//   qic generate-traces --config scenario.json --out traces/
//   qic dump-catalog    --out catalog.json
//   qic run-small       --config configs/small_scale.json --seed 1 --out out/small
//   qic run-large       --config configs/large_scale.json --seed 1 --out out/large
//   qic summarize       --runs out/small/runs.csv --out out/small
//   qic dump-graph      --config configs/small_scale.json --t 0 --out graph.dot
//
// Failures exit nonzero after printing one JSON line {"error": ..., "kind": ...} to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qic/baselines.hpp"
#include "qic/catalog.hpp"
#include "qic/dyngraph.hpp"
#include "qic/harness.hpp"
#include "qic/radio.hpp"
#include "qic/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "scenario / experiment JSON");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (defaults to the config's seed)");
  cmd->add_option("--out", c.out, "output file or directory");
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string fmt_x(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int run_experiment(const Common& c, const std::string& solvers, int max_slots, bool large) {
  const json root = read_json(c.config);
  qic::ExperimentOptions opt = qic::parse_experiment(root);
  if (!solvers.empty()) opt.solvers = qic::parse_solvers(solvers);
  if (max_slots > 0) opt.max_slots = max_slots;
  const fs::path out = c.out.empty() ? fs::path(large ? "out/large" : "out/small") : fs::path(c.out);
  opt.checkpoint_dir = out;

  std::map<std::string, std::vector<qic::TrainingRow>> logs;
  auto sink = [&](const std::string& sweep, double x, const std::vector<qic::TrainingRow>& rows) {
    auto& log = logs["training_" + sweep + "_" + fmt_x(x) + ".csv"];
    log.insert(log.end(), rows.begin(), rows.end());
  };

  std::vector<qic::RunRecord> records;
  if (large) {
    const std::uint64_t seed = c.seed.value_or(root.value("seed", std::uint64_t{0}));
    records = qic::run_large_scale(opt, seed, sink);
  } else {
    const qic::ScenarioConfig cfg = qic::load_scenario(c.config);
    records = qic::run_small_scale(cfg, opt, c.seed.value_or(cfg.seed), sink);
  }
  const auto summaries = qic::summarize(records);
  qic::emit(records, summaries, out, large ? "large" : "small");
  for (const auto& [name, rows] : logs) {
    std::ostringstream os;
    qic::write_training_log(os, rows);
    write_text(out / name, os.str());
  }
  for (const auto& r : records)
    if (r.status == "skipped") {
      std::cerr << "warning: opt skipped (exhaustive cap exceeded) for " << r.sweep << "="
                << fmt_x(r.x) << '\n';
      break;
    }
  std::cout << "wrote " << records.size() << " records, " << summaries.size()
            << " summary rows to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantile-constrained DNN orchestration experiments"};
  app.require_subcommand(1);

  Common gen, cat, small, large, summ, graph;
  std::string solvers_small, solvers_large, runs_path;
  int max_slots_small = 0, max_slots_large = 0, graph_t = 0;
  std::string graph_solver;

  auto* c_gen = app.add_subcommand("generate-traces", "write one trace CSV per trace source");
  add_common(c_gen, gen, true);
  auto* c_cat = app.add_subcommand("dump-catalog", "write the DNN catalog as JSON");
  add_common(c_cat, cat, false);
  auto* c_small = app.add_subcommand("run-small", "small-scale accuracy/latency sweeps");
  add_common(c_small, small, true);
  c_small->add_option("--solvers", solvers_small, "comma-separated subset of qic,mctp,opt");
  c_small->add_option("--max-slots", max_slots_small, "truncate the horizon");
  auto* c_large = app.add_subcommand("run-large", "large-scale sweep over the mobile-node count");
  add_common(c_large, large, true);
  c_large->add_option("--solvers", solvers_large, "comma-separated subset of qic,mctp");
  c_large->add_option("--max-slots", max_slots_large, "truncate the horizon");
  auto* c_sum = app.add_subcommand("summarize", "recompute summary.csv and plot data from runs.csv");
  add_common(c_sum, summ, false);
  c_sum->add_option("--runs", runs_path, "runs.csv")->required()->check(CLI::ExistingFile);
  auto* c_graph = app.add_subcommand("dump-graph", "write the attributed graph of one slot as DOT");
  add_common(c_graph, graph, true);
  c_graph->add_option("--t", graph_t, "slot index");
  c_graph->add_option("--solver", graph_solver, "apply this solver's configuration (opt or mctp)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  try {
    if (c_gen->parsed()) {
      json root = read_json(gen.config);
      if (gen.seed && root.contains("traces")) {
        std::uint64_t i = 0;
        for (auto& [id, tr] : root["traces"].items())
          if (!tr.contains("csv")) tr["seed"] = *gen.seed + i++;
      }
      const auto cfg = qic::parse_scenario(root, fs::path(gen.config).parent_path());
      const fs::path out = gen.out.empty() ? fs::path("traces") : fs::path(gen.out);
      fs::create_directories(out);
      for (const auto& [id, trace] : cfg.traces) {
        std::ostringstream os;
        qic::radio::write_trace_csv(os, trace);
        write_text(out / (id + ".csv"), os.str());
      }
      std::cout << "wrote " << cfg.traces.size() << " traces to " << out.string() << '\n';
      return 0;
    }
    if (c_cat->parsed()) {
      qic::DnnCatalog catalog = qic::builtin_catalog();
      if (!cat.config.empty()) catalog = qic::load_scenario(cat.config).catalog;
      const std::string text = json(catalog).dump(2) + "\n";
      if (cat.out.empty() || cat.out == "-") std::cout << text;
      else write_text(cat.out, text);
      return 0;
    }
    if (c_small->parsed()) return run_experiment(small, solvers_small, max_slots_small, false);
    if (c_large->parsed()) return run_experiment(large, solvers_large, max_slots_large, true);
    if (c_sum->parsed()) {
      std::ifstream in(runs_path);
      const auto records = qic::read_runs_csv(in);
      if (records.empty()) throw std::runtime_error("no records in " + runs_path);
      bool is_large = true;
      for (const auto& r : records) is_large = is_large && r.sweep == "n_mobile";
      const auto summaries = qic::summarize(records);
      const fs::path out = summ.out.empty() ? fs::path(runs_path).parent_path() : fs::path(summ.out);
      qic::emit(records, summaries, out, is_large ? "large" : "small");
      std::cout << "wrote " << summaries.size() << " summary rows to " << out.string() << '\n';
      return 0;
    }
    if (c_graph->parsed()) {
      const qic::ScenarioConfig cfg = qic::load_scenario(graph.config);
      const qic::SlotModel model(cfg, graph_t);
      qic::GraphSnapshot g = qic::build_initial(cfg, model.state(), graph_t);
      if (!graph_solver.empty()) {
        std::optional<std::vector<int>> joint;
        if (graph_solver == "opt") {
          if (auto r = qic::exhaustive_optimum(model)) joint = r->joint;
        } else if (graph_solver == "mctp") {
          joint = qic::mctp_solve(model, {}, graph.seed.value_or(cfg.seed)).joint;
        } else {
          throw std::invalid_argument("dump-graph supports --solver opt or mctp");
        }
        if (joint) g = qic::apply_action(g, model.configuration(*joint), cfg, model.state(), model.links());
      }
      const std::string dot = qic::to_dot(g);
      if (graph.out.empty() || graph.out == "-") std::cout << dot;
      else write_text(graph.out, dot);
      return 0;
    }
  } catch (const qic::ScenarioError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "scenario"}, {"violations", e.violations()}}.dump()
              << '\n';
    return 3;
  } catch (const json::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "json"}}.dump() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << '\n';
    return 1;
  }
  return 0;
}

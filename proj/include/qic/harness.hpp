#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "qic/baselines.hpp"
#include "qic/qcpo.hpp"
#include "qic/scenario.hpp"

namespace qic {

enum class Solver : std::uint8_t { qic, mctp, opt };

std::string_view to_string(Solver s);
Solver solver_from_string(std::string_view s);
/// Parses a comma-separated list such as "qic,mctp,opt".
std::vector<Solver> parse_solvers(std::string_view list);

/// One (sweep point, solver, slot, application) observation.
struct RunRecord {
  std::string sweep;    // "accuracy", "latency" or "n_mobile"
  double x = 0.0;       // sweep value
  Solver solver = Solver::qic;
  int t = 0;
  std::string app;
  std::string mobile;   // home mobile node
  std::string context;
  double energy = 0.0;            // J per slot
  double latency_quantile = 0.0;  // s
  double accuracy_quantile = 0.0;
  bool app_ok = false;            // accuracy and latency quantile targets met
  bool joint_feasible = false;    // all constraints of the joint configuration
  std::string status = "ok";      // ok | no_solution | skipped

  bool operator==(const RunRecord&) const = default;
};

struct MetricsSummary {
  std::string sweep;
  double x = 0.0;
  Solver solver = Solver::qic;
  int slots = 0;            // slots with an enacted configuration
  int mobiles = 0;
  double avg_energy = 0.0;  // J per slot per mobile node
  double churn = 0.0;
  double avg_latency = 0.0;
  double avg_accuracy = 0.0;
  double feasible_fraction = 0.0;

  bool operator==(const MetricsSummary&) const = default;
};

struct Sweep {
  std::string name;  // "accuracy" or "latency"
  std::vector<double> values;
};

struct ExperimentOptions {
  std::vector<Solver> solvers = {Solver::qic, Solver::mctp, Solver::opt};
  long mctp_iterations = 10000;
  double exhaustive_cap = kDefaultJointCap;
  QcpoParams qcpo;
  int max_slots = 0;  // 0 = full trace horizon
  std::vector<Sweep> sweeps = {{"accuracy", {0.4, 0.5, 0.6}}, {"latency", {0.03, 0.05, 0.1, 0.2}}};
  std::vector<int> n_mobile = {2, 4, 8, 12};
  nlohmann::json large;  // generator settings for run_large_scale
  std::filesystem::path checkpoint_dir;  // learner_<sweep>_<x>.json after each run when set
};

/// Reads the optional "experiment" block of a config file.
ExperimentOptions parse_experiment(const nlohmann::json& j);

/// Observer for per-slot QIC training rows (sweep, x, rows).
using TrainingSink = std::function<void(const std::string&, double, const std::vector<TrainingRow>&)>;

/// Copy of `cfg` with every application's accuracy or latency target replaced.
ScenarioConfig with_target(const ScenarioConfig& cfg, const std::string& sweep, double value);

std::vector<RunRecord> run_small_scale(const ScenarioConfig& cfg, const ExperimentOptions& opt,
                                       std::uint64_t seed, const TrainingSink& sink = {});

/// Large-scale instance: `n_mobile` mobiles, `large.edge_servers` edge servers,
/// contexts and application types drawn uniformly with the seed.
ScenarioConfig make_large_scenario(const nlohmann::json& large, int n_mobile, std::uint64_t seed);

std::vector<RunRecord> run_large_scale(const ExperimentOptions& opt, std::uint64_t seed,
                                       const TrainingSink& sink = {});

/// Runs every solver of `opt` over the horizon of one scenario.
std::vector<RunRecord> run_instance(const ScenarioConfig& cfg, const std::string& sweep, double x,
                                    const ExperimentOptions& opt, std::uint64_t seed,
                                    const TrainingSink& sink = {});

std::vector<MetricsSummary> summarize(const std::vector<RunRecord>& records);

void write_runs_csv(std::ostream& os, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_runs_csv(std::istream& is);
void write_summary_csv(std::ostream& os, const std::vector<MetricsSummary>& summaries);

/// runs.csv, summary.csv and plot_*.csv in `out_dir`.
void emit(const std::vector<RunRecord>& records, const std::vector<MetricsSummary>& summaries,
          const std::filesystem::path& out_dir, const std::string& prefix);

}  // namespace qic

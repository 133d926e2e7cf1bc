#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qic/catalog.hpp"
#include "qic/radio.hpp"

namespace qic {

enum class NodeKind : std::uint8_t { source, mobile, edge };
enum class ContextName : std::uint8_t { sunny, night, motorway };

std::string_view to_string(NodeKind k);
std::string_view to_string(ContextName c);
ContextName context_from_string(std::string_view s);

struct ContextLabel {
  ContextName name = ContextName::sunny;
  double accuracy_cap = 0.8;

  bool operator==(const ContextLabel&) const = default;
};

/// Default accuracy ceiling: 0.8 when sunny, 0.6 at night or on the motorway.
double default_accuracy_cap(ContextName c);

struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::mobile;
  std::optional<Modality> modality;  // sources only
  double compute_capacity = 0.0;     // operations/second (mobile, edge)
  int radio_blocks = 0;              // uplink RBs when not trace-driven
  double rho = 0.0;                  // per-RB bit rate when not trace-driven
  double energy_per_compute = 0.0;   // J per (op/s) per slot
  double energy_per_block = 0.0;     // J per RB per slot
  std::optional<std::string> trace_id;
  std::optional<ContextLabel> context;         // mobile nodes only
  std::optional<std::string> colocated_with;   // sources: hosting mobile node

  bool operator==(const NodeSpec&) const = default;
};

struct ApplicationSpec {
  std::string id;
  double latency_target = 0.05;   // seconds
  double accuracy_target = 0.5;   // fraction
  double quantile = 0.9;
  std::vector<std::string> candidate_sources;
  std::string home_mobile_node;
  std::map<std::string, double> source_bits;  // per candidate source, bits per inference

  bool operator==(const ApplicationSpec&) const = default;
};

struct TraceSource {
  std::string id;
  radio::TraceKind kind = radio::TraceKind::outdoor;
  double duration_s = 150.0;
  std::uint64_t seed = 0;
  std::optional<std::string> csv_path;  // real measurements instead of the generator

  bool operator==(const TraceSource&) const = default;
};

/// Accuracy of one branch in one context: Beta(a, b) or empirical samples,
/// scaled/clipped by the context's accuracy cap at evaluation time.
struct AccuracyDistribution {
  enum class Kind : std::uint8_t { beta, empirical };
  Kind kind = Kind::beta;
  double a = 1.0;
  double b = 1.0;
  std::vector<double> samples;

  static AccuracyDistribution beta(double a, double b);
  static AccuracyDistribution empirical(std::vector<double> samples);
  static AccuracyDistribution point(double value);

  bool operator==(const AccuracyDistribution&) const = default;
};

using CalibrationKey = std::pair<std::string, ContextName>;
using Calibration = std::map<CalibrationKey, AccuracyDistribution>;

/// Built-in per-(branch, context) accuracy table: deeper and fused branches are
/// stochastically more accurate, and each modality's quality shifts with context.
Calibration builtin_calibration(const DnnCatalog& catalog);

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ScenarioConfig {
  std::vector<NodeSpec> nodes;
  std::vector<ApplicationSpec> applications;
  DnnCatalog catalog = builtin_catalog();
  bool catalog_is_builtin = true;
  std::vector<TraceSource> trace_sources;
  bool calibration_is_builtin = true;
  Calibration calibration_overrides;
  double slot_duration = 1.0;
  std::uint64_t seed = 0;
  radio::Numerology numerology;

  // Materialized by finalize().
  std::map<std::string, radio::Trace> traces;
  Calibration calibration;

  /// Resolves traces and calibration, checks every invariant. Throws ScenarioError.
  void finalize(const std::filesystem::path& base_dir = {});

  std::size_t node_index(std::string_view id) const;
  const NodeSpec& node(std::string_view id) const { return nodes[node_index(id)]; }
  int samples_per_slot() const;
  /// Number of slots covered by every trace (unbounded without traces).
  int horizon() const;
  /// Context of an application's home mobile node.
  const ContextLabel& context_of(const ApplicationSpec& app) const;

  bool operator==(const ScenarioConfig& o) const;
};

/// Per-slot resource state s_t = {B_n, C_n, rho_n}.
struct SystemState {
  int t = 0;
  Eigen::VectorXi blocks;   // B_n
  Eigen::VectorXd compute;  // C_n
  Eigen::VectorXd rho;      // rho_n

  bool operator==(const SystemState& o) const {
    return t == o.t && blocks == o.blocks && compute == o.compute && rho == o.rho;
  }
};

ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
void save_scenario(const ScenarioConfig& cfg, const std::filesystem::path& path);

SystemState snapshot_at(const ScenarioConfig& cfg, int t);

/// Raw link samples of every node during slot t (edge servers get zero samples).
std::vector<radio::LinkDistribution> slot_links(const ScenarioConfig& cfg, int t);

}  // namespace qic

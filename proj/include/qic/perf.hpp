#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qic/catalog.hpp"
#include "qic/radio.hpp"
#include "qic/scenario.hpp"

namespace qic {

/// Where one application's sections run.
struct AppPlan {
  ConfigurationOption option;
  std::vector<std::size_t> sources;  // node index per selected modality
  std::size_t stem_host = 0;
  std::size_t branch_host = 0;

  bool operator==(const AppPlan&) const = default;
};

/// One joint decision: sigma via the per-app plans, plus c (ops/s) and b (RBs)
/// per (app, node) as H x N matrices.
struct Configuration {
  std::vector<std::optional<AppPlan>> plans;
  Eigen::MatrixXd compute;
  Eigen::MatrixXi radio;

  static Configuration empty(std::size_t apps, std::size_t nodes);

  /// sigma(h, n): "data", stem ids and branch ids hosted by node n for app h.
  std::vector<std::string> sigma(std::size_t h, std::size_t n) const;

  bool operator==(const Configuration& o) const {
    return plans == o.plans && compute == o.compute && radio == o.radio;
  }
};

/// One hop of an application's data path between two real nodes.
struct Hop {
  std::size_t from = 0;
  std::size_t to = 0;
  double bits = 0.0;
  bool transmits = false;  // false for co-located hops
};

/// Source -> stem host and stem host -> branch host hops of one plan.
std::vector<Hop> plan_hops(const ScenarioConfig& cfg, std::size_t h, const AppPlan& plan);

/// Hosting-rule and allocation checks; empty when the configuration is valid.
std::vector<std::string> validate(const Configuration& conf, const ScenarioConfig& cfg);

/// Total energy per slot: sum over nodes and apps of eps_c * c + eps_b * b.
double energy(const Configuration& conf, const ScenarioConfig& cfg);
double app_energy(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h);
/// Energy of app h's allocations on node n.
double node_app_energy(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       std::size_t n);

/// Sum over hosting nodes of (operations hosted there) / c.
double compute_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h);

/// Sum over transmitting nodes of bits / (b * rho), with rho taken from `rho` (indexed by node).
double network_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const Eigen::VectorXd& rho);
double network_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const SystemState& state);

/// Per-sample total latency of app h over the slot's link samples.
std::vector<double> latency_samples(const Configuration& conf, const ScenarioConfig& cfg,
                                    std::size_t h,
                                    const std::vector<radio::LinkDistribution>& links);

double latency_quantile(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                        const std::vector<radio::LinkDistribution>& links, double omega);

/// CDF of a calibrated accuracy after applying the context cap: Beta samples are
/// scaled by the cap, empirical samples clipped at it.
double accuracy_cdf(const AccuracyDistribution& d, double cap, double x);
double accuracy_distribution_quantile(const AccuracyDistribution& d, double cap, double omega);

inline constexpr double kLateFusionBonus = 0.02;

/// omega-quantile of the option's accuracy in a context. Late fusion uses
/// max(A, B) + bonus, clipped to the cap. Throws std::out_of_range on a missing entry.
double accuracy_quantile(const ConfigurationOption& option, const ContextLabel& context,
                         double omega, const Calibration& calibration, const DnnCatalog& catalog);

struct AppMetrics {
  double energy = 0.0;
  double compute_latency = 0.0;
  double latency_quantile = 0.0;
  double accuracy_quantile = 0.0;
  bool latency_ok = false;
  bool accuracy_ok = false;

  bool ok() const { return latency_ok && accuracy_ok; }
};

AppMetrics app_metrics(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const std::vector<radio::LinkDistribution>& links);

/// (f1, ..., f5) on one edge.
using AttributeVector = Eigen::Matrix<double, 5, 1>;

/// Directed edge between vertices; vertex N is S_v and N+1 is D_v.
struct EdgeKey {
  std::size_t u = 0;
  std::size_t v = 0;

  bool operator==(const EdgeKey&) const = default;
};

/// Vertex sequence S_v -> sources -> stem host -> branch host -> D_v of a plan,
/// as edges. Each source contributes its own S_v edge and source edge.
std::vector<EdgeKey> plan_path(const ScenarioConfig& cfg, std::size_t h, const AppPlan& plan);

/// Normalized attributes per edge (see README for the attribution rules).
std::vector<AttributeVector> attributes(const Configuration& conf, const ScenarioConfig& cfg,
                                        const SystemState& state,
                                        const std::vector<radio::LinkDistribution>& links,
                                        const std::vector<EdgeKey>& edges);

/// f_j(e) <= 1 for every edge and j = 2..5.
bool feasible(const std::vector<AttributeVector>& attrs);

}  // namespace qic

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qic/action_space.hpp"
#include "qic/perf.hpp"
#include "qic/scenario.hpp"

namespace qic {

enum class VertexRole : std::uint8_t { source, mobile, edge_server, source_v, sink_v };

struct Vertex {
  std::string id;
  VertexRole role = VertexRole::source;
};

struct AttributedEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  Eigen::VectorXd compute;  // c^h_u per app
  Eigen::VectorXi blocks;   // b^h_u per app
  double rho = 0.0;         // rho_u
  AttributeVector attrs = AttributeVector::Zero();
};

struct GraphSnapshot {
  int t = 0;
  int epoch = 0;
  std::vector<Vertex> vertices;
  std::vector<AttributedEdge> edges;
  Configuration config;

  std::vector<AttributeVector> attribute_list() const;
};

/// Forward hops S_v -> sources -> mobiles -> edge servers -> D_v, plus mobile -> D_v.
/// A co-located source only links to its host mobile.
std::vector<EdgeKey> admissible_edges(const ScenarioConfig& cfg);

/// G_t^(0): all admissible edges with zero allocations.
GraphSnapshot build_initial(const ScenarioConfig& cfg, const SystemState& state, int t);

/// G_t^(tau+1): allocations and attributes of `action`; the input is not modified.
GraphSnapshot apply_action(const GraphSnapshot& g, const Configuration& action,
                           const ScenarioConfig& cfg, const SystemState& state,
                           const std::vector<radio::LinkDistribution>& links);

/// Edge indices of app h's path from S_v to D_v. Throws std::runtime_error when the
/// assignment does not form a connected chain.
std::vector<std::size_t> application_path(const GraphSnapshot& g, const ScenarioConfig& cfg,
                                          std::size_t h);

/// Graphviz rendering of a snapshot.
std::string to_dot(const GraphSnapshot& g);

/// Eq. 5 style reward: sum over edges of psi(e) / (1 + f1(e)).
double reward_of(const std::vector<AttributeVector>& attrs);
/// sum over edges and j = 2..5 of mu_j f_j(e).
double cost_of(const std::vector<AttributeVector>& attrs, const std::array<double, 4>& mu);
/// Number of (edge, j) pairs with f_j(e) > 1.
int violations_of(const std::vector<AttributeVector>& attrs);

/// Per-app, per-action quantities of one slot, precomputed once so solvers
/// can score joint actions without rebuilding configurations.
struct ActionEffect {
  struct NodeUse {
    std::size_t node = 0;
    double compute = 0.0;
    int blocks = 0;
    int compute_quarters = 0;
    double energy = 0.0;
  };
  struct Touch {
    std::size_t edge = 0;
    double f1 = 0.0;
    bool on_path = false;
    double compute = 0.0;  // this action's usage at the edge's tail node
    int blocks = 0;
  };
  double energy = 0.0;
  double latency_quantile = 0.0;
  double accuracy_quantile = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  bool app_ok = false;
  std::vector<NodeUse> uses;
  std::vector<std::pair<std::size_t, double>> path;  // edge index, f1 contribution
  std::vector<Touch> touched;
};

struct JointScore {
  double reward = 0.0;
  double cost = 0.0;
  double energy = 0.0;
  int violations = 0;
  bool feasible = false;
};

class SlotModel {
 public:
  SlotModel(const ScenarioConfig& cfg, int t);

  const ScenarioConfig& config() const { return *cfg_; }
  int t() const { return t_; }
  const SystemState& state() const { return state_; }
  const std::vector<radio::LinkDistribution>& links() const { return links_; }
  const std::vector<EdgeKey>& edges() const { return edges_; }
  const std::vector<std::vector<std::size_t>>& out_edges() const { return out_edges_; }
  const std::vector<AppActionSpace>& spaces() const { return spaces_; }
  const std::vector<ActionEffect>& effects(std::size_t h) const { return effects_[h]; }
  std::size_t app_count() const { return spaces_.size(); }

  Configuration configuration(const std::vector<int>& joint) const;
  std::vector<AttributeVector> joint_attributes(const std::vector<int>& joint) const;
  JointScore score(const std::vector<int>& joint, const std::array<double, 4>& mu) const;

 private:
  const ScenarioConfig* cfg_;
  int t_;
  SystemState state_;
  std::vector<radio::LinkDistribution> links_;
  std::vector<EdgeKey> edges_;
  std::vector<std::vector<std::size_t>> out_edges_;
  std::vector<AppActionSpace> spaces_;
  std::vector<std::vector<ActionEffect>> effects_;
};

/// Scores every action of one app against fixed actions of the others, touching
/// only the edges that action changes.
class CoordinateEvaluator {
 public:
  explicit CoordinateEvaluator(const SlotModel& model);

  /// Freezes `joint` except app h (whose entry is ignored).
  void exclude(const std::vector<int>& joint, std::size_t h);
  double reward_with(int action) const;

  /// Residual compute / blocks on each node once app h is removed.
  double compute_used(std::size_t node) const { return c_ex_[node]; }
  int blocks_used(std::size_t node) const { return b_ex_[node]; }

 private:
  double edge_reward(double f1, double f2, double f3, double f4, double f5) const;

  const SlotModel* model_;
  std::size_t app_ = 0;
  std::vector<double> f1_ex_, f2_ex_, f3_ex_, r_ex_;
  std::vector<double> c_ex_;
  std::vector<int> b_ex_;
  double total_ex_ = 0.0;
};

}  // namespace qic

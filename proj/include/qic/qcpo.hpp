#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qic/dyngraph.hpp"
#include "qic/mlp.hpp"
#include "qic/quantile.hpp"

namespace qic {

struct QcpoParams {
  int epochs = 50;                  // P_max
  double gamma = 0.99;
  std::array<double, 4> mu = {0.25, 0.25, 0.25, 0.25};
  double d_threshold_per_app = 4.0;  // d_th = this * |H|
  double clip = 0.2;                 // theta
  double learning_rate = 1e-3;       // eta
  double update_rate = 1e-3;         // varrho, soft target update
  int hidden = 300;
  std::vector<double> quantile_grid = {0.5, 0.8, 0.9, 0.95};
  double omega = 0.9;                // level of the cumulative-cost quantile
  double tail_quantile = 0.8;
  double explore_start = 0.3;
  double explore_end = 0.01;
  int ppo_iterations = 4;
  std::size_t history_limit = 4096;

  /// Throws std::invalid_argument listing every violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const QcpoParams& p);
void from_json(const nlohmann::json& j, QcpoParams& p);

/// Eq. 5 reward of a snapshot.
double reward(const GraphSnapshot& g);
/// Weighted constraint cost of a snapshot.
double cost(const GraphSnapshot& g, const std::array<double, 4>& mu);

/// Exploration probability at epoch tau (1-based); zero on the last epoch.
double exploration_rate(int tau, int epochs, double start, double end);

/// argmax reward, ties to lower energy, then to the lower index.
std::size_t select_greedy(std::span<const double> rewards, std::span<const double> energies);

/// Softmax over candidate logits F * w.
Eigen::VectorXd softmax_policy(const Eigen::MatrixXd& features, const Eigen::VectorXd& w);

struct Experience {
  Eigen::VectorXd state;
  std::size_t app = 0;
  const Eigen::MatrixXd* features = nullptr;  // candidate actions x feature dim
  int action = 0;
  double old_prob = 1.0;
  double reward = 0.0;
  double cost = 0.0;
  bool terminal = false;
  double cumulative_cost = 0.0;  // X sample from this step on
};

/// Discounted sums from each step to the end of the sequence.
std::vector<double> discounted_sums(std::span<const double> values, double gamma);

struct Advantages {
  std::vector<double> value;
  std::vector<double> quantile;
  std::vector<double> total;
};

/// value: discounted return minus V(s); quantile: -max(0, q_hat - d_th) scaled
/// by each step's share of the batch cost.
Advantages compute_advantages(std::span<const Experience> batch, std::span<const double> values,
                              double q_hat, double d_threshold, double gamma);

struct ObjectiveValue {
  double objective = 0.0;
  Eigen::VectorXd gradient;  // dJ/dphi
};

/// J = (1/P_max) sum_k clip(p_k, 1 - theta, 1 + theta) A_k with p = pi/pi_old.
ObjectiveValue clipped_objective(const Mlp<double>& policy, std::span<const Experience> batch,
                                 std::span<const double> advantages, double clip, int epochs);

struct ValueTargets {
  std::vector<double> td_target;
  std::vector<double> cumulative_cost;
};

/// 0.5 (V - y)^2 plus pinball losses of the quantile heads, averaged over P_max.
ObjectiveValue value_loss(const Mlp<double>& value, std::span<const Experience> batch,
                          const ValueTargets& targets, std::span<const double> grid, int epochs);

struct UpdateReport {
  bool applied = false;
  std::string diagnostics;
};

/// Gradient ascent on the clipped objective with Adam; skipped on a zero or non-finite gradient.
UpdateReport ppo_update(Mlp<double>& policy, Adam<double>& optimizer,
                        std::span<const Experience> batch, std::span<const double> advantages,
                        const QcpoParams& params);

struct TrainingRow {
  int t = 0;
  int epoch = 0;
  double reward = 0.0;
  double cost = 0.0;
  double q_hat = 0.0;
  double energy = 0.0;
  bool feasible = false;
};

void write_training_log(std::ostream& os, const std::vector<TrainingRow>& rows);

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kActionFeatureDim = 15;

class QcpoLearner {
 public:
  QcpoLearner(const ScenarioConfig& cfg, QcpoParams params, std::uint64_t seed);

  /// Algorithm 1 for one slot: P_max epochs over all apps, then the Eq. 6 update.
  /// Returns the joint action of the last epoch.
  std::vector<int> orchestrate(const SlotModel& model, std::vector<TrainingRow>* log = nullptr);

  const QcpoParams& params() const { return params_; }
  const Mlp<double>& policy() const { return policy_; }
  const Mlp<double>& value() const { return value_; }
  Mlp<double>& policy() { return policy_; }
  Mlp<double>& value() { return value_; }
  const std::deque<double>& cost_history() const { return history_; }
  int state_dim() const { return state_dim_; }

  Eigen::VectorXd state_features(const SlotModel& model, const CoordinateEvaluator& ev,
                                 std::size_t h) const;
  static Eigen::MatrixXd action_features(const SlotModel& model, std::size_t h);

  /// Current estimate of the omega-quantile of the cumulative cost.
  double quantile_estimate() const;

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  QcpoParams params_;
  std::size_t nodes_ = 0;
  std::size_t apps_ = 0;
  int state_dim_ = 0;
  Mlp<double> policy_;
  Mlp<double> value_;
  Mlp<double> target_;
  Adam<double> policy_opt_;
  Adam<double> value_opt_;
  std::mt19937_64 rng_;
  std::deque<double> history_;
};

}  // namespace qic

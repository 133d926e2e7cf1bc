#include "qic/qcpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qic/radio.hpp"

namespace qic {

void QcpoParams::validate() const {
  std::vector<std::string> errs;
  if (epochs < 1) errs.push_back("epochs must be >= 1");
  if (!(gamma > 0 && gamma < 1)) errs.push_back("gamma must be in (0, 1)");
  if (!(clip > 0 && clip < 1)) errs.push_back("clip must be in (0, 1)");
  double sum = 0.0;
  for (double m : mu) {
    if (m < 0) errs.push_back("cost weights must be >= 0");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-9) errs.push_back("cost weights must sum to 1");
  if (!(learning_rate > 0)) errs.push_back("learning_rate must be > 0");
  if (!(update_rate >= 0 && update_rate <= 1)) errs.push_back("update_rate must be in [0, 1]");
  if (hidden < 1) errs.push_back("hidden must be >= 1");
  if (quantile_grid.empty()) errs.push_back("quantile_grid is empty");
  for (double w : quantile_grid)
    if (!(w > 0 && w < 1)) errs.push_back("quantile_grid entries must be in (0, 1)");
  if (!(omega > 0 && omega < 1)) errs.push_back("omega must be in (0, 1)");
  if (!(tail_quantile > 0 && tail_quantile < 1)) errs.push_back("tail_quantile must be in (0, 1)");
  if (!(explore_start >= 0 && explore_start <= 1 && explore_end >= 0 && explore_end <= 1))
    errs.push_back("exploration rates must be in [0, 1]");
  if (ppo_iterations < 1) errs.push_back("ppo_iterations must be >= 1");
  if (!errs.empty()) {
    std::string msg = "invalid QCPO parameters:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

void to_json(nlohmann::json& j, const QcpoParams& p) {
  j = {{"epochs", p.epochs},
       {"gamma", p.gamma},
       {"mu", p.mu},
       {"d_threshold_per_app", p.d_threshold_per_app},
       {"clip", p.clip},
       {"learning_rate", p.learning_rate},
       {"update_rate", p.update_rate},
       {"hidden", p.hidden},
       {"quantile_grid", p.quantile_grid},
       {"omega", p.omega},
       {"tail_quantile", p.tail_quantile},
       {"explore_start", p.explore_start},
       {"explore_end", p.explore_end},
       {"ppo_iterations", p.ppo_iterations},
       {"history_limit", p.history_limit}};
}

void from_json(const nlohmann::json& j, QcpoParams& p) {
  QcpoParams d;
  p.epochs = j.value("epochs", d.epochs);
  p.gamma = j.value("gamma", d.gamma);
  p.mu = j.value("mu", d.mu);
  p.d_threshold_per_app = j.value("d_threshold_per_app", d.d_threshold_per_app);
  p.clip = j.value("clip", d.clip);
  p.learning_rate = j.value("learning_rate", d.learning_rate);
  p.update_rate = j.value("update_rate", d.update_rate);
  p.hidden = j.value("hidden", d.hidden);
  p.quantile_grid = j.value("quantile_grid", d.quantile_grid);
  p.omega = j.value("omega", d.omega);
  p.tail_quantile = j.value("tail_quantile", d.tail_quantile);
  p.explore_start = j.value("explore_start", d.explore_start);
  p.explore_end = j.value("explore_end", d.explore_end);
  p.ppo_iterations = j.value("ppo_iterations", d.ppo_iterations);
  p.history_limit = j.value("history_limit", d.history_limit);
}

double reward(const GraphSnapshot& g) { return reward_of(g.attribute_list()); }

double cost(const GraphSnapshot& g, const std::array<double, 4>& mu) {
  return cost_of(g.attribute_list(), mu);
}

double exploration_rate(int tau, int epochs, double start, double end) {
  if (epochs <= 1 || tau >= epochs) return 0.0;
  if (epochs == 2 || start <= 0.0 || end <= 0.0) return start;
  const double frac = double(tau - 1) / double(epochs - 2);
  return start * std::pow(end / start, frac);
}

std::size_t select_greedy(std::span<const double> rewards, std::span<const double> energies) {
  if (rewards.empty()) throw std::invalid_argument("empty action space");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best] ||
        (rewards[i] == rewards[best] && energies[i] < energies[best]))
      best = i;
  }
  return best;
}

Eigen::VectorXd softmax_policy(const Eigen::MatrixXd& features, const Eigen::VectorXd& w) {
  Eigen::VectorXd logits = features * w;
  const double mx = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

std::vector<double> discounted_sums(std::span<const double> values, double gamma) {
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = values.size(); i-- > 0;) {
    acc = values[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

Advantages compute_advantages(std::span<const Experience> batch, std::span<const double> values,
                              double q_hat, double d_threshold, double gamma) {
  if (batch.empty()) throw std::invalid_argument("empty experience batch");
  if (values.size() != batch.size()) throw std::invalid_argument("one value estimate per step");
  std::vector<double> rewards, costs;
  for (const auto& e : batch) {
    rewards.push_back(e.reward);
    costs.push_back(e.cost);
  }
  const auto returns = discounted_sums(rewards, gamma);
  const double total_cost = std::accumulate(costs.begin(), costs.end(), 0.0);
  const double excess = std::max(0.0, q_hat - d_threshold);
  Advantages a;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    a.value.push_back(returns[k] - values[k]);
    const double share = total_cost > 0 ? costs[k] / total_cost : 1.0 / double(batch.size());
    a.quantile.push_back(excess > 0 ? -excess * share : 0.0);
    a.total.push_back(a.value.back() + a.quantile.back());
  }
  return a;
}

ObjectiveValue clipped_objective(const Mlp<double>& policy, std::span<const Experience> batch,
                                 std::span<const double> advantages, double clip, int epochs) {
  if (batch.empty()) throw std::invalid_argument("empty experience batch");
  const Eigen::Index B = Eigen::Index(batch.size());
  Eigen::MatrixXd states(policy.input_size(), B);
  for (Eigen::Index k = 0; k < B; ++k) states.col(k) = batch[std::size_t(k)].state;
  Mlp<double>::Cache cache;
  const Eigen::MatrixXd w = policy.forward(states, cache);
  Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(w.rows(), B);
  ObjectiveValue out;
  const double scale = 1.0 / double(epochs);
  for (Eigen::Index k = 0; k < B; ++k) {
    const auto& e = batch[std::size_t(k)];
    const Eigen::MatrixXd& F = *e.features;
    const Eigen::VectorXd pi = softmax_policy(F, w.col(k));
    const double p = pi(e.action) / e.old_prob;
    const double adv = advantages[std::size_t(k)];
    const double clipped = std::clamp(p, 1.0 - clip, 1.0 + clip);
    out.objective += scale * clipped * adv;
    if (p > 1.0 - clip && p < 1.0 + clip && adv != 0.0) {
      // d p / d w = p (phi(a) - E_pi[phi]).
      const Eigen::VectorXd mean_phi = F.transpose() * pi;
      dw.col(k) = scale * adv * p * (F.row(e.action).transpose() - mean_phi);
    }
  }
  out.gradient = policy.backward(cache, dw);
  return out;
}

ObjectiveValue value_loss(const Mlp<double>& value, std::span<const Experience> batch,
                          const ValueTargets& targets, std::span<const double> grid, int epochs) {
  const Eigen::Index B = Eigen::Index(batch.size());
  Eigen::MatrixXd states(value.input_size(), B);
  for (Eigen::Index k = 0; k < B; ++k) states.col(k) = batch[std::size_t(k)].state;
  Mlp<double>::Cache cache;
  const Eigen::MatrixXd y = value.forward(states, cache);
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(y.rows(), B);
  ObjectiveValue out;
  const double scale = 1.0 / double(epochs);
  for (Eigen::Index k = 0; k < B; ++k) {
    const double err = y(0, k) - targets.td_target[std::size_t(k)];
    out.objective += scale * 0.5 * err * err;
    dy(0, k) = scale * err;
    const double x = targets.cumulative_cost[std::size_t(k)];
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double u = x - y(Eigen::Index(i + 1), k);
      const double tau = grid[i];
      out.objective += scale * u * (tau - (u < 0 ? 1.0 : 0.0));
      dy(Eigen::Index(i + 1), k) = -scale * (tau - (u < 0 ? 1.0 : 0.0));
    }
  }
  out.gradient = value.backward(cache, dy);
  return out;
}

UpdateReport ppo_update(Mlp<double>& policy, Adam<double>& optimizer,
                        std::span<const Experience> batch, std::span<const double> advantages,
                        const QcpoParams& params) {
  UpdateReport rep;
  for (int it = 0; it < params.ppo_iterations; ++it) {
    const auto obj = clipped_objective(policy, batch, advantages, params.clip, params.epochs);
    if (!obj.gradient.allFinite()) {
      rep.diagnostics = "non-finite policy gradient (objective " + std::to_string(obj.objective) + ")";
      return rep;
    }
    if (obj.gradient.isZero(0.0)) {
      if (rep.diagnostics.empty()) rep.diagnostics = "zero gradient";
      break;
    }
    optimizer.step(policy.parameters(), -obj.gradient);
    rep.applied = true;
  }
  return rep;
}

void write_training_log(std::ostream& os, const std::vector<TrainingRow>& rows) {
  os << "t,epoch,reward,cost,q_hat,energy,feasible\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", r.t, r.epoch, r.reward,
                  r.cost, r.q_hat, r.energy, r.feasible ? 1 : 0);
    os << buf;
  }
}

// --- Learner -----------------------------------------------------------

QcpoLearner::QcpoLearner(const ScenarioConfig& cfg, QcpoParams params, std::uint64_t seed)
    : params_(std::move(params)),
      nodes_(cfg.nodes.size()),
      apps_(cfg.applications.size()),
      rng_(seed) {
  params_.validate();
  state_dim_ = int(3 * nodes_ + 4 * apps_);
  const int hid = params_.hidden;
  policy_ = Mlp<double>({state_dim_, hid, hid, kActionFeatureDim});
  value_ = Mlp<double>({state_dim_, hid, hid, 1 + int(params_.quantile_grid.size())});
  policy_.init_xavier(rng_);
  value_.init_xavier(rng_);
  target_ = value_;
  policy_opt_.learning_rate = params_.learning_rate;
  value_opt_.learning_rate = params_.learning_rate;
}

Eigen::VectorXd QcpoLearner::state_features(const SlotModel& model, const CoordinateEvaluator& ev,
                                            std::size_t h) const {
  const auto& cfg = model.config();
  const auto& s = model.state();
  const double rho_max = radio::per_rb_rate(radio::kMaxMcsIndex, cfg.numerology.scs_hz,
                                            cfg.numerology.overhead);
  const double block_scale = std::max(1, cfg.numerology.max_blocks);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(state_dim_);
  Eigen::Index i = 0;
  for (std::size_t n = 0; n < nodes_; ++n) {
    const auto idx = Eigen::Index(n);
    x(i++) = double(s.blocks(idx) - ev.blocks_used(n)) / block_scale;
    x(i++) = s.compute(idx) > 0 ? (s.compute(idx) - ev.compute_used(n)) / s.compute(idx) : 0.0;
    x(i++) = s.rho(idx) / rho_max;
  }
  for (const auto& app : cfg.applications) {
    x(i++) = app.accuracy_target;
    x(i++) = app.latency_target / 0.1;
    x(i++) = app.quantile;
  }
  x(i + Eigen::Index(h)) = 1.0;
  return x;
}

Eigen::MatrixXd QcpoLearner::action_features(const SlotModel& model, std::size_t h) {
  const auto& cfg = model.config();
  const auto& sp = model.spaces()[h];
  const auto& effs = model.effects(h);
  Eigen::MatrixXd F(Eigen::Index(sp.actions.size()), kActionFeatureDim);
  for (std::size_t a = 0; a < sp.actions.size(); ++a) {
    const auto& act = sp.actions[a];
    const auto& opt = sp.options[std::size_t(act.option)];
    const CostProfile prof = option_cost_profile(cfg.catalog, opt);
    const auto& branch = cfg.catalog.branch(opt.branch);
    const Placement& pl = sp.placements[std::size_t(act.placement)];
    const auto r = Eigen::Index(a);
    F(r, 0) = prof.stem_flops / 1e11;
    F(r, 1) = prof.branch_flops / 1e12;
    F(r, 2) = prof.stem_to_branch_bits / 1e7;
    F(r, 3) = double(opt.stems.size()) / 4.0;
    F(r, 4) = branch.depth == 18 ? 1.0 : 0.0;
    F(r, 5) = branch.depth == 50 ? 1.0 : 0.0;
    F(r, 6) = branch.depth == 101 ? 1.0 : 0.0;
    F(r, 7) = opt.late_fusion ? 1.0 : 0.0;
    F(r, 8) = branch.fusion == Fusion::early ? 1.0 : 0.0;
    F(r, 9) = cfg.nodes[pl.stem_host].kind == NodeKind::edge ? 1.0 : 0.0;
    F(r, 10) = cfg.nodes[pl.branch_host].kind == NodeKind::edge ? 1.0 : 0.0;
    F(r, 11) = act.c_level / double(kResourceLevels);
    F(r, 12) = act.b_level / double(kResourceLevels);
    F(r, 13) = effs[a].app_ok ? 1.0 : 0.0;
    F(r, 14) = 1.0;
  }
  return F;
}

double QcpoLearner::quantile_estimate() const {
  if (history_.empty()) return 0.0;
  std::vector<double> h(history_.begin(), history_.end());
  if (h.size() >= kMinQuantileSamples)
    return cumulative_cost_quantile(h, params_.omega, params_.tail_quantile);
  return empirical_quantile(h, params_.omega);
}

std::vector<int> QcpoLearner::orchestrate(const SlotModel& model, std::vector<TrainingRow>* log) {
  const std::size_t H = model.app_count();
  if (H != apps_ || model.config().nodes.size() != nodes_)
    throw std::invalid_argument("learner was built for a different scenario shape");
  std::vector<int> joint(H, -1);
  if (H == 0) return joint;

  std::vector<Eigen::MatrixXd> features(H);
  for (std::size_t h = 0; h < H; ++h) {
    if (model.spaces()[h].actions.empty())
      throw std::runtime_error("empty action space for application " +
                               model.config().applications[h].id);
    features[h] = action_features(model, h);
  }

  CoordinateEvaluator ev(model);
  std::vector<Experience> batch;
  batch.reserve(std::size_t(params_.epochs) * H);
  std::vector<double> rewards, energies;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double q_before = quantile_estimate();
  const SystemState& state = model.state();
  std::vector<double> masked, weights;

  std::vector<std::size_t> order(H);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int tau = 1; tau <= params_.epochs; ++tau) {
    const double eps = exploration_rate(tau, params_.epochs, params_.explore_start,
                                        params_.explore_end);
    JointScore score;
    for (std::size_t h : order) {
      ev.exclude(joint, h);
      const auto& effs = model.effects(h);
      rewards.resize(effs.size());
      energies.resize(effs.size());
      for (std::size_t a = 0; a < effs.size(); ++a) {
        rewards[a] = ev.reward_with(int(a));
        energies[a] = effs[a].energy;
      }
      Experience e;
      e.state = state_features(model, ev, h);
      e.app = h;
      e.features = &features[h];
      const Eigen::VectorXd pi = softmax_policy(features[h], policy_.forward_one(e.state));
      // Candidates are restricted to what fits in the capacity the other apps leave.
      masked = rewards;
      weights.assign(pi.data(), pi.data() + pi.size());
      bool any_fit = false;
      for (std::size_t a = 0; a < effs.size(); ++a) {
        bool fit = true;
        for (const auto& u : effs[a].uses) {
          const auto n = Eigen::Index(u.node);
          if (!(ev.compute_used(u.node) + u.compute <= state.compute(n)) ||
              ev.blocks_used(u.node) + u.blocks > state.blocks(n))
            fit = false;
        }
        if (fit) {
          any_fit = true;
        } else {
          masked[a] = -std::numeric_limits<double>::infinity();
          weights[a] = 0.0;
        }
      }
      if (!any_fit) {
        masked = rewards;
        weights.assign(pi.data(), pi.data() + pi.size());
      }
      int a = int(select_greedy(masked, energies));
      if (eps > 0.0 && unif(rng_) < eps) {
        std::discrete_distribution<int> pick(weights.begin(), weights.end());
        a = pick(rng_);
      }
      joint[h] = a;
      e.action = a;
      e.old_prob = std::max(pi(a), 1e-300);
      score = model.score(joint, params_.mu);
      e.reward = score.reward;
      e.cost = score.cost;
      batch.push_back(std::move(e));
    }
    if (log)
      log->push_back({model.t(), tau, score.reward, score.cost, q_before, score.energy, score.feasible});
    if (!score.feasible && tau < params_.epochs) {
      // Single-app moves cannot free capacity held by another app: restart from an
      // empty joint with the apps that miss their own targets choosing first.
      std::stable_partition(order.begin(), order.end(), [&](std::size_t h) {
        return !model.effects(h)[std::size_t(joint[h])].app_ok;
      });
      if (!model.effects(order.front())[std::size_t(joint[order.front()])].app_ok)
        std::fill(joint.begin(), joint.end(), -1);
    }
  }
  batch.back().terminal = true;

  // Cumulative-cost samples and their quantile.
  std::vector<double> costs, rews;
  for (const auto& e : batch) costs.push_back(e.cost);
  const auto xs = discounted_sums(costs, params_.gamma);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    batch[k].cumulative_cost = xs[k];
    history_.push_back(xs[k]);
  }
  while (history_.size() > params_.history_limit) history_.pop_front();
  double q_hat = quantile_estimate();
  if (history_.size() < kMinQuantileSamples) {
    // Too few samples for the tail fit: fall back on the quantile head.
    const auto it = std::find(params_.quantile_grid.begin(), params_.quantile_grid.end(), params_.omega);
    if (it != params_.quantile_grid.end())
      q_hat = std::max(q_hat, value_.forward_one(batch.front().state)(
                                  1 + Eigen::Index(it - params_.quantile_grid.begin())));
  }

  // Value estimates and TD targets from the target copy.
  const Eigen::Index B = Eigen::Index(batch.size());
  Eigen::MatrixXd states(state_dim_, B);
  for (Eigen::Index k = 0; k < B; ++k) states.col(k) = batch[std::size_t(k)].state;
  const Eigen::MatrixXd v_now = value_.forward(states);
  const Eigen::MatrixXd v_target = target_.forward(states);
  std::vector<double> values(batch.size());
  ValueTargets targets;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    values[k] = v_now(0, Eigen::Index(k));
    const double next = batch[k].terminal ? 0.0 : v_target(0, Eigen::Index(k + 1));
    targets.td_target.push_back(batch[k].reward + params_.gamma * next);
    targets.cumulative_cost.push_back(batch[k].cumulative_cost);
  }

  const double d_th = params_.d_threshold_per_app * double(H);
  const auto adv = compute_advantages(batch, values, q_hat, d_th, params_.gamma);
  ppo_update(policy_, policy_opt_, batch, adv.total, params_);

  for (int it = 0; it < params_.ppo_iterations; ++it) {
    const auto loss = value_loss(value_, batch, targets, params_.quantile_grid, params_.epochs);
    if (!loss.gradient.allFinite() || loss.gradient.isZero(0.0)) break;
    value_opt_.step(value_.parameters(), loss.gradient);
  }
  target_.parameters() =
      (1.0 - params_.update_rate) * target_.parameters() + params_.update_rate * value_.parameters();
  return joint;
}

// --- Checkpoints -------------------------------------------------------

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

nlohmann::json adam_json(const Adam<double>& a) {
  return {{"m", vec_json(a.m)}, {"v", vec_json(a.v)}, {"steps", a.steps}};
}

void json_adam(const nlohmann::json& j, Adam<double>& a) {
  a.m = json_vec(j.at("m"));
  a.v = json_vec(j.at("v"));
  a.steps = j.at("steps").get<long>();
}

}  // namespace

nlohmann::json QcpoLearner::checkpoint() const {
  std::ostringstream rng;
  rng << rng_;
  return {{"format", "qic-learner"},
          {"version", kCheckpointVersion},
          {"nodes", nodes_},
          {"apps", apps_},
          {"params", params_},
          {"policy_sizes", policy_.sizes()},
          {"value_sizes", value_.sizes()},
          {"policy", vec_json(policy_.parameters())},
          {"value", vec_json(value_.parameters())},
          {"target", vec_json(target_.parameters())},
          {"policy_adam", adam_json(policy_opt_)},
          {"value_adam", adam_json(value_opt_)},
          {"history", std::vector<double>(history_.begin(), history_.end())},
          {"rng", rng.str()}};
}

void QcpoLearner::restore(const nlohmann::json& j) {
  if (j.value("format", "") != "qic-learner")
    throw std::runtime_error("not a learner checkpoint");
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  if (j.at("nodes").get<std::size_t>() != nodes_ || j.at("apps").get<std::size_t>() != apps_)
    throw std::runtime_error("checkpoint was written for a different scenario shape");
  QcpoParams p = j.at("params").get<QcpoParams>();
  p.validate();
  Mlp<double> policy(j.at("policy_sizes").get<std::vector<int>>());
  Mlp<double> value(j.at("value_sizes").get<std::vector<int>>());
  Mlp<double> target = value;
  policy.parameters() = json_vec(j.at("policy"));
  value.parameters() = json_vec(j.at("value"));
  target.parameters() = json_vec(j.at("target"));
  if (policy.parameters().size() != Mlp<double>(policy.sizes()).parameters().size() ||
      value.parameters().size() != target.parameters().size() ||
      policy.input_size() != state_dim_ || value.input_size() != state_dim_)
    throw std::runtime_error("checkpoint parameter shapes do not match");
  params_ = std::move(p);
  policy_ = std::move(policy);
  value_ = std::move(value);
  target_ = std::move(target);
  json_adam(j.at("policy_adam"), policy_opt_);
  json_adam(j.at("value_adam"), value_opt_);
  policy_opt_.learning_rate = value_opt_.learning_rate = params_.learning_rate;
  const auto hist = j.at("history").get<std::vector<double>>();
  history_.assign(hist.begin(), hist.end());
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> rng_;
}

void QcpoLearner::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint().dump() << '\n';
}

void QcpoLearner::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  restore(j);
}

}  // namespace qic

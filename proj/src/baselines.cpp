#include "qic/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace qic {

double penalized_value(const JointScore& s) { return s.reward - double(s.violations); }

namespace {

struct TreeNode {
  int depth = 0;
  int action = -1;
  long visits = 0;
  double total = 0.0;
  std::size_t expanded = 0;
  // Children are expanded in the order (mult * k + offset) mod n.
  std::size_t mult = 1;
  std::size_t offset = 0;
  std::vector<std::size_t> children;
};

std::size_t coprime_multiplier(std::size_t n, std::mt19937_64& rng) {
  if (n <= 1) return 1;
  std::uniform_int_distribution<std::size_t> d(1, n - 1);
  for (;;) {
    const std::size_t m = d(rng);
    if (std::gcd(m, n) == 1) return m;
  }
}

}  // namespace

SolverResult mctp_solve(const SlotModel& model, const SearchBudget& budget, std::uint64_t seed,
                        const std::array<double, 4>& mu) {
  const std::size_t H = model.app_count();
  for (std::size_t h = 0; h < H; ++h)
    if (model.spaces()[h].actions.empty())
      throw std::runtime_error("empty action space for application " +
                               model.config().applications[h].id);
  if (budget.max_iterations < 1) throw std::invalid_argument("search budget must be positive");

  std::mt19937_64 rng(seed);
  auto count = [&](int depth) { return model.spaces()[std::size_t(depth)].actions.size(); };
  auto make_node = [&](int depth, int action) {
    TreeNode n;
    n.depth = depth;
    n.action = action;
    if (depth < int(H)) {
      const std::size_t c = count(depth);
      n.mult = coprime_multiplier(c, rng);
      n.offset = std::uniform_int_distribution<std::size_t>(0, c - 1)(rng);
    }
    return n;
  };

  std::vector<TreeNode> tree;
  tree.reserve(std::size_t(std::min<long>(budget.max_iterations, 1'000'000)) + 1);
  tree.push_back(make_node(0, -1));

  SolverResult best_feasible, best_any;
  bool have_feasible = false, have_any = false;
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();
  std::vector<int> joint(H);
  std::vector<std::size_t> path;

  long it = 0;
  for (; it < budget.max_iterations; ++it) {
    if (budget.max_wall_time > 0 && it > 0) {
      const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
      if (el.count() > budget.max_wall_time) break;
    }
    path.assign(1, 0);
    std::size_t cur = 0;
    while (tree[cur].depth < int(H)) {
      TreeNode& node = tree[cur];
      const std::size_t n = count(node.depth);
      if (node.expanded < n) {
        const int a = int((node.mult * node.expanded + node.offset) % n);
        ++node.expanded;
        const int depth = node.depth + 1;
        TreeNode child = make_node(depth, a);
        tree.push_back(std::move(child));
        const std::size_t idx = tree.size() - 1;
        tree[cur].children.push_back(idx);
        joint[std::size_t(depth - 1)] = a;
        path.push_back(idx);
        cur = idx;
        break;
      }
      // UCB over fully expanded children, values normalized to [0, 1].
      const double logn = std::log(double(node.visits));
      const double span = vmax - vmin;
      std::size_t pick = node.children.front();
      double best_ucb = -std::numeric_limits<double>::infinity();
      for (std::size_t c : node.children) {
        const TreeNode& ch = tree[c];
        const double mean = ch.total / double(ch.visits);
        const double q = span > 0 ? (mean - vmin) / span : 0.5;
        const double ucb = q + budget.exploration * std::sqrt(logn / double(ch.visits));
        if (ucb > best_ucb) {
          best_ucb = ucb;
          pick = c;
        }
      }
      joint[std::size_t(node.depth)] = tree[pick].action;
      path.push_back(pick);
      cur = pick;
    }
    // Uniform rollout for the remaining apps.
    for (int d = tree[cur].depth; d < int(H); ++d)
      joint[std::size_t(d)] =
          int(std::uniform_int_distribution<std::size_t>(0, count(d) - 1)(rng));

    const JointScore s = model.score(joint, mu);
    const double v = penalized_value(s);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
    for (std::size_t idx : path) {
      tree[idx].visits += 1;
      tree[idx].total += v;
    }
    if (s.feasible && (!have_feasible || v > best_feasible.value)) {
      best_feasible = {joint, true, s.energy, v, 0};
      have_feasible = true;
    }
    if (!have_any || v > best_any.value) {
      best_any = {joint, s.feasible, s.energy, v, 0};
      have_any = true;
    }
  }
  SolverResult out = have_feasible ? best_feasible : best_any;
  out.iterations = it;
  return out;
}

namespace {

double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

struct Usage {
  std::vector<double> compute;
  std::vector<int> blocks;
  bool operator<(const Usage& o) const {
    if (compute != o.compute) return compute < o.compute;
    return blocks < o.blocks;
  }
};

struct Suffix {
  double energy = 0.0;
  std::vector<int> actions;
};

class Exhaustive {
 public:
  Exhaustive(const SlotModel& model, std::vector<std::vector<int>> candidates)
      : model_(model), cand_(std::move(candidates)), memo_(cand_.size()) {}

  std::optional<Suffix> solve(std::size_t d, const Usage& u) {
    if (d == cand_.size()) return Suffix{};
    auto it = memo_[d].find(u);
    if (it != memo_[d].end()) return it->second;
    std::optional<Suffix> best;
    const auto& state = model_.state();
    for (int a : cand_[d]) {
      const auto& eff = model_.effects(d)[std::size_t(a)];
      Usage next = u;
      bool ok = true;
      for (const auto& use : eff.uses) {
        next.compute[use.node] += use.compute;
        next.blocks[use.node] += use.blocks;
        if (!(ratio(next.compute[use.node], state.compute(Eigen::Index(use.node))) <= 1.0) ||
            !(ratio(double(next.blocks[use.node]), double(state.blocks(Eigen::Index(use.node)))) <= 1.0))
          ok = false;
      }
      if (!ok) continue;
      auto sub = solve(d + 1, next);
      if (!sub) continue;
      const double total = eff.energy + sub->energy;
      if (!best || total < best->energy - 1e-12 * std::max(1.0, std::abs(best->energy))) {
        Suffix s;
        s.energy = total;
        s.actions.reserve(cand_.size() - d);
        s.actions.push_back(a);
        s.actions.insert(s.actions.end(), sub->actions.begin(), sub->actions.end());
        best = std::move(s);
      }
    }
    memo_[d].emplace(u, best);
    return best;
  }

 private:
  const SlotModel& model_;
  std::vector<std::vector<int>> cand_;
  std::vector<std::map<Usage, std::optional<Suffix>>> memo_;
};

}  // namespace

std::optional<SolverResult> exhaustive_optimum(const SlotModel& model, double cap) {
  const std::size_t H = model.app_count();
  const std::size_t N = model.config().nodes.size();
  // Apps whose own quantile constraints fail can never be part of a feasible joint action.
  std::vector<std::vector<int>> cand(H);
  double product = 1.0;
  for (std::size_t h = 0; h < H; ++h) {
    const auto& effs = model.effects(h);
    for (std::size_t a = 0; a < effs.size(); ++a)
      if (effs[a].app_ok) cand[h].push_back(int(a));
    product *= double(cand[h].size());
  }
  if (product > cap)
    throw CapExceeded("joint action space of " + std::to_string(product) +
                      " candidates exceeds the cap of " + std::to_string(cap));
  if (product == 0.0) return std::nullopt;

  Exhaustive ex(model, std::move(cand));
  Usage start{std::vector<double>(N, 0.0), std::vector<int>(N, 0)};
  auto best = ex.solve(0, start);
  if (!best) return std::nullopt;
  const JointScore s = model.score(best->actions, {0.25, 0.25, 0.25, 0.25});
  SolverResult r;
  r.joint = best->actions;
  r.feasible = s.feasible;
  r.energy = s.energy;
  r.value = -s.energy;
  return r;
}

}  // namespace qic

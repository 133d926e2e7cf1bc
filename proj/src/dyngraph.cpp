#include "qic/dyngraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qic/quantile.hpp"

namespace qic {

namespace {

double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

double edge_value(const AttributeVector& a) {
  const bool ok = a(1) <= 1.0 && a(2) <= 1.0 && a(3) <= 1.0 && a(4) <= 1.0;
  return (ok ? 1.0 : -1.0) / (1.0 + a(0));
}

VertexRole role_of(NodeKind k) {
  switch (k) {
    case NodeKind::source: return VertexRole::source;
    case NodeKind::mobile: return VertexRole::mobile;
    case NodeKind::edge: return VertexRole::edge_server;
  }
  return VertexRole::source;
}

std::string_view role_name(VertexRole r) {
  switch (r) {
    case VertexRole::source: return "source";
    case VertexRole::mobile: return "mobile";
    case VertexRole::edge_server: return "edge_server";
    case VertexRole::source_v: return "S_v";
    case VertexRole::sink_v: return "D_v";
  }
  return "?";
}

}  // namespace

std::vector<AttributeVector> GraphSnapshot::attribute_list() const {
  std::vector<AttributeVector> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back(e.attrs);
  return out;
}

std::vector<EdgeKey> admissible_edges(const ScenarioConfig& cfg) {
  const std::size_t N = cfg.nodes.size(), sv = N, dv = N + 1;
  std::vector<std::size_t> src, mob, edg;
  for (std::size_t n = 0; n < N; ++n) {
    switch (cfg.nodes[n].kind) {
      case NodeKind::source: src.push_back(n); break;
      case NodeKind::mobile: mob.push_back(n); break;
      case NodeKind::edge: edg.push_back(n); break;
    }
  }
  std::vector<EdgeKey> out;
  for (std::size_t s : src) out.push_back({sv, s});
  for (std::size_t s : src) {
    const auto& host = cfg.nodes[s].colocated_with;
    for (std::size_t m : mob)
      if (!host || *host == cfg.nodes[m].id) out.push_back({s, m});
    for (std::size_t e : edg) out.push_back({s, e});
  }
  for (std::size_t m : mob) {
    for (std::size_t e : edg) out.push_back({m, e});
    out.push_back({m, dv});
  }
  for (std::size_t e : edg) out.push_back({e, dv});
  return out;
}

GraphSnapshot build_initial(const ScenarioConfig& cfg, const SystemState& state, int t) {
  const std::size_t N = cfg.nodes.size(), H = cfg.applications.size();
  GraphSnapshot g;
  g.t = t;
  g.epoch = 0;
  for (const auto& n : cfg.nodes) g.vertices.push_back({n.id, role_of(n.kind)});
  g.vertices.push_back({"S_v", VertexRole::source_v});
  g.vertices.push_back({"D_v", VertexRole::sink_v});
  for (const auto& k : admissible_edges(cfg)) {
    AttributedEdge e;
    e.u = k.u;
    e.v = k.v;
    e.compute = Eigen::VectorXd::Zero(Eigen::Index(H));
    e.blocks = Eigen::VectorXi::Zero(Eigen::Index(H));
    e.rho = k.u < N ? state.rho(Eigen::Index(k.u)) : 0.0;
    g.edges.push_back(std::move(e));
  }
  g.config = Configuration::empty(H, N);
  return g;
}

GraphSnapshot apply_action(const GraphSnapshot& g, const Configuration& action,
                           const ScenarioConfig& cfg, const SystemState& state,
                           const std::vector<radio::LinkDistribution>& links) {
  const std::size_t N = cfg.nodes.size(), H = cfg.applications.size();
  if (action.plans.size() != H || action.compute.cols() != Eigen::Index(N))
    throw std::invalid_argument("action does not match the scenario");
  for (const auto& p : action.plans) {
    if (!p) continue;
    if (p->stem_host >= N || p->branch_host >= N) throw std::invalid_argument("action references unknown nodes");
    for (std::size_t s : p->sources)
      if (s >= N) throw std::invalid_argument("action references unknown nodes");
  }
  GraphSnapshot out = g;
  out.epoch = g.epoch + 1;
  out.config = action;
  std::vector<EdgeKey> keys;
  keys.reserve(g.edges.size());
  for (const auto& e : g.edges) keys.push_back({e.u, e.v});
  const auto attrs = attributes(action, cfg, state, links, keys);
  for (std::size_t i = 0; i < out.edges.size(); ++i) {
    auto& e = out.edges[i];
    if (e.u < N) {
      e.compute = action.compute.col(Eigen::Index(e.u));
      e.blocks = action.radio.col(Eigen::Index(e.u));
    } else {
      e.compute = Eigen::VectorXd::Zero(Eigen::Index(H));
      e.blocks = Eigen::VectorXi::Zero(Eigen::Index(H));
    }
    e.attrs = attrs[i];
  }
  return out;
}

std::vector<std::size_t> application_path(const GraphSnapshot& g, const ScenarioConfig& cfg,
                                          std::size_t h) {
  if (h >= g.config.plans.size() || !g.config.plans[h])
    throw std::runtime_error("application has no placement");
  const AppPlan& p = *g.config.plans[h];
  if (p.sources.empty() || p.option.stems.empty())
    throw std::runtime_error("disconnected assignment: branch without data or stems");
  std::vector<std::size_t> out;
  for (const auto& k : plan_path(cfg, h, p)) {
    auto it = std::find_if(g.edges.begin(), g.edges.end(),
                           [&](const AttributedEdge& e) { return e.u == k.u && e.v == k.v; });
    if (it == g.edges.end())
      throw std::runtime_error("disconnected assignment: no edge " + g.vertices.at(k.u).id +
                               " -> " + g.vertices.at(k.v).id);
    out.push_back(std::size_t(it - g.edges.begin()));
  }
  return out;
}

std::string to_dot(const GraphSnapshot& g) {
  std::ostringstream os;
  os << "digraph G_" << g.t << "_" << g.epoch << " {\n  rankdir=LR;\n";
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    os << "  v" << i << " [label=\"" << g.vertices[i].id << "\\n" << role_name(g.vertices[i].role)
       << "\"];\n";
  char buf[160];
  for (const auto& e : g.edges) {
    std::snprintf(buf, sizeof buf, "f=(%.3g,%.3g,%.3g,%.3g,%.3g)", e.attrs(0), e.attrs(1),
                  e.attrs(2), e.attrs(3), e.attrs(4));
    os << "  v" << e.u << " -> v" << e.v << " [label=\"" << buf << "\"";
    if (e.attrs(0) > 0) os << ", penwidth=2";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

double reward_of(const std::vector<AttributeVector>& attrs) {
  double r = 0.0;
  for (const auto& a : attrs) r += edge_value(a);
  return r;
}

double cost_of(const std::vector<AttributeVector>& attrs, const std::array<double, 4>& mu) {
  double c = 0.0;
  for (const auto& a : attrs)
    for (int j = 0; j < 4; ++j) c += mu[std::size_t(j)] * a(j + 1);
  return c;
}

int violations_of(const std::vector<AttributeVector>& attrs) {
  int v = 0;
  for (const auto& a : attrs)
    for (int j = 1; j < 5; ++j)
      if (!(a(j) <= 1.0)) ++v;
  return v;
}

// --- SlotModel ---------------------------------------------------------

SlotModel::SlotModel(const ScenarioConfig& cfg, int t)
    : cfg_(&cfg),
      t_(t),
      state_(snapshot_at(cfg, t)),
      links_(slot_links(cfg, t)),
      edges_(admissible_edges(cfg)),
      spaces_(build_action_spaces(cfg, state_)) {
  const std::size_t N = cfg.nodes.size(), V = N + 2;
  out_edges_.assign(V, {});
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    out_edges_[edges_[i].u].push_back(i);
    index[{edges_[i].u, edges_[i].v}] = i;
  }
  auto edge_at = [&](std::size_t u, std::size_t v) {
    auto it = index.find({u, v});
    if (it == index.end()) throw std::logic_error("plan uses a non-admissible edge");
    return it->second;
  };

  effects_.resize(spaces_.size());
  for (std::size_t h = 0; h < spaces_.size(); ++h) {
    const auto& app = cfg.applications[h];
    const auto& sp = spaces_[h];
    const ContextLabel& ctx = cfg.context_of(app);
    std::vector<double> accuracy(sp.options.size());
    std::vector<CostProfile> profiles(sp.options.size());
    for (std::size_t o = 0; o < sp.options.size(); ++o) {
      accuracy[o] = accuracy_quantile(sp.options[o], ctx, app.quantile, cfg.calibration, cfg.catalog);
      profiles[o] = option_cost_profile(cfg.catalog, sp.options[o]);
    }

    auto& effs = effects_[h];
    effs.reserve(sp.actions.size());
    std::vector<double> samples;
    for (const auto& act : sp.actions) {
      ActionEffect eff;
      const AppPlan plan = plan_of(sp, act);
      const auto hops = plan_hops(cfg, h, plan);
      const CostProfile& prof = profiles[std::size_t(act.option)];

      std::map<std::size_t, ActionEffect::NodeUse> uses;
      const double c_stem = compute_allocation(state_, plan.stem_host, act.c_level);
      uses[plan.stem_host] = {plan.stem_host, c_stem, 0, act.c_level, 0.0};
      uses[plan.branch_host] = {plan.branch_host,
                                compute_allocation(state_, plan.branch_host, act.c_level), 0,
                                act.c_level, 0.0};
      for (const auto& hop : hops) {
        if (!hop.transmits) continue;
        auto& u = uses[hop.from];
        u.node = hop.from;
        u.blocks = block_allocation(state_, hop.from, act.b_level);
      }
      for (auto& [n, u] : uses) {
        const auto& node = cfg.nodes[n];
        u.energy = node.energy_per_compute * u.compute + node.energy_per_block * double(u.blocks);
        eff.energy += u.energy;
        eff.uses.push_back(u);
      }
      auto use_of = [&](std::size_t n) -> const ActionEffect::NodeUse* {
        auto it = uses.find(n);
        return it == uses.end() ? nullptr : &it->second;
      };

      // Latency samples, in the same order of operations as the reference evaluator.
      double lc;
      if (plan.stem_host == plan.branch_host)
        lc = (prof.stem_flops + prof.branch_flops) / uses[plan.stem_host].compute;
      else
        lc = prof.stem_flops / uses[plan.stem_host].compute +
             prof.branch_flops / uses[plan.branch_host].compute;
      std::size_t count = 0;
      for (const auto& hop : hops)
        if (hop.transmits) count = links_[hop.from].samples.size();
      samples.clear();
      if (count == 0) {
        samples.push_back(lc);
      } else {
        for (std::size_t k = 0; k < count; ++k) {
          double net = 0.0;
          for (const auto& hop : hops) {
            if (!hop.transmits) continue;
            net += hop.bits / (double(uses[hop.from].blocks) * links_[hop.from].samples[k].rho);
          }
          samples.push_back(lc + net);
        }
      }
      eff.latency_quantile = empirical_quantile(samples, app.quantile);
      eff.accuracy_quantile = accuracy[std::size_t(act.option)];
      eff.f2 = ratio(app.accuracy_target, eff.accuracy_quantile);
      eff.f3 = ratio(eff.latency_quantile, app.latency_target);
      eff.app_ok = eff.f2 <= 1.0 && eff.f3 <= 1.0;

      // Path and energy attribution.
      const auto path = plan_path(cfg, h, plan);
      std::map<std::size_t, double> f1;
      for (const auto& k : path) f1.emplace(edge_at(k.u, k.v), 0.0);
      auto energy_at = [&](std::size_t n) {
        const auto* u = use_of(n);
        return u ? u->energy : 0.0;
      };
      for (std::size_t s : plan.sources) f1[edge_at(s, plan.stem_host)] += energy_at(s);
      if (plan.stem_host != plan.branch_host)
        f1[edge_at(plan.stem_host, plan.branch_host)] += energy_at(plan.stem_host);
      f1[edge_at(plan.branch_host, N + 1)] += energy_at(plan.branch_host);
      for (const auto& k : path) {
        const std::size_t e = edge_at(k.u, k.v);
        eff.path.emplace_back(e, f1[e]);
      }

      std::map<std::size_t, ActionEffect::Touch> touched;
      for (const auto& [e, val] : f1) touched[e] = {e, val, true, 0.0, 0};
      for (const auto& u : eff.uses)
        for (std::size_t e : out_edges_[u.node])
          if (!touched.count(e)) touched[e] = {e, 0.0, false, 0.0, 0};
      for (auto& [e, tch] : touched) {
        if (const auto* u = use_of(edges_[e].u)) {
          tch.compute = u->compute;
          tch.blocks = u->blocks;
        }
        eff.touched.push_back(tch);
      }
      effs.push_back(std::move(eff));
    }
  }
}

Configuration SlotModel::configuration(const std::vector<int>& joint) const {
  return compose(*cfg_, state_, spaces_, joint);
}

std::vector<AttributeVector> SlotModel::joint_attributes(const std::vector<int>& joint) const {
  const std::size_t N = cfg_->nodes.size();
  std::vector<AttributeVector> attrs(edges_.size(), AttributeVector::Zero());
  std::vector<double> c(N, 0.0);
  std::vector<int> b(N, 0);
  for (std::size_t h = 0; h < joint.size(); ++h) {
    if (joint[h] < 0) continue;
    const auto& eff = effects_[h].at(std::size_t(joint[h]));
    for (const auto& [e, f1] : eff.path) {
      attrs[e](0) += f1;
      attrs[e](1) = std::max(attrs[e](1), eff.f2);
      attrs[e](2) = std::max(attrs[e](2), eff.f3);
    }
    for (const auto& u : eff.uses) {
      c[u.node] += u.compute;
      b[u.node] += u.blocks;
    }
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const std::size_t u = edges_[i].u;
    if (u >= N) continue;
    attrs[i](3) = ratio(c[u], state_.compute(Eigen::Index(u)));
    attrs[i](4) = ratio(double(b[u]), double(state_.blocks(Eigen::Index(u))));
  }
  return attrs;
}

JointScore SlotModel::score(const std::vector<int>& joint, const std::array<double, 4>& mu) const {
  const auto attrs = joint_attributes(joint);
  JointScore s;
  s.reward = reward_of(attrs);
  s.cost = cost_of(attrs, mu);
  s.violations = violations_of(attrs);
  s.feasible = s.violations == 0;
  for (std::size_t h = 0; h < joint.size(); ++h)
    if (joint[h] >= 0) s.energy += effects_[h].at(std::size_t(joint[h])).energy;
  return s;
}

// --- CoordinateEvaluator ----------------------------------------------

CoordinateEvaluator::CoordinateEvaluator(const SlotModel& model) : model_(&model) {}

double CoordinateEvaluator::edge_reward(double f1, double f2, double f3, double f4,
                                        double f5) const {
  const bool ok = f2 <= 1.0 && f3 <= 1.0 && f4 <= 1.0 && f5 <= 1.0;
  return (ok ? 1.0 : -1.0) / (1.0 + f1);
}

void CoordinateEvaluator::exclude(const std::vector<int>& joint, std::size_t h) {
  const auto& edges = model_->edges();
  const auto& state = model_->state();
  const std::size_t N = model_->config().nodes.size(), E = edges.size();
  app_ = h;
  f1_ex_.assign(E, 0.0);
  f2_ex_.assign(E, 0.0);
  f3_ex_.assign(E, 0.0);
  r_ex_.assign(E, 0.0);
  c_ex_.assign(N, 0.0);
  b_ex_.assign(N, 0);
  for (std::size_t g = 0; g < joint.size(); ++g) {
    if (g == h || joint[g] < 0) continue;
    const auto& eff = model_->effects(g).at(std::size_t(joint[g]));
    for (const auto& [e, f1] : eff.path) {
      f1_ex_[e] += f1;
      f2_ex_[e] = std::max(f2_ex_[e], eff.f2);
      f3_ex_[e] = std::max(f3_ex_[e], eff.f3);
    }
    for (const auto& u : eff.uses) {
      c_ex_[u.node] += u.compute;
      b_ex_[u.node] += u.blocks;
    }
  }
  total_ex_ = 0.0;
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t u = edges[e].u;
    double f4 = 0.0, f5 = 0.0;
    if (u < N) {
      f4 = ratio(c_ex_[u], state.compute(Eigen::Index(u)));
      f5 = ratio(double(b_ex_[u]), double(state.blocks(Eigen::Index(u))));
    }
    r_ex_[e] = edge_reward(f1_ex_[e], f2_ex_[e], f3_ex_[e], f4, f5);
    total_ex_ += r_ex_[e];
  }
}

double CoordinateEvaluator::reward_with(int action) const {
  if (action < 0) return total_ex_;
  const auto& eff = model_->effects(app_).at(std::size_t(action));
  const auto& edges = model_->edges();
  const auto& state = model_->state();
  const std::size_t N = model_->config().nodes.size();
  double delta = 0.0;
  for (const auto& t : eff.touched) {
    const std::size_t e = t.edge, u = edges[e].u;
    double f4 = 0.0, f5 = 0.0;
    if (u < N) {
      f4 = ratio(c_ex_[u] + t.compute, state.compute(Eigen::Index(u)));
      f5 = ratio(double(b_ex_[u] + t.blocks), double(state.blocks(Eigen::Index(u))));
    }
    const double f2 = t.on_path ? std::max(f2_ex_[e], eff.f2) : f2_ex_[e];
    const double f3 = t.on_path ? std::max(f3_ex_[e], eff.f3) : f3_ex_[e];
    delta += edge_reward(f1_ex_[e] + t.f1, f2, f3, f4, f5) - r_ex_[e];
  }
  return total_ex_ + delta;
}

}  // namespace qic

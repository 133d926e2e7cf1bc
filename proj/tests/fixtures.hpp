#pragma once

#include <random>
#include <string>
#include <vector>

#include "qic/action_space.hpp"
#include "qic/scenario.hpp"

namespace qic::test {

// Static-link nodes: no trace, fixed B and rho.
inline NodeSpec mobile(std::string id, ContextName ctx, double C = 1e12, int B = 50,
                       double rho = 5e5) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::mobile;
  n.compute_capacity = C;
  n.radio_blocks = B;
  n.rho = rho;
  n.energy_per_compute = 5e-14;
  n.energy_per_block = 1e-6;
  n.context = ContextLabel{ctx, default_accuracy_cap(ctx)};
  return n;
}

inline NodeSpec edge(std::string id, double C = 4e13, double eps = 1e-14) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::edge;
  n.compute_capacity = C;
  n.energy_per_compute = eps;
  return n;
}

inline NodeSpec source(std::string id, Modality m, const std::string& host, int B = 50,
                       double rho = 5e5) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::source;
  n.modality = m;
  n.radio_blocks = B;
  n.rho = rho;
  n.energy_per_block = 1e-6;
  n.colocated_with = host;
  return n;
}

inline ApplicationSpec app(std::string id, const std::string& home,
                           std::vector<std::string> sources, double bits = 4e5,
                           double latency = 0.05, double accuracy = 0.4) {
  ApplicationSpec a;
  a.id = std::move(id);
  a.home_mobile_node = home;
  a.latency_target = latency;
  a.accuracy_target = accuracy;
  a.quantile = 0.9;
  for (const auto& s : sources) a.source_bits[s] = bits;
  a.candidate_sources = std::move(sources);
  return a;
}

/// One sunny mobile with a lidar, one edge server, one app.
inline ScenarioConfig tiny_scenario() {
  ScenarioConfig cfg;
  cfg.nodes = {mobile("m0", ContextName::sunny), source("li0", Modality::lidar, "m0"),
               edge("e0")};
  cfg.applications = {app("a0", "m0", {"li0"})};
  cfg.finalize();
  return cfg;
}

/// Random valid scenario with exactly `mobiles` mobiles, `edges` edge servers and
/// one app per mobile; returns N = total node count via the config.
inline ScenarioConfig random_scenario(std::mt19937_64& rng, int mobiles, int edges,
                                      bool traces = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::vector<Modality>> types = {
      {Modality::camera_left, Modality::camera_right},
      {Modality::lidar},
      {Modality::radar},
      {Modality::camera_left, Modality::lidar},
      {Modality::radar, Modality::lidar}};
  ScenarioConfig cfg;
  for (int i = 0; i < mobiles; ++i) {
    const std::string mid = "m" + std::to_string(i);
    auto m = mobile(mid, ContextName(rng() % 3), 5e11 + 1e12 * u(rng), 20 + int(rng() % 80),
                    1e5 + 8e5 * u(rng));
    m.energy_per_compute = 1e-14 + 9e-14 * u(rng);
    m.energy_per_block = 1e-7 + 1e-5 * u(rng);
    if (traces) {
      TraceSource ts;
      ts.id = "tr" + std::to_string(i);
      ts.kind = u(rng) < 0.5 ? radio::TraceKind::outdoor : radio::TraceKind::indoor;
      ts.duration_s = 5;
      ts.seed = rng();
      cfg.trace_sources.push_back(ts);
      m.trace_id = ts.id;
    }
    cfg.nodes.push_back(m);
    std::vector<std::string> ids;
    for (Modality mod : types[rng() % types.size()]) {
      auto s = source(mid + "_" + std::string(to_string(mod)), mod, mid, 10 + int(rng() % 90),
                      1e5 + 8e5 * u(rng));
      s.energy_per_block = 1e-7 + 1e-5 * u(rng);
      s.trace_id = m.trace_id;
      ids.push_back(s.id);
      cfg.nodes.push_back(s);
    }
    auto a = app("a" + std::to_string(i), mid, ids, 1e5 + 9e5 * u(rng), 0.02 + 0.2 * u(rng),
                 0.3 + 0.3 * u(rng));
    for (auto& [id, bits] : a.source_bits) bits = 1e5 + 9e5 * u(rng);
    cfg.applications.push_back(a);
  }
  for (int e = 0; e < edges; ++e)
    cfg.nodes.push_back(edge("e" + std::to_string(e), 1e13 + 5e13 * u(rng), 5e-15 + 3e-14 * u(rng)));
  cfg.finalize();
  return cfg;
}

/// One uniformly drawn action index per app.
inline std::vector<int> random_joint(const std::vector<AppActionSpace>& spaces,
                                     std::mt19937_64& rng) {
  std::vector<int> joint;
  for (const auto& sp : spaces)
    joint.push_back(int(std::uniform_int_distribution<std::size_t>(0, sp.actions.size() - 1)(rng)));
  return joint;
}

}  // namespace qic::test

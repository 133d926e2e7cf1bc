#include "qic/action_space.hpp"

#include <cmath>
#include <stdexcept>

namespace qic {

double compute_allocation(const SystemState& state, std::size_t node, int level) {
  return state.compute(Eigen::Index(node)) * double(level) / double(kResourceLevels);
}

int block_allocation(const SystemState& state, std::size_t node, int level) {
  return state.blocks(Eigen::Index(node)) * level / kResourceLevels;
}

AppPlan plan_of(const AppActionSpace& space, const AppAction& action) {
  AppPlan p;
  p.option = space.options.at(std::size_t(action.option));
  p.sources = space.option_sources.at(std::size_t(action.option));
  const Placement& pl = space.placements.at(std::size_t(action.placement));
  p.stem_host = pl.stem_host;
  p.branch_host = pl.branch_host;
  return p;
}

std::vector<AppActionSpace> build_action_spaces(const ScenarioConfig& cfg,
                                                const SystemState& state) {
  std::vector<std::size_t> edges;
  for (std::size_t n = 0; n < cfg.nodes.size(); ++n)
    if (cfg.nodes[n].kind == NodeKind::edge) edges.push_back(n);

  std::vector<AppActionSpace> spaces;
  for (std::size_t h = 0; h < cfg.applications.size(); ++h) {
    const auto& app = cfg.applications[h];
    AppActionSpace sp;
    ModalityMask available = 0;
    for (const auto& s : app.candidate_sources) available |= mask_of(*cfg.node(s).modality);
    sp.options = enumerate_options(cfg.catalog, available);
    for (const auto& opt : sp.options) {
      std::vector<std::size_t> src;
      for (std::size_t m = 0; m < kModalityCount; ++m) {
        if (!(opt.sources & mask_of(Modality(m)))) continue;
        for (const auto& s : app.candidate_sources) {
          const std::size_t idx = cfg.node_index(s);
          if (*cfg.nodes[idx].modality == Modality(m)) {
            src.push_back(idx);
            break;
          }
        }
      }
      sp.option_sources.push_back(std::move(src));
    }
    const std::size_t home = cfg.node_index(app.home_mobile_node);
    sp.placements.push_back({home, home});
    for (std::size_t e : edges) sp.placements.push_back({home, e});
    for (std::size_t e : edges) sp.placements.push_back({e, e});

    for (int o = 0; o < int(sp.options.size()); ++o) {
      for (int p = 0; p < int(sp.placements.size()); ++p) {
        AppAction probe{o, p, kResourceLevels, 0};
        const AppPlan plan = plan_of(sp, probe);
        std::vector<std::size_t> senders;
        for (const auto& hop : plan_hops(cfg, h, plan))
          if (hop.transmits) senders.push_back(hop.from);
        for (int c = 1; c <= kResourceLevels; ++c) {
          if (senders.empty()) {
            sp.actions.push_back({o, p, c, 0});
            continue;
          }
          for (int b = 1; b <= kResourceLevels; ++b) {
            bool usable = true;
            for (std::size_t s : senders)
              if (block_allocation(state, s, b) <= 0 || !(state.rho(Eigen::Index(s)) > 0))
                usable = false;
            if (usable) sp.actions.push_back({o, p, c, b});
          }
        }
      }
    }
    spaces.push_back(std::move(sp));
  }
  return spaces;
}

void assign_action(Configuration& conf, const ScenarioConfig& cfg, const SystemState& state,
                   std::size_t h, const AppActionSpace& space, const AppAction& action) {
  const auto row = Eigen::Index(h);
  conf.compute.row(row).setZero();
  conf.radio.row(row).setZero();
  AppPlan plan = plan_of(space, action);
  conf.compute(row, Eigen::Index(plan.stem_host)) = compute_allocation(state, plan.stem_host, action.c_level);
  conf.compute(row, Eigen::Index(plan.branch_host)) =
      compute_allocation(state, plan.branch_host, action.c_level);
  for (const auto& hop : plan_hops(cfg, h, plan)) {
    if (!hop.transmits) continue;
    if (action.b_level < 1) throw std::invalid_argument("transmitting action without a block level");
    conf.radio(row, Eigen::Index(hop.from)) = block_allocation(state, hop.from, action.b_level);
  }
  conf.plans[h] = std::move(plan);
}

Configuration compose(const ScenarioConfig& cfg, const SystemState& state,
                      const std::vector<AppActionSpace>& spaces, const std::vector<int>& joint) {
  if (joint.size() != cfg.applications.size())
    throw std::invalid_argument("joint action size does not match the application count");
  Configuration conf = Configuration::empty(cfg.applications.size(), cfg.nodes.size());
  for (std::size_t h = 0; h < joint.size(); ++h) {
    if (joint[h] < 0) continue;
    assign_action(conf, cfg, state, h, spaces[h], spaces[h].actions.at(std::size_t(joint[h])));
  }
  return conf;
}

}  // namespace qic

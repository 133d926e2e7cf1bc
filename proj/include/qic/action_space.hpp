#pragma once

#include <cstddef>
#include <vector>

#include "qic/perf.hpp"
#include "qic/scenario.hpp"

namespace qic {

/// Resource levels as quarters of a node's total capacity.
inline constexpr int kResourceLevels = 4;

struct Placement {
  std::size_t stem_host = 0;
  std::size_t branch_host = 0;

  bool operator==(const Placement&) const = default;
};

/// One discrete decision for one application.
struct AppAction {
  int option = 0;
  int placement = 0;
  int c_level = 1;  // 1..4, shared by every host of the app
  int b_level = 0;  // 1..4 when the plan transmits, else 0

  bool operator==(const AppAction&) const = default;
};

struct AppActionSpace {
  std::vector<ConfigurationOption> options;
  std::vector<std::vector<std::size_t>> option_sources;  // node per selected modality
  std::vector<Placement> placements;
  std::vector<AppAction> actions;  // lexicographic in (option, placement, c, b)
};

/// Options x placements x resource levels for every application. Placements are
/// (home, home), (home, edge) and (edge, edge); actions whose transmitters would
/// receive zero blocks are dropped.
std::vector<AppActionSpace> build_action_spaces(const ScenarioConfig& cfg,
                                                const SystemState& state);

AppPlan plan_of(const AppActionSpace& space, const AppAction& action);

/// c = C_n * level / 4 on each host; b = floor(B_n * level / 4) on each transmitter.
double compute_allocation(const SystemState& state, std::size_t node, int level);
int block_allocation(const SystemState& state, std::size_t node, int level);

/// Writes row h of `conf` for the given action.
void assign_action(Configuration& conf, const ScenarioConfig& cfg, const SystemState& state,
                   std::size_t h, const AppActionSpace& space, const AppAction& action);

/// Joint configuration from one action index per app (-1 leaves the app undeployed).
Configuration compose(const ScenarioConfig& cfg, const SystemState& state,
                      const std::vector<AppActionSpace>& spaces, const std::vector<int>& joint);

}  // namespace qic

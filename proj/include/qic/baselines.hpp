#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "qic/dyngraph.hpp"

namespace qic {

struct SearchBudget {
  long max_iterations = 10000;
  double max_wall_time = 0.0;  // seconds; 0 disables the clock
  double exploration = 1.4142135623730951;
};

struct SolverResult {
  std::vector<int> joint;  // one action index per app
  bool feasible = false;
  double energy = 0.0;
  double value = 0.0;      // solver-specific score of `joint`
  long iterations = 0;
};

/// Rollout value used by the tree search: reward minus one per violated (edge, j).
double penalized_value(const JointScore& s);

/// UCT over per-app action choices. Throws std::runtime_error on an empty action space.
SolverResult mctp_solve(const SlotModel& model, const SearchBudget& budget, std::uint64_t seed,
                        const std::array<double, 4>& mu = {0.25, 0.25, 0.25, 0.25});

inline constexpr double kDefaultJointCap = 1e7;

class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimum-energy feasible joint action over the full discretized space, ties
/// broken lexicographically. nullopt when nothing is feasible. Throws CapExceeded
/// when the product of per-app candidate counts exceeds `cap`.
std::optional<SolverResult> exhaustive_optimum(const SlotModel& model,
                                               double cap = kDefaultJointCap);

}  // namespace qic

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simarr/cbs.hpp"

namespace simarr {

// Abstract grid worlds: one heading, one (rest) velocity level, axis moves
// that carry sweeps but no trajectory. Used for exact optimality checks.

struct AbstractMove {
  std::string name;
  int dx = 0;  // exactly one of dx, dy is non-zero
  int dy = 0;
  Step duration = 10;
  double cost = 1.0;
};

/// Sweeps of a straight k-cell move over T steps: cell j is touched while
/// the unit-length footprint centred on the moving point overlaps it.
std::vector<SweepInstance> abstract_sweeps(int dx, int dy, Step duration);

/// Forward set of abstract moves plus a wait of one tick.
PrimitiveSet abstract_set(const std::vector<AbstractMove>& moves, Step tick, double wait_cost);

struct GridInstance {
  Workspace workspace;
  PrimitiveSet set;
  std::vector<LatticeState> starts;
  std::vector<LatticeState> goals;

  MampProblem problem(CostMode mode, Aggregate agg) const;
};

/// Two agents separated by an obstacle row; the cheapest backward plan is
/// not the cheapest forward plan once start rests are paid.
GridInstance padding_tradeoff_fixture();

/// Random 2-agent instance: width/height in [3, max_side], 4-neighbour unit
/// moves with integer costs in [1, 5].
GridInstance random_grid_instance(std::uint64_t seed, double wait_cost, int max_side = 6);

enum class JointObjective { SumCost, Makespan };

/// Exhaustive joint time-expanded search over ticks in [0, horizon_ticks].
/// Returns the optimal value (cost, or t_f in steps for Makespan) of a
/// collision-free plan that places every agent at its goal at a common
/// time, or nullopt when none exists within the horizon. Waits are charged
/// up to that common time; with `free_rest_at_goal` an agent may instead
/// finish at its goal and rest there for free without ever leaving again
/// (the forward convention).
std::optional<double> brute_force_optimum(const GridInstance& inst, JointObjective obj, int horizon_ticks,
                                          bool free_rest_at_goal = false);

}  // namespace simarr

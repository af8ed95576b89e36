#pragma once

#include <vector>

#include "simarr/cbs.hpp"

namespace simarr {

/// Forward plan in which every agent reaches its goal exactly at t_f. Paths
/// refer to executable (forward) primitives; each agent rests at its start
/// for padding[i] steps first.
struct SyncPlan {
  std::vector<AgentPath> paths;
  Step t_f = 0;
  std::vector<Step> padding;
  double cost = 0.0;           // forward cost, rests included
  double backward_cost = 0.0;  // cost of the backward solution (no padding)
  std::size_t cbs_expanded = 0;
};

/// Backward plan -> forward plan about t_f. Actions are re-attached to the
/// forward primitives of `forward_set`.
SyncPlan reverse_plan(std::span<const AgentPath> backward, const PrimitiveSet& backward_set,
                      const PrimitiveSet& forward_set, Step t_f);

/// Solve the backward problem with reversed primitives, then pad and reverse.
/// Requires every start at rest.
SyncPlan solve_simultaneous(const MampProblem& prob, const CbsOptions& opts = {});

/// Forward cost of a plan (all rests from step 0 to arrival counted).
double sync_cost(const SyncPlan& plan, const PrimitiveSet& set, CostMode mode, Aggregate agg);

/// Comparator: forward CBS without the arrival constraint, then every agent
/// padded with rests at its start so that all arrive at the latest arrival.
/// The result may collide; `collides` reports it.
struct BaselinePlan {
  SyncPlan plan;
  bool collides = false;
};
BaselinePlan solve_baseline(const MampProblem& prob, const CbsOptions& opts = {});

}  // namespace simarr

#pragma once

#include <optional>
#include <vector>

#include "simarr/sipp.hpp"

namespace simarr {

enum class Aggregate { Sum, Max };

struct MampProblem {
  Workspace workspace;
  std::vector<LatticeState> starts;
  std::vector<LatticeState> goals;
  const PrimitiveSet* prims = nullptr;
  CostMode mode = CostMode::RunningCost;
  Aggregate aggregate = Aggregate::Sum;

  int agents() const { return static_cast<int>(starts.size()); }
  /// Throws ValidationError for blocked, shared or malformed start/goal cells.
  void validate() const;
};

struct CbsOptions {
  double time_limit = 100.0;  // seconds; non-finite means no limit
  // Constraint covers [step - halfwidth, step + halfwidth] around a conflict.
  Step constraint_halfwidth = 0;
  int workers = 1;
  std::size_t max_nodes = 200'000;
};

struct CbsResult {
  std::vector<AgentPath> paths;
  double cost = 0.0;
  std::size_t expanded = 0;
  std::size_t generated = 0;
};

/// Constraint forbidding c's cell to the given agent around the conflict step.
SearchConstraint make_constraint(const Conflict& c, int agent_index, Step halfwidth = 0);

double aggregate_cost(std::span<const AgentPath> paths, Aggregate agg);

/// Earliest conflict between planned paths (occupancy from primitive sweeps).
std::optional<Conflict> plan_conflict(std::span<const AgentPath> paths, const PrimitiveSet& set);
/// Number of agent pairs whose paths conflict somewhere.
int conflicting_pairs(std::span<const AgentPath> paths, const PrimitiveSet& set);

/// Best-first conflict-tree search. Ordered by aggregate cost, then number
/// of conflicting pairs, then insertion order. Throws Timeout or Infeasible.
CbsResult cbs_solve(const MampProblem& prob, const CbsOptions& opts = {});

}  // namespace simarr

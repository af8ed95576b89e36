#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <vector>

#include "simarr/core_model.hpp"
#include "simarr/primitives.hpp"

namespace simarr {

enum class CostMode { RunningCost, Makespan };

/// Closed step range [start, end] during which a cell is free; end may be kInfStep.
struct SafeInterval {
  Cell cell;
  Step start = 0;
  Step end = kInfStep;
  bool operator==(const SafeInterval&) const = default;
};

/// A cell unavailable on the closed step range [first, last].
struct BlockedInterval {
  Cell cell;
  Step first = 0;
  Step last = 0;
};

/// Primitive `prim` may not depart from `cell` at any step in [first, last].
struct ActionBan {
  int prim = -1;
  Cell cell;
  Step first = 0;
  Step last = 0;
};

/// CBS constraint. With prim < 0, `agent` may not touch `cell` on
/// [first, last] (last may be kInfStep); otherwise it is an ActionBan.
struct SearchConstraint {
  int agent = 0;
  Cell cell;
  Step first = 0;
  Step last = 0;
  int prim = -1;
  bool operator==(const SearchConstraint&) const = default;
};

class IntervalTable {
 public:
  IntervalTable() = default;
  IntervalTable(const Workspace& ws, std::span<const BlockedInterval> blocked, std::span<const ActionBan> bans = {});

  /// Sorted disjoint safe intervals; empty for obstacles and cells outside.
  const std::vector<SafeInterval>& intervals(Cell c) const;
  /// Index of the interval containing step t, or -1.
  int find(Cell c, Step t) const;
  /// First step from which no dynamic block or ban is active anywhere.
  Step static_after() const { return static_after_; }
  bool banned(int prim, Cell from, Step depart) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::vector<SafeInterval>> cells_;
  std::vector<ActionBan> bans_;
  Step static_after_ = 0;
};

/// Occupancy of the other agents, used only to break ties between
/// equal-cost labels in favour of fewer overlaps.
class ConflictAvoidance {
 public:
  ConflictAvoidance() = default;
  ConflictAvoidance(const Workspace& ws, std::span<const std::vector<CellInterval>> others);
  /// Number of recorded episodes in `c` overlapping [first, last].
  int count(Cell c, Step first, Step last) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::vector<std::pair<Step, Step>>> cells_;
};

IntervalTable build_safe_intervals(const Workspace& ws, std::span<const BlockedInterval> blocked);
/// Cell constraints of `agent`.
std::vector<BlockedInterval> constraints_for(std::span<const SearchConstraint> constraints, int agent);
std::vector<ActionBan> action_bans_for(std::span<const SearchConstraint> constraints, int agent);

/// One executed primitive: id within its set, start cell, departure step.
struct PlanAction {
  int prim = -1;
  Cell cell;
  Step depart = 0;
  bool operator==(const PlanAction&) const = default;
};

/// Single-agent plan. Between actions the agent rests; after `arrival` it
/// rests at the goal indefinitely.
struct AgentPath {
  LatticeState start;
  LatticeState goal;
  Step start_step = 0;
  Step arrival = 0;
  double cost = 0.0;
  std::vector<PlanAction> actions;
};

struct SippNode {
  LatticeState state;
  int interval = -1;
  Step arrival = 0;
  double g = 0.0;
  int overlaps = 0;  // with the avoidance table, along the path so far
  int parent = -1;
  int prim = -1;
  Step depart = 0;
};

/// Admissible, consistent cost-to-go. Per cell: rate * 8-connected distance
/// over free cells, where rate bounds cost (or steps) per unit of in-sweep
/// path length. Built from a goal state it also holds the exact static
/// cost-to-go over lattice states (other agents ignored), which is tighter.
class DistanceHeuristic {
 public:
  DistanceHeuristic(const Workspace& ws, Cell goal, const PrimitiveSet& set, CostMode mode);
  DistanceHeuristic(const Workspace& ws, const LatticeState& goal, const PrimitiveSet& set, CostMode mode);
  double operator()(Cell c) const;
  double operator()(const LatticeState& s) const;
  double rate() const { return rate_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int headings_ = 0;
  int vels_ = 0;
  std::vector<double> dist_;
  std::vector<double> lattice_;  // empty unless built from a goal state
  double rate_ = 0.0;
};

/// Successors of `node` under `prim`. At rest the agent may wait (in ticks)
/// before departing, up to the node interval end and `depart_cap`; moving
/// states depart on arrival. Rest successors keep only the earliest
/// departure per successor interval; moving successors keep every feasible
/// arrival since they cannot absorb a delay later. An infinite cap stops at
/// the table's last dynamic block.
std::vector<SippNode> project_intervals(const SippNode& node, const MotionPrimitive& prim, const PrimitiveSet& set,
                                        const IntervalTable& table, CostMode mode, Step depart_cap);

struct SippQuery {
  LatticeState start;
  LatticeState goal;
  Step start_step = 0;
  CostMode mode = CostMode::RunningCost;
  // The final arrival must be at or after this step.
  Step min_arrival = 0;
  // Optional tie-breaker; never changes the returned cost.
  const ConflictAvoidance* avoid = nullptr;
  std::size_t max_expansions = 5'000'000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

/// Minimum-cost plan to the goal (at rest, in an interval ending at
/// infinity). Ties prefer fewer overlaps with `avoid`, then later arrival. Throws NoPath, or Timeout when the
/// deadline or expansion cap is hit.
AgentPath sipp_search(const SippQuery& q, const PrimitiveSet& set, const Workspace& ws, const IntervalTable& table,
                      const DistanceHeuristic* heuristic = nullptr);

/// Cell occupancy of a path, including rests and the final rest to infinity.
std::vector<CellInterval> path_occupancy(const AgentPath& path, const PrimitiveSet& set);

/// Cost of a path under a mode, counting all rests between start_step and arrival.
double path_cost(const AgentPath& path, const PrimitiveSet& set, CostMode mode);

/// Continuous trajectory on [0, t_end] sampled at every step. The agent
/// rests at the start before start_step and at the goal after arrival.
Trajectory path_trajectory(const AgentPath& path, const PrimitiveSet& set, const ModelParams& p, Step t_end);

/// Same plan in reversed time about t_f, with actions referring to
/// `target` (the reversed counterpart of the path's set).
AgentPath reverse_path(const AgentPath& path, const PrimitiveSet& source, const PrimitiveSet& target, Step t_f);

}  // namespace simarr

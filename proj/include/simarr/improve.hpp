#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "simarr/nadmm.hpp"
#include "simarr/sim_arrival.hpp"

namespace simarr {

/// Executable multi-agent plan: one sampled trajectory per agent, all on
/// the same sample times and ending together at t_f.
struct ContinuousPlan {
  std::vector<Trajectory> trajectories;
  std::vector<AugmentedState> goals;
  double t_f = 0.0;

  std::size_t agents() const { return trajectories.size(); }
};

/// Samples a lattice plan at every step on [0, t_f].
ContinuousPlan to_continuous(const SyncPlan& plan, const PrimitiveSet& set, const ModelParams& p);

/// Sum over agents of the trapezoidal running cost.
double plan_cost(const ContinuousPlan& plan);

struct FeasibilityTolerances {
  double dynamics = 1e-6;
  double bounds = 1e-6;
  double clearance = 5e-3;  // allowed shortfall below twice the radius
  double obstacle = 5e-3;   // allowed disc penetration into obstacle squares
  double goal = 1e-6;
  int dense_points = 10;  // interpolated points per sample interval
};

struct FeasibilityReport {
  bool ok = true;
  std::string reason;
  double min_distance = 0.0;  // closest approach between agents
  double max_residual = 0.0;
};

/// Dense re-check: dynamics of the stored controls, state and control
/// bounds, disc against obstacle squares and the workspace boundary,
/// pairwise disc separation at samples and interpolated points, identical
/// durations and final states at the goals.
FeasibilityReport check_plan(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                             const FeasibilityTolerances& tol = {});

enum class ImproveMode { Distributed, Centralized };

struct ImproveConfig {
  double horizon = 4.0;  // T, seconds
  double step = 1.0;     // delta, seconds
  ImproveMode mode = ImproveMode::Distributed;
  NadmmConfig nadmm;
  SolverOptions central;
  int knots = 20;
  double t_min_ratio = 0.2;
  double shoot_tol = 1e-8;
  FeasibilityTolerances tolerances;
  int max_iterations = 1000;
  bool record_timing = true;

  void validate() const;
};

/// Index window [first, last] of samples (shared by all agents).
struct Window {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Window nearest to [t_start, t_start + horizon] on the sample grid.
Window snap_window(const ContinuousPlan& plan, double t_start, double horizon);

/// Window segment: boundary states from the plan, duration bounds
/// [t_min_ratio * T_w, T_w] and the plan's samples (re-timed from 0) as warm start.
struct WindowProblem {
  SegmentSpec spec;
  std::vector<Trajectory> warm;
};
WindowProblem window_problem(const ContinuousPlan& plan, const Window& w, const Workspace& ws,
                             const ModelParams& p, int knots = 20, double t_min_ratio = 0.2);

/// Candidate plan: stored prefix up to the window start, the window
/// trajectories (times relative to the window start), then the stored
/// post-window controls shifted earlier by the time saved and re-integrated.
/// Throws SpliceMismatch when window boundaries do not match the plan.
ContinuousPlan splice_candidate(const ContinuousPlan& current, const Window& w,
                                const std::vector<Trajectory>& window_trajs, const ModelParams& p,
                                double boundary_tol = 1e-6);

/// Returns the candidate iff it passes check_plan and does not cost more.
bool accept_candidate(const ContinuousPlan& candidate, const ContinuousPlan& current, const Workspace& ws,
                      const ModelParams& p, const FeasibilityTolerances& tol);

struct ImproveIteration {
  int k = 0;
  ImproveMode mode = ImproveMode::Distributed;
  double window_duration = 0.0;  // solved T_k (0 if the window failed)
  bool accepted = false;
  double cost = 0.0;  // J after the iteration
  double t_f = 0.0;   // after the iteration
  double wall_time = 0.0;
  std::string note;
  std::vector<RoundRecord> rounds;
};

struct ImproveResult {
  ContinuousPlan plan;
  double initial_cost = 0.0;
  double initial_t_f = 0.0;
  double first_window_latency = 0.0;
  std::vector<ImproveIteration> iterations;
};

/// Receding-horizon improvement. Windows that fail to solve, fail the
/// dense check or raise the cost leave the plan unchanged.
ImproveResult improve(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                      const ImproveConfig& cfg);

/// CSV: k, mode, window_duration, accepted, J, t_f, wall_time.
void write_improve_csv(std::ostream& os, const std::vector<ImproveIteration>& iterations);

const char* to_string(ImproveMode m);

}  // namespace simarr

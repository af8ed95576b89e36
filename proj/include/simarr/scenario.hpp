#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "simarr/improve.hpp"
#include "simarr/json_io.hpp"

namespace simarr {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr int kPlanSchemaVersion = 1;

/// Planar pose at rest: meters and radians.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct Scenario {
  std::string name;
  Workspace workspace;
  ModelParams params;
  std::vector<Pose> starts;
  std::vector<Pose> goals;
  std::uint64_t seed = 0;
  std::vector<std::string> tags;

  int agents() const { return static_cast<int>(starts.size()); }
};

/// Throws ValidationError listing every violation: params, workspace,
/// poses off the workspace or on obstacles, overlapping footprints.
void validate_scenario(const Scenario& s);

Json scenario_to_json(const Scenario& s);
/// Throws ParseError (with field) for schema problems, then validates.
Scenario scenario_from_json(const Json& j);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

/// Pose -> lattice state at rest. Throws ValidationError when the pose is
/// not a cell centre with a lattice heading.
LatticeState pose_to_lattice(const Pose& pose, const PrimitiveSet& set, const ModelParams& p);
Pose lattice_to_pose(const LatticeState& s, const PrimitiveSet& set, const ModelParams& p);

MampProblem to_problem(const Scenario& s, const PrimitiveSet& set, CostMode mode = CostMode::RunningCost,
                       Aggregate agg = Aggregate::Sum);

struct MapSpec {
  int width = 12;
  int height = 12;
  double obstacle_density = 0.1;
  int headings = 8;  // rest headings sampled uniformly from this many
};

/// Deterministic in `seed`. Each scenario gets its own random obstacle map
/// and rejection-sampled starts and goals with pairwise clear footprints.
/// Scenarios rejected by `accept` are redrawn. Throws GenerationTimeout when
/// `max_attempts` draws or rejections are exhausted.
std::vector<Scenario> generate_scenarios(int n_agents, int count, const MapSpec& map, std::uint64_t seed,
                                         const ModelParams& p = {}, int max_attempts = 10000,
                                         const std::function<bool(const Scenario&)>& accept = {});

// Plan files.
Json sync_plan_to_json(const SyncPlan& plan, const PrimitiveSet& set);
SyncPlan sync_plan_from_json(const Json& j, const PrimitiveSet& set);
Json continuous_plan_to_json(const ContinuousPlan& plan);
ContinuousPlan continuous_plan_from_json(const Json& j);

/// Plan file: scenario name, lattice plan and executable trajectories.
struct PlanFile {
  std::string scenario;
  SyncPlan lattice;
  ContinuousPlan trajectories;
  std::uint64_t primitive_hash = 0;
};
Json plan_file_to_json(const PlanFile& f, const PrimitiveSet& set);
PlanFile plan_file_from_json(const Json& j, const PrimitiveSet& set);

}  // namespace simarr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simarr/core_model.hpp"

namespace simarr {

/// Discrete search state: grid cell, heading index in [0, H), velocity level.
/// Level 0 is rest.
struct LatticeState {
  Cell cell;
  int heading = 0;
  int vel = 0;

  bool at_rest() const { return vel == 0; }
  auto operator<=>(const LatticeState&) const = default;
};

/// Occupancy of one cell during one primitive, in steps relative to the
/// primitive start. The cell is touched on the closed range [ftt, ftt + swt].
struct SweepInstance {
  int dx = 0;
  int dy = 0;
  Step ftt = 0;
  Step swt = 0;
  bool end_cell = false;

  Step last() const { return ftt + swt; }
  bool operator==(const SweepInstance&) const = default;
};

struct MotionPrimitive {
  int id = -1;
  std::string name;
  // start.cell is always {0, 0}; end.cell is the translation.
  LatticeState start;
  LatticeState end;
  Step duration = 0;  // steps
  double cost = 0.0;
  std::vector<SweepInstance> sweeps;
  // Sampled motion relative to the start cell centre. May be empty for
  // abstract grid worlds, which only carry sweeps.
  Trajectory trajectory;
  bool wait = false;
  // Time-reversed, planning only. source_id names the executable primitive.
  bool backward = false;
  int source_id = -1;

  int dx() const { return end.cell.col; }
  int dy() const { return end.cell.row; }
};

struct GenerationFailure {
  std::string name;
  std::string reason;
};

struct PrimitiveSet {
  std::vector<MotionPrimitive> prims;
  int headings = 8;
  std::vector<double> velocities{0.0, 1.0};
  double step_seconds = 0.1;
  double cell_size = 1.0;  // m, positions trajectories when reversing
  Step tick = 5;  // base tick in steps; every duration is a multiple
  int wait_id = -1;
  bool backward = false;
  std::uint64_t spec_hash = 0;
  std::vector<GenerationFailure> failures;

  /// Primitive ids (excluding the wait) applicable at a heading/velocity.
  const std::vector<int>& applicable(int heading, int vel) const;
  /// Cost of resting for `steps` (a multiple of the wait duration).
  double wait_cost(Step steps) const {
    return wait_id >= 0 ? static_cast<double>(steps / prims[wait_id].duration) * prims[wait_id].cost : 0.0;
  }
  void rebuild_index();
  /// Throws SpecError when an end state has no outgoing primitive or ids
  /// are inconsistent.
  void validate() const;

 private:
  std::vector<std::vector<int>> index_;
};

/// One requested primitive: start heading/velocity, translation, end
/// heading/velocity and duration (a multiple of the tick).
struct PrimitiveRequest {
  std::string name;
  int start_heading = 0;
  int start_vel = 0;
  int dx = 0;
  int dy = 0;
  int end_heading = 0;
  int end_vel = 0;
  double duration = 1.0;
};

struct LatticeSpec {
  int headings = 8;
  std::vector<double> velocities{0.0, 1.0};
  double tick = 0.5;
  bool include_wait = true;
  double wait_duration = 0.5;
  // Requests are generated as given and, if rotate is set, also rotated by
  // every multiple of 90 degrees.
  bool rotate = true;
  std::vector<PrimitiveRequest> requests;

  /// The desk-scale 8-heading lattice used throughout.
  static LatticeSpec desk_default();
  std::uint64_t hash(const ModelParams& p) const;
};

/// Continuous embedding of a lattice state.
AugmentedState lattice_embedding(const LatticeState& s, const PrimitiveSet& set, const ModelParams& p);
double heading_angle(int heading, int headings);

/// Solves one fixed-endpoint OCP per request; failures are recorded in
/// PrimitiveSet::failures. Throws EmptySet if every movement request fails.
/// Requests are solved on `workers` threads (0: all available); the result
/// does not depend on the thread count.
PrimitiveSet generate_primitives(const ModelParams& p, const LatticeSpec& spec, int workers = 0);

/// Sweep schedule of a primitive's trajectory at step resolution.
std::vector<SweepInstance> compute_sweeps(const MotionPrimitive& prim, const ModelParams& p);

/// Backward primitive: sweeps mapped by (dx-δx, dy-δy, tp-ftt-swt, swt, ftt==0),
/// start and end swapped with unchanged heading indices.
MotionPrimitive reverse_primitive(const MotionPrimitive& prim, double cell_size);
PrimitiveSet reverse_set(const PrimitiveSet& set, double cell_size);

/// Rotates a primitive by quarter turns (exact sign swaps).
MotionPrimitive rotate_primitive(const MotionPrimitive& prim, int quarter_turns, int headings);

// Primitive cache (JSON).
void save_primitives(const PrimitiveSet& set, const std::string& path);
PrimitiveSet load_primitives(const std::string& path);
/// Loads the cache if its hash matches, else generates and writes it.
PrimitiveSet load_or_generate(const ModelParams& p, const LatticeSpec& spec, const std::string& path,
                              int workers = 0);

}  // namespace simarr

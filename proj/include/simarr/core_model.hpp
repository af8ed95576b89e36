#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "simarr/errors.hpp"

namespace simarr {

// Time is discretised on a fixed step grid (ModelParams::sample_dt). Search,
// occupancy and conflict handling work in integer steps so that interval
// arithmetic and time reversal are exact.
using Step = std::int64_t;
inline constexpr Step kInfStep = std::numeric_limits<Step>::max() / 4;

inline constexpr double kPi = 3.14159265358979323846;

/// Kinematic bicycle state augmented with steering rate and acceleration.
struct AugmentedState {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, kept in (-pi, pi]
  double alpha = 0.0;  // steering angle, rad
  double omega = 0.0;  // steering rate, rad/s
  double v = 0.0;      // m/s
  double a = 0.0;      // m/s^2

  static constexpr int kDim = 7;
  std::array<double, kDim> to_array() const { return {x, y, theta, alpha, omega, v, a}; }
  static AugmentedState from_array(std::span<const double> s) {
    return {s[0], s[1], s[2], s[3], s[4], s[5], s[6]};
  }
  bool operator==(const AugmentedState&) const = default;
};

struct ControlInput {
  double u_omega = 0.0;  // rad/s^2
  double u_a = 0.0;      // m/s^3

  static constexpr int kDim = 2;
  bool operator==(const ControlInput&) const = default;
};

struct ModelParams {
  double wheelbase = 0.5;
  double alpha_max = 0.6;
  double omega_max = 1.5;
  double v_max = 1.5;
  double a_max = 1.5;
  double u_omega_max = 5.0;
  double u_a_max = 5.0;
  double cell_size = 1.0;
  double vehicle_length = 0.9;
  // Footprint disc radius; non-positive means vehicle_length / 2.
  double footprint_radius = 0.0;
  double sample_dt = 0.1;
  double bound_tolerance = 1e-6;

  double radius() const { return footprint_radius > 0.0 ? footprint_radius : 0.5 * vehicle_length; }
  void validate() const;
};

struct TrajectorySample {
  double t = 0.0;
  AugmentedState x;
  ControlInput u;  // applied on [t, t_next); ignored on the last sample
};

/// Time-stamped samples with zero-order-hold controls.
struct Trajectory {
  std::vector<TrajectorySample> samples;
  // Set on time-reversed (planning-only) trajectories: the reference point
  // moves against the heading, which the dense interpolation must know.
  bool reversed = false;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  double duration() const { return samples.empty() ? 0.0 : samples.back().t - samples.front().t; }
  const AugmentedState& final_state() const { return samples.back().x; }
};

struct Cell {
  int col = 0;
  int row = 0;
  auto operator<=>(const Cell&) const = default;
};

struct Workspace {
  int width = 0;   // cells
  int height = 0;  // cells
  std::vector<Cell> obstacles;

  bool in_bounds(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width && c.row < height; }
  bool blocked(Cell c) const;
  bool free(Cell c) const { return in_bounds(c) && !blocked(c); }
  void validate() const;
  // Call after editing obstacles; blocked() uses a dense lookup.
  void rebuild_index();

 private:
  std::vector<char> occupancy_;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

Point2 cell_center(Cell c, const ModelParams& p);
Cell cell_of(Point2 pt, const ModelParams& p);

/// One contiguous occupancy episode of a grid cell, outward-rounded to steps.
struct CellInterval {
  Cell cell;
  Step first = 0;
  Step last = 0;
  bool operator==(const CellInterval&) const = default;
};

struct Conflict {
  int agent_i = 0;
  int agent_j = 0;
  Step step = 0;
  double time = 0.0;
  Cell cell;
};

double normalize_angle(double theta);

AugmentedState dynamics(const AugmentedState& x, const ControlInput& u, const ModelParams& p);

/// One classical RK4 step of the bicycle ODE.
AugmentedState integrate_dynamics(const AugmentedState& state, const ControlInput& u, double dt,
                                  const ModelParams& p);

/// Integrates a zero-order-hold interval with RK4 substeps of at most 0.05 s.
/// Every component that produces or checks sampled trajectories uses this.
AugmentedState integrate_interval(const AugmentedState& state, const ControlInput& u, double h,
                                  const ModelParams& p);

void check_state_bounds(const AugmentedState& x, const ModelParams& p);
bool within_state_bounds(const AugmentedState& x, const ModelParams& p, double tol);
bool within_control_bounds(const ControlInput& u, const ModelParams& p, double tol);

double running_cost(const AugmentedState& x, const ControlInput& u);

/// Trapezoidal quadrature of running_cost, the interval's control held at
/// both ends so that the cost is additive over concatenation.
double trajectory_cost(const Trajectory& traj);

/// Largest sample-to-sample mismatch between stored states and integration
/// of the stored controls.
double dynamics_residual(const Trajectory& traj, const ModelParams& p);

/// Reference point position at fraction num/den of sample interval k, by
/// cubic Hermite interpolation. Evaluated so that a time-reversed trajectory
/// yields bit-identical points.
Point2 interpolate_position(const Trajectory& traj, std::size_t k, int num, int den, const ModelParams& p);

/// Cells touched by the footprint disc (disc interior meets the closed cell
/// square), with outward-rounded step intervals. `origin` is the world
/// position of the grid's lower-left corner. If `ws` is given, touching a
/// cell outside it or an obstacle throws OutOfWorkspace.
std::vector<CellInterval> swept_cells(const Trajectory& traj, const ModelParams& p,
                                      const Workspace* ws = nullptr, Point2 origin = {});

std::optional<Conflict> first_conflict(std::span<const Trajectory> plan, const ModelParams& p);

/// Earliest conflict among per-agent occupancy lists. Episodes ending at an
/// agent's `final_step` continue to infinity (rest at the final state).
std::optional<Conflict> first_conflict(std::span<const std::vector<CellInterval>> occupancy,
                                       std::span<const Step> final_steps, double step_seconds);

Trajectory reverse_trajectory(const Trajectory& traj, double grid_dt);

Step to_step_floor(double t, double dt);
Step to_step_ceil(double t, double dt);

}  // namespace simarr

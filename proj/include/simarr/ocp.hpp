#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "simarr/core_model.hpp"
#include "simarr/nlp.hpp"

namespace simarr {

struct AgentBoundary {
  AugmentedState start;
  AugmentedState end;
};

/// A trajectory segment to be optimised: fixed boundary states per agent,
/// N trapezoidal collocation intervals and a free duration in [t_min, t_max].
struct SegmentSpec {
  std::vector<AgentBoundary> agents;
  int knots = 20;
  double t_min = 1.0;
  double t_max = 1.0;
  std::vector<std::pair<int, int>> active_pairs;
  // Inter-agent clearance; non-positive means twice the footprint radius.
  double d_min = 0.0;
  double clearance_margin = 0.02;
  double terminal_time_weight = 0.0;
  // Obstacle cells within this many cells of the warm start are constrained.
  int obstacle_band = 2;
  Workspace workspace;
  ModelParams params;

  double clearance() const { return (d_min > 0.0 ? d_min : 2.0 * params.radius()) + clearance_margin; }
  static std::vector<std::pair<int, int>> all_pairs(int agents);
};

/// Knot-sampled trajectory: N+1 states, N zero-order-hold controls.
struct KnotTrajectory {
  std::vector<AugmentedState> x;
  std::vector<ControlInput> u;
  double duration = 0.0;
};

/// Resamples a trajectory onto n+1 uniform knots, unwrapping the heading.
KnotTrajectory resample(const Trajectory& traj, int n);

/// Position of one agent's block inside a decision vector.
struct AgentBlock {
  std::size_t x_offset = 0;
  std::size_t u_offset = 0;
  std::size_t t_index = 0;
};

// Shared per-agent transcription pieces. X is (N+1)*7, U is N*2.
namespace transcription {
double cost(std::span<const double> X, std::span<const double> U, double T, int N, std::span<double> gX,
            std::span<double> gU, double* gT);
void defects(std::span<const double> X, std::span<const double> U, double T, int N, const ModelParams& p,
             std::span<double> out);
void defects_vjp(std::span<const double> X, std::span<const double> U, double T, int N, const ModelParams& p,
                 std::span<const double> w, std::span<double> gX, std::span<double> gU, double* gT);
}  // namespace transcription

/// Centralised transcription of a multi-agent segment.
class SegmentOcp : public NlpProblem {
 public:
  SegmentOcp(SegmentSpec spec, std::span<const Trajectory> warm);

  std::size_t num_vars() const override { return n_; }
  std::size_t num_eq() const override { return n_eq_; }
  std::size_t num_ineq() const override { return n_in_; }
  void bounds(std::span<double> lb, std::span<double> ub) const override;
  double objective(std::span<const double> z, std::span<double> grad) const override;
  void constraints(std::span<const double> z, std::span<double> c_eq, std::span<double> c_in) const override;
  void constraint_vjp(std::span<const double> z, std::span<const double> w_eq, std::span<const double> w_in,
                      std::span<double> grad) const override;

  const SegmentSpec& spec() const { return spec_; }
  const std::vector<double>& initial_guess() const { return z0_; }
  const AgentBlock& block(int agent) const { return blocks_[agent]; }
  KnotTrajectory extract(std::span<const double> z, int agent) const;
  const std::vector<std::vector<Cell>>& obstacle_cells() const { return obstacles_; }

 private:
  SegmentSpec spec_;
  std::vector<AgentBlock> blocks_;
  std::vector<std::vector<Cell>> obstacles_;
  std::vector<double> z0_;
  std::size_t n_ = 0, n_eq_ = 0, n_in_ = 0;
};

using NlpHandle = std::unique_ptr<SegmentOcp>;

/// Builds the collocation NLP; the warm start (resampled onto knots) is
/// available from initial_guess(). Throws SpecError on inconsistent input.
NlpHandle transcribe(const SegmentSpec& spec, std::span<const Trajectory> warm);

/// Consensus-augmented term <z, W r> + beta/2 |W r|^2 with r = local - global.
/// Adds d/d(local) into grad_local and returns the value.
double consensus_penalty(std::span<const double> local, std::span<const double> global, std::span<const double> z,
                         double beta, std::span<const double> weights, std::span<double> grad_local);

/// Agent i's local NLP inside NADMM: own trajectory, controls and terminal
/// time plus proposals for every other agent's trajectory. Objective is the
/// augmented Lagrangian J_i + <z, W(xi~ - xi)> + beta/2 |W(xi~ - xi)|^2.
class ConsensusOcp : public NlpProblem {
 public:
  ConsensusOcp(const SegmentSpec& spec, std::span<const KnotTrajectory> warm, int agent);

  std::size_t num_vars() const override { return n_; }
  std::size_t num_eq() const override { return n_eq_; }
  std::size_t num_ineq() const override { return n_in_; }
  void bounds(std::span<double> lb, std::span<double> ub) const override;
  double objective(std::span<const double> z, std::span<double> grad) const override;
  void constraints(std::span<const double> z, std::span<double> c_eq, std::span<double> c_in) const override;
  void constraint_vjp(std::span<const double> z, std::span<const double> w_eq, std::span<const double> w_in,
                      std::span<double> grad) const override;

  /// Dimension of the global consensus vector xi.
  std::size_t consensus_dim() const { return xi_dim_; }
  void set_consensus(std::span<const double> xi, std::span<const double> z, double beta,
                     std::span<const double> weights);
  /// Local decision vector -> xi~ (same layout as xi).
  void to_consensus(std::span<const double> local, std::span<double> xi_tilde) const;
  /// Value and gradient of the augmented Lagrangian at a local point.
  double augmented_lagrangian(std::span<const double> local, std::span<double> grad) const {
    return objective(local, grad);
  }
  /// Own-cost part J_i only.
  double own_cost(std::span<const double> local) const;
  std::vector<double> initial_local(std::span<const double> xi) const;
  KnotTrajectory extract_own(std::span<const double> local) const;
  int agent() const { return agent_; }
  std::size_t own_t_index() const { return t_index_; }

  static std::vector<double> pack_consensus(std::span<const KnotTrajectory> trajs, double duration);
  static std::vector<double> consensus_weights(int agents, int knots, double w_traj, double w_t);

 private:
  SegmentSpec spec_;
  int agent_;
  int K_;
  int N_;
  std::vector<Cell> obstacles_;
  std::vector<AgentBoundary> boundaries_;
  std::size_t x_off_ = 0, u_off_ = 0, t_index_ = 0;
  std::vector<std::size_t> proposal_off_;  // per agent, unused for self
  std::size_t n_ = 0, n_eq_ = 0, n_in_ = 0, xi_dim_ = 0;
  std::vector<double> xi_, z_, w_;
  std::vector<double> warm_u_;
  double beta_ = 1.0;
};

/// Integrates knot controls from `x0` with step duration/N, refining each
/// interval into samples at most `max_dt` apart.
Trajectory rollout(const AugmentedState& x0, std::span<const ControlInput> u, double duration,
                   const ModelParams& p, double t0 = 0.0, double max_dt = 0.1);

/// Gauss-Newton on the zero-order-hold controls so that integration from x0
/// over `duration` lands on `target`. Returns the final terminal error.
double shoot_to_target(const AugmentedState& x0, std::vector<ControlInput>& u, double duration,
                       const AugmentedState& target, const ModelParams& p, int max_iter = 20,
                       double tol = 1e-10);

double state_distance(const AugmentedState& a, const AugmentedState& b);

}  // namespace simarr

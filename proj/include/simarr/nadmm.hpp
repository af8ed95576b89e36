#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "simarr/ocp.hpp"

namespace simarr {

struct NadmmConfig {
  double beta = 5.0;    // penalty, > 0
  double lambda = 1.0;  // relaxation, in (0, 2)
  int s_max = 5;        // rounds s = 0..s_max
  double w_traj = 1.0;  // consensus weight on trajectory knots
  double w_t = 10.0;    // consensus weight on the terminal time
  SolverOptions local;
  double violation_tol = 1e-3;
  int workers = 0;  // 0: one per agent; 1: serial reference path

  void validate() const;
};

/// One structured diagnostic record per agent and round.
struct RoundRecord {
  int round = 0;
  int agent = 0;
  double objective = 0.0;
  double residual = 0.0;  // |xi~_i - xi|_2
  int iterations = 0;
  double violation = 0.0;
  double seconds = 0.0;  // wall time of the local solve
};

/// xi = (1/K) sum_j estimates[j], summed in index order.
std::vector<double> consensus_update(std::span<const std::vector<double>> estimates);

/// z_half = z + beta (1 - lambda)(xi~ - xi); z_full = z_half + beta (xi~ - xi).
std::pair<std::vector<double>, std::vector<double>> multiplier_updates(std::span<const double> z,
                                                                       std::span<const double> xi_tilde,
                                                                       std::span<const double> xi, double beta,
                                                                       double lambda);

/// A participant owning a local problem over a copy of the consensus vector.
class ConsensusAgent {
 public:
  struct Result {
    std::vector<double> xi_tilde;
    double objective = 0.0;
    int iterations = 0;
    double violation = 0.0;
    bool converged = true;
  };
  virtual ~ConsensusAgent() = default;
  virtual std::size_t dim() const = 0;
  /// Local copy before the first round.
  virtual std::vector<double> initial_estimate() const = 0;
  /// argmin of the agent's augmented Lagrangian for the given xi and z.
  virtual Result solve(std::span<const double> xi, std::span<const double> z, double beta) = 0;
};

struct NadmmState {
  std::vector<double> xi;
  std::vector<std::vector<double>> xi_tilde;
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> xi_hat;
};

struct NadmmRun {
  NadmmState state;
  std::vector<RoundRecord> records;
  std::vector<ConsensusAgent::Result> last;  // final-round local results
};

/// Runs rounds s = 0..rounds-1. Agents are solved with an OpenMP parallel
/// loop; every round consumes all K estimates, so the result does not depend
/// on the worker count.
NadmmRun nadmm_run(std::span<ConsensusAgent* const> agents, const NadmmConfig& cfg, int rounds);

/// Distributed window solve result: own trajectory blocks and the consensus
/// terminal time.
struct WindowSolution {
  std::vector<KnotTrajectory> trajectories;
  double duration = 0.0;
  bool converged = false;
  std::vector<RoundRecord> records;
};

/// Trajectory-window agent wrapping a ConsensusOcp. Warm-starts each solve
/// from its previous local solution.
class OcpAgent final : public ConsensusAgent {
 public:
  OcpAgent(const SegmentSpec& spec, std::span<const KnotTrajectory> warm, int agent, std::vector<double> weights,
           SolverOptions opts);
  std::size_t dim() const override { return ocp_.consensus_dim(); }
  std::vector<double> initial_estimate() const override;
  Result solve(std::span<const double> xi, std::span<const double> z, double beta) override;
  const ConsensusOcp& ocp() const { return ocp_; }
  const std::vector<double>& local() const { return local_; }

 private:
  ConsensusOcp ocp_;
  std::vector<double> weights_;
  SolverOptions opts_;
  std::vector<double> local_;
};

/// Improves a window distributedly. With one agent this is a single local
/// solve (no consensus partner). Throws WindowFailed when a final-round
/// local solve leaves violation above cfg.violation_tol.
WindowSolution nadmm_improve_window(const SegmentSpec& spec, std::span<const Trajectory> warm,
                                    const NadmmConfig& cfg);

/// Centralised counterpart: one SegmentOcp solve. Throws WindowFailed likewise.
WindowSolution central_improve_window(const SegmentSpec& spec, std::span<const Trajectory> warm,
                                      const SolverOptions& opts, double violation_tol = 1e-3);

}  // namespace simarr

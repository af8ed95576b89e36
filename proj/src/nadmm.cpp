#include "simarr/nadmm.hpp"

#include <chrono>
#include <cmath>

#include "simarr/errors.hpp"

namespace simarr {

void NadmmConfig::validate() const {
  if (!(beta > 0.0)) throw SpecError("beta must be positive");
  if (!(lambda > 0.0 && lambda < 2.0)) throw SpecError("lambda must lie in (0, 2)");
  if (s_max < 0) throw SpecError("s_max must be non-negative");
  if (w_traj < 0.0 || w_t < 0.0) throw SpecError("consensus weights must be non-negative");
}

std::vector<double> consensus_update(std::span<const std::vector<double>> estimates) {
  if (estimates.empty()) throw DimensionMismatch("no estimates");
  const std::size_t n = estimates.front().size();
  std::vector<double> xi(n, 0.0);
  for (const auto& e : estimates) {
    if (e.size() != n) throw DimensionMismatch("estimates differ in length");
    for (std::size_t k = 0; k < n; ++k) xi[k] += e[k];
  }
  const double K = static_cast<double>(estimates.size());
  for (auto& v : xi) v /= K;
  return xi;
}

std::pair<std::vector<double>, std::vector<double>> multiplier_updates(std::span<const double> z,
                                                                       std::span<const double> xi_tilde,
                                                                       std::span<const double> xi, double beta,
                                                                       double lambda) {
  if (z.size() != xi.size() || xi_tilde.size() != xi.size()) throw DimensionMismatch("multiplier dimension");
  std::vector<double> half(z.size()), full(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double r = xi_tilde[k] - xi[k];
    half[k] = z[k] + beta * (1.0 - lambda) * r;
    full[k] = half[k] + beta * r;
  }
  return {std::move(half), std::move(full)};
}

namespace {

double residual_norm(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

NadmmRun nadmm_run(std::span<ConsensusAgent* const> agents, const NadmmConfig& cfg, int rounds) {
  cfg.validate();
  const int K = static_cast<int>(agents.size());
  if (K == 0) throw DimensionMismatch("no agents");
  const std::size_t n = agents.front()->dim();
  for (auto* a : agents) {
    if (a->dim() != n) throw DimensionMismatch("agents disagree on the consensus dimension");
  }
  NadmmRun run;
  auto& st = run.state;
  st.z.assign(K, std::vector<double>(n, 0.0));
  st.xi_tilde.resize(K);
  for (int i = 0; i < K; ++i) st.xi_tilde[i] = agents[i]->initial_estimate();
  st.xi_hat = st.xi_tilde;
  run.last.resize(K);
  const int threads = cfg.workers > 0 ? cfg.workers : K;

  for (int s = 0; s < rounds; ++s) {
    st.xi = consensus_update(st.xi_hat);
    std::vector<RoundRecord> recs(K);
    std::vector<std::exception_ptr> errors(K);
#pragma omp parallel for num_threads(threads) schedule(static, 1)
    for (int i = 0; i < K; ++i) {
      try {
        auto [z_half, unused] = multiplier_updates(st.z[i], st.xi_tilde[i], st.xi, cfg.beta, cfg.lambda);
        (void)unused;
        const auto t0 = std::chrono::steady_clock::now();
        ConsensusAgent::Result r = agents[i]->solve(st.xi, z_half, cfg.beta);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // Full update with the new local iterate.
        for (std::size_t k = 0; k < n; ++k) {
          st.z[i][k] = z_half[k] + cfg.beta * (r.xi_tilde[k] - st.xi[k]);
          st.xi_hat[i][k] = r.xi_tilde[k] + st.z[i][k] / cfg.beta;
        }
        recs[i] = {s, i, r.objective, residual_norm(r.xi_tilde, st.xi), r.iterations, r.violation, secs};
        st.xi_tilde[i] = std::move(r.xi_tilde);
        run.last[i] = std::move(r);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    run.records.insert(run.records.end(), recs.begin(), recs.end());
  }
  return run;
}

OcpAgent::OcpAgent(const SegmentSpec& spec, std::span<const KnotTrajectory> warm, int agent,
                   std::vector<double> weights, SolverOptions opts)
    : ocp_(spec, warm, agent), weights_(std::move(weights)), opts_(opts) {
  double T = 0.0;
  for (const auto& w : warm) T = std::max(T, w.duration);
  T = std::clamp(T, spec.t_min, spec.t_max);
  local_ = ocp_.initial_local(ConsensusOcp::pack_consensus(warm, T));
}

std::vector<double> OcpAgent::initial_estimate() const {
  std::vector<double> xi(ocp_.consensus_dim());
  ocp_.to_consensus(local_, xi);
  return xi;
}

ConsensusAgent::Result OcpAgent::solve(std::span<const double> xi, std::span<const double> z, double beta) {
  ocp_.set_consensus(xi, z, beta, weights_);
  const LocalSolution sol = solve_local(ocp_, local_, opts_);
  local_ = sol.z;
  Result r;
  r.xi_tilde.resize(ocp_.consensus_dim());
  ocp_.to_consensus(local_, r.xi_tilde);
  r.objective = sol.objective;
  r.iterations = sol.iterations;
  r.violation = sol.max_violation;
  r.converged = sol.converged;
  return r;
}

WindowSolution nadmm_improve_window(const SegmentSpec& spec, std::span<const Trajectory> warm,
                                    const NadmmConfig& cfg) {
  cfg.validate();
  const int K = static_cast<int>(spec.agents.size());
  if (static_cast<int>(warm.size()) != K) throw DimensionMismatch("one warm trajectory per agent is required");
  std::vector<KnotTrajectory> knots;
  for (const auto& w : warm) knots.push_back(resample(w, spec.knots));

  // A single agent has nobody to agree with: zero weights, one round.
  const bool solo = K == 1;
  const auto weights = solo ? std::vector<double>(ConsensusOcp::consensus_weights(1, spec.knots, 0.0, 0.0))
                            : ConsensusOcp::consensus_weights(K, spec.knots, cfg.w_traj, cfg.w_t);
  std::vector<std::unique_ptr<OcpAgent>> owned;
  std::vector<ConsensusAgent*> agents;
  for (int i = 0; i < K; ++i) {
    owned.push_back(std::make_unique<OcpAgent>(spec, knots, i, weights, cfg.local));
    agents.push_back(owned.back().get());
  }
  const NadmmRun run = nadmm_run(agents, cfg, solo ? 1 : cfg.s_max + 1);

  WindowSolution out;
  out.records = run.records;
  out.converged = true;
  for (int i = 0; i < K; ++i) {
    const auto& r = run.last[i];
    if (r.violation > cfg.violation_tol) {
      throw WindowFailed("agent " + std::to_string(i) + " local solve violation " + std::to_string(r.violation));
    }
    out.converged = out.converged && r.converged;
    out.trajectories.push_back(owned[i]->ocp().extract_own(owned[i]->local()));
  }
  out.duration = solo ? out.trajectories.front().duration : run.state.xi.back();
  out.duration = std::clamp(out.duration, spec.t_min, spec.t_max);
  return out;
}

WindowSolution central_improve_window(const SegmentSpec& spec, std::span<const Trajectory> warm,
                                      const SolverOptions& opts, double violation_tol) {
  const SegmentOcp ocp(spec, warm);
  const LocalSolution sol = solve_local(ocp, ocp.initial_guess(), opts);
  if (sol.max_violation > violation_tol) {
    throw WindowFailed("central solve violation " + std::to_string(sol.max_violation));
  }
  WindowSolution out;
  out.converged = sol.converged;
  for (int i = 0; i < static_cast<int>(spec.agents.size()); ++i) out.trajectories.push_back(ocp.extract(sol.z, i));
  out.duration = sol.z[ocp.block(0).t_index];
  return out;
}

}  // namespace simarr

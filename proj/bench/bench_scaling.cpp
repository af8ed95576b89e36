// Per-window improvement cost for K = 2..5 agents: centralised solve versus
// NADMM, the latter with the serial path (one worker) and with one worker
// per agent. Also times primitive generation serially and in parallel.
//
// Output is CSV on stdout. "critical_path" is the sum over NADMM rounds of
// the slowest agent's local solve, i.e. the window time on K dedicated cores.
// The growth summary takes it from the serial run, whose per-agent timings
// are not inflated by oversubscription when fewer than K cores exist.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <string>

#include "simarr/improve.hpp"

using namespace simarr;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// K agents on parallel lanes two rows apart, driving east by different
// distances so that the shorter ones are padded.
MampProblem lanes(int K, const PrimitiveSet& set) {
  MampProblem prob;
  prob.workspace.width = 16;
  prob.workspace.height = 2 * K + 1;
  prob.workspace.rebuild_index();
  prob.prims = &set;
  for (int i = 0; i < K; ++i) {
    prob.starts.push_back({{1, 1 + 2 * i}, 0, 0});
    prob.goals.push_back({{10 + (i % 3), 1 + 2 * i}, 0, 0});
  }
  return prob;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 1;
  ModelParams p;
  const LatticeSpec spec = LatticeSpec::desk_default();

  auto t0 = Clock::now();
  const PrimitiveSet set = generate_primitives(p, spec, 1);
  const double gen_serial = since(t0);
  const int threads = omp_get_max_threads();
  t0 = Clock::now();
  const PrimitiveSet set_par = generate_primitives(p, spec, threads);
  const double gen_parallel = since(t0);
  bool same = set.prims.size() == set_par.prims.size();
  for (std::size_t i = 0; same && i < set.prims.size(); ++i) same = set.prims[i].cost == set_par.prims[i].cost;
  std::printf("# primitive generation: serial %.3f s, parallel (%d threads) %.3f s, identical=%d\n", gen_serial,
              threads, gen_parallel, same ? 1 : 0);

  std::printf("K,method,workers,window_seconds,critical_path,T_star,J_window\n");
  std::map<std::string, std::vector<double>> series;
  for (int K = 2; K <= 5; ++K) {
    const SyncPlan plan = solve_simultaneous(lanes(K, set));
    const ContinuousPlan cp = to_continuous(plan, set, p);
    const auto [seg, warm] = window_problem(cp, snap_window(cp, 0.0, 4.0), lanes(K, set).workspace, p);

    auto window_cost = [](const WindowSolution& sol) {
      double J = 0.0;
      for (const auto& kt : sol.trajectories) {
        const double h = sol.duration / static_cast<double>(kt.u.size());
        for (std::size_t k = 0; k < kt.u.size(); ++k) {
          J += 0.5 * h * (running_cost(kt.x[k], kt.u[k]) + running_cost(kt.x[k + 1], kt.u[k]));
        }
      }
      return J;
    };

    double best = 1e300;
    WindowSolution sol;
    for (int r = 0; r < repeats; ++r) {
      t0 = Clock::now();
      sol = central_improve_window(seg, warm, SolverOptions{});
      best = std::min(best, since(t0));
    }
    std::printf("%d,centralized,1,%.4f,%.4f,%.4f,%.4f\n", K, best, best, sol.duration, window_cost(sol));
    series["centralized"].push_back(best);

    for (int workers : {1, K}) {
      NadmmConfig cfg;
      cfg.workers = workers;
      best = 1e300;
      double crit = 0.0;
      for (int r = 0; r < repeats; ++r) {
        t0 = Clock::now();
        sol = nadmm_improve_window(seg, warm, cfg);
        best = std::min(best, since(t0));
        std::map<int, double> slowest;
        for (const auto& rec : sol.records) slowest[rec.round] = std::max(slowest[rec.round], rec.seconds);
        crit = 0.0;
        for (const auto& [round, secs] : slowest) crit += secs;
      }
      std::printf("%d,distributed,%d,%.4f,%.4f,%.4f,%.4f\n", K, workers, best, crit, sol.duration,
                  window_cost(sol));
      if (workers == 1) {
        series["distributed_serial"].push_back(best);
        series["distributed_critical"].push_back(crit);
      } else {
        series["distributed_parallel"].push_back(best);
      }
    }
  }
  // Growth from K=2 to K=5 relative to linear (5/2).
  for (const auto& [name, v] : series) {
    std::printf("# %s growth K=2->5: %.2fx (linear would be 2.50x)\n", name.c_str(), v.back() / v.front());
  }
  return 0;
}

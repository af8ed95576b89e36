// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// blocking criterion (1-8) fails. Criterion 9 is a report.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "simarr/grid_world.hpp"
#include "support.hpp"

using namespace simarr;
namespace st = simarr::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict tradeoff_fixture() {
  const GridInstance g = padding_tradeoff_fixture();
  const auto t0 = Clock::now();
  const SyncPlan plan = solve_simultaneous(g.problem(CostMode::RunningCost, Aggregate::Sum));
  const double elapsed = seconds_since(t0);

  int p1 = -1, p2 = -1;
  for (const auto& pr : g.set.prims) {
    if (pr.name == "p1") p1 = pr.id;
    if (pr.name == "p2") p2 = pr.id;
  }
  const AgentPath a{g.starts[0], g.goals[0], 0, 120, 0.0, {{p1, {0, 0}, 0}, {p1, {2, 0}, 60}}};
  const AgentPath b{g.starts[1], g.goals[1], 0, 120, 0.0, {{p2, {0, 2}, 40}, {p2, {1, 2}, 80}}};
  const std::vector<AgentPath> alt{a, b};
  const double alt_backward = 2 * g.set.prims[p1].cost + 2 * g.set.prims[p2].cost;
  const double alt_forward = path_cost(a, g.set, CostMode::RunningCost) + path_cost(b, g.set, CostMode::RunningCost);
  const bool alt_valid = !plan_conflict(alt, g.set).has_value();

  Verdict v;
  v.pass = plan.backward_cost == 27.0 && plan.cost == 33.0 && alt_backward == 28.0 && alt_forward == 32.0 &&
           alt_valid && elapsed < 1.0;
  v.detail = fmt("returned J~=%g J=%g; alternative J~=%g J=%g (conflict-free=%d); %.3f s", plan.backward_cost,
                 plan.cost, alt_backward, alt_forward, alt_valid ? 1 : 0, elapsed);
  return v;
}

// Instances are kept when the exhaustive search finds a joint plan within
// the horizon; every kept instance must match exactly.
Verdict optimality(bool makespan) {
  // Every abstract primitive lasts one tick, so an instance has an optimum
  // of depth <= 6 exactly when the 6-tick optimum equals the long-horizon one.
  const int wanted = 25, depth = 6, horizon = 20;
  const JointObjective obj = makespan ? JointObjective::Makespan : JointObjective::SumCost;
  int compared = 0, matched = 0, skipped = 0;
  std::string first_miss;
  for (std::uint64_t seed = 1; compared < wanted && seed < 500; ++seed) {
    const GridInstance g = random_grid_instance(seed, makespan ? 1.0 : 0.0);
    const auto shallow = brute_force_optimum(g, obj, depth);
    const auto bf = brute_force_optimum(g, obj, horizon);
    if (!shallow || !bf || *shallow != *bf) {
      skipped += bf.has_value();
      continue;
    }
    ++compared;
    try {
      CbsOptions opts;
      opts.time_limit = 30.0;
      const SyncPlan plan = solve_simultaneous(
          g.problem(makespan ? CostMode::Makespan : CostMode::RunningCost, makespan ? Aggregate::Max : Aggregate::Sum),
          opts);
      const double got = makespan ? static_cast<double>(plan.t_f) : plan.cost;
      if (got == *bf) {
        ++matched;
      } else if (first_miss.empty()) {
        first_miss = fmt(" first mismatch seed %llu: %g vs %g", static_cast<unsigned long long>(seed), got, *bf);
      }
    } catch (const Error& e) {
      if (first_miss.empty()) first_miss = fmt(" seed %llu failed: %s", static_cast<unsigned long long>(seed), e.what());
    }
  }
  Verdict v;
  v.pass = compared >= 20 && matched == compared;
  v.detail = fmt("%d/%d instances exact (optimum depth <= %d; %d deeper instances skipped)%s", matched, compared,
                 depth, skipped, first_miss.c_str());
  return v;
}

Verdict completeness() {
  const auto& set = st::desk_set();
  const ModelParams p;
  auto filter = [&](const Scenario& s) { return forward_solvable(s, set, 5000); };
  auto scenarios = generate_scenarios(2, 40, MapSpec{}, 2024, p, 10000, filter);
  for (auto& s : generate_scenarios(3, 10, MapSpec{}, 2025, p, 10000, filter)) {
    s.name = "three_" + s.name;
    scenarios.push_back(std::move(s));
  }
  int ok = 0, baseline_ok = 0;
  double worst = 0.0;
  std::string first_bad;
  for (const auto& s : scenarios) {
    const MampProblem prob = to_problem(s, set);
    bool good = false;
    const auto t0 = Clock::now();
    try {
      CbsOptions opts;
      opts.time_limit = 100.0;
      const SyncPlan plan = solve_simultaneous(prob, opts);
      const double elapsed = seconds_since(t0);
      worst = std::max(worst, elapsed);
      bool simultaneous = true;
      for (const auto& path : plan.paths) simultaneous = simultaneous && path.arrival == plan.t_f;
      const ContinuousPlan cp = to_continuous(plan, set, p);
      for (const auto& tr : cp.trajectories) simultaneous = simultaneous && tr.samples.back().t == cp.t_f;
      const FeasibilityReport rep = check_plan(cp, s.workspace, p);
      good = simultaneous && rep.ok && elapsed <= 100.0;
      if (!good && first_bad.empty()) first_bad = " " + s.name + ": " + (rep.ok ? "not simultaneous" : rep.reason);
    } catch (const Error& e) {
      if (first_bad.empty()) first_bad = " " + s.name + ": " + e.what();
    }
    ok += good ? 1 : 0;
    PipelineConfig base;
    base.baseline = true;
    base.improve = false;
    baseline_ok += run_pipeline(s, set, base).success ? 1 : 0;
  }
  const int n = static_cast<int>(scenarios.size());
  Verdict v;
  v.pass = n >= 50 && ok == n && ok >= baseline_ok;
  v.detail = fmt("proposed %d/%d (slowest %.2f s), baseline forward-then-pad %d/%d%s", ok, n, worst, baseline_ok, n,
                 first_bad.c_str());
  return v;
}

Verdict reversal() {
  const ModelParams p;
  const auto& set = st::desk_set();
  auto canonical = [](std::vector<SweepInstance> s) {
    std::sort(s.begin(), s.end(), [](const SweepInstance& a, const SweepInstance& b) {
      return std::tie(a.ftt, a.dx, a.dy, a.swt, a.end_cell) < std::tie(b.ftt, b.dx, b.dy, b.swt, b.end_cell);
    });
    return s;
  };
  int involution = 0, dense = 0;
  for (const auto& pr : set.prims) {
    const MotionPrimitive rev = reverse_primitive(pr, p.cell_size);
    const MotionPrimitive back = reverse_primitive(rev, p.cell_size);
    if (canonical(back.sweeps) == canonical(pr.sweeps) && back.start == pr.start && back.end == pr.end &&
        back.duration == pr.duration && back.backward == pr.backward) {
      ++involution;
    }
    if (canonical(rev.sweeps) == canonical(compute_sweeps(rev, p))) ++dense;
  }
  const int n = static_cast<int>(set.prims.size());
  Verdict v;
  v.pass = involution == n && dense == n;
  v.detail = fmt("involution %d/%d, reversed sweeps equal dense oracle %d/%d", involution, n, dense, n);
  return v;
}

Verdict nadmm() {
  // (a) hand values
  const auto [half, full] = multiplier_updates(std::vector<double>{0.0}, std::vector<double>{1.0},
                                               std::vector<double>{0.0}, 2.0, 0.5);
  const bool a = half[0] == 1.0 && full[0] == 3.0;

  // (b) least-squares toy, K = 3
  auto agents = st::least_squares_agents(17);
  const Eigen::VectorXd opt = st::least_squares_optimum(agents);
  std::vector<ConsensusAgent*> ptrs;
  for (auto& ag : agents) ptrs.push_back(&ag);
  NadmmConfig cfg;
  cfg.beta = 2.0;
  int rounds_needed = -1;
  double err = 0.0;
  {
    NadmmRun run = nadmm_run(ptrs, cfg, 300);
    for (int i = 0; i < opt.size(); ++i) err = std::max(err, std::abs(run.state.xi[i] - opt(i)));
  }
  for (int r : {25, 50, 100, 150, 200, 250, 300}) {
    auto fresh = st::least_squares_agents(17);
    std::vector<ConsensusAgent*> fp;
    for (auto& ag : fresh) fp.push_back(&ag);
    const NadmmRun run = nadmm_run(fp, cfg, r);
    double e = 0.0;
    for (int i = 0; i < opt.size(); ++i) e = std::max(e, std::abs(run.state.xi[i] - opt(i)));
    if (e < 1e-4) {
      rounds_needed = r;
      break;
    }
  }
  const bool b = err < 1e-4 && rounds_needed > 0;

  // (c) one agent against the centralised solve
  ContinuousPlan one;
  one.trajectories = {st::passing_plan().trajectories[0]};
  one.goals = {st::passing_plan().goals[0]};
  one.t_f = st::passing_plan().t_f;
  const WindowProblem w1 = window_problem(one, snap_window(one, 0.0, 4.0), st::passing_problem().workspace, {});
  const WindowSolution d1 = nadmm_improve_window(w1.spec, w1.warm, NadmmConfig{});
  const WindowSolution c1 = central_improve_window(w1.spec, w1.warm, SolverOptions{});
  double gap = std::abs(d1.duration - c1.duration);
  for (std::size_t k = 0; k < d1.trajectories[0].x.size(); ++k) {
    const auto xa = d1.trajectories[0].x[k].to_array(), xb = c1.trajectories[0].x[k].to_array();
    for (int d = 0; d < AugmentedState::kDim; ++d) gap = std::max(gap, std::abs(xa[d] - xb[d]));
  }
  const bool c = gap <= 1e-6;

  // (d) worker-count invariance, toy and trajectory windows
  bool d = true;
  NadmmState reference;
  for (int workers : {1, 2, 3, 4, 1}) {
    auto fresh = st::least_squares_agents(31);
    std::vector<ConsensusAgent*> fp;
    for (auto& ag : fresh) fp.push_back(&ag);
    NadmmConfig wc;
    wc.workers = workers;
    const NadmmRun run = nadmm_run(fp, wc, 50);
    if (reference.xi.empty()) {
      reference = run.state;
    } else {
      d = d && run.state.xi == reference.xi && run.state.z == reference.z && run.state.xi_hat == reference.xi_hat;
    }
  }
  const WindowProblem w2 = st::passing_window();
  WindowSolution first;
  for (int workers : {1, 2, 1}) {
    NadmmConfig wc;
    wc.workers = workers;
    const WindowSolution sol = nadmm_improve_window(w2.spec, w2.warm, wc);
    if (first.trajectories.empty()) {
      first = sol;
      continue;
    }
    d = d && sol.duration == first.duration;
    for (std::size_t i = 0; i < sol.trajectories.size(); ++i) {
      d = d && sol.trajectories[i].x == first.trajectories[i].x && sol.trajectories[i].u == first.trajectories[i].u;
    }
  }

  Verdict v;
  v.pass = a && b && c && d;
  v.detail = fmt("(a) z_half=%g z_full=%g; (b) |xi-x*|=%.2e after 300 rounds, <1e-4 by round %d; (c) K=1 gap %.2e; "
                 "(d) bit-identical=%d",
                 half[0], full[0], err, rounds_needed, gap, d ? 1 : 0);
  return v;
}

Verdict improvement() {
  const auto& set = st::desk_set();
  const ModelParams p;
  struct Case {
    std::string name;
    Workspace ws;
    ContinuousPlan plan;
    ImproveMode mode;
  };
  std::vector<Case> cases;
  cases.push_back({"passing/distributed", st::passing_problem().workspace, st::passing_plan(),
                   ImproveMode::Distributed});
  cases.push_back({"passing/centralized", st::passing_problem().workspace, st::passing_plan(),
                   ImproveMode::Centralized});
  const auto generated = generate_scenarios(2, 2, MapSpec{}, 99, p, 10000,
                                            [&](const Scenario& s) { return forward_solvable(s, set, 5000); });
  for (const auto& s : generated) {
    const SyncPlan plan = solve_simultaneous(to_problem(s, set));
    cases.push_back({s.name + "/centralized", s.workspace, to_continuous(plan, set, p), ImproveMode::Centralized});
  }

  bool monotone = true, feasible = true, strict = false;
  std::ostringstream detail;
  for (const auto& c : cases) {
    ImproveConfig cfg;
    cfg.mode = c.mode;
    cfg.record_timing = false;
    const ImproveResult res = improve(c.plan, c.ws, p, cfg);
    double J = res.initial_cost, t_f = res.initial_t_f;
    ContinuousPlan replay = c.plan;
    int accepted = 0;
    for (const auto& it : res.iterations) {
      monotone = monotone && it.cost <= J && it.t_f <= t_f;
      J = it.cost;
      t_f = it.t_f;
      accepted += it.accepted ? 1 : 0;
    }
    feasible = feasible && check_plan(res.plan, c.ws, p).ok;
    const double Jf = plan_cost(res.plan);
    if (c.plan.agents() == 2 && Jf < res.initial_cost && res.plan.t_f < res.initial_t_f) strict = true;
    detail << c.name << " J " << fmt("%.2f->%.2f", res.initial_cost, Jf) << " t_f "
           << fmt("%.2f->%.2f", res.initial_t_f, res.plan.t_f) << " (" << accepted << "/" << res.iterations.size()
           << " accepted); ";
  }
  // Every accepted candidate is re-checked inside improve(); the final plan
  // is the last accepted candidate, checked again here.
  Verdict v;
  v.pass = monotone && feasible && strict;
  v.detail = detail.str() + fmt("monotone=%d feasible=%d strict=%d", monotone, feasible, strict);
  return v;
}

double weighted_constraints(const NlpProblem& nlp, std::span<const double> z, std::span<const double> we,
                            std::span<const double> wi) {
  std::vector<double> ce(nlp.num_eq()), ci(nlp.num_ineq());
  nlp.constraints(z, ce, ci);
  double s = 0.0;
  for (std::size_t i = 0; i < ce.size(); ++i) s += we[i] * ce[i];
  for (std::size_t i = 0; i < ci.size(); ++i) s += wi[i] * ci[i];
  return s;
}

Verdict gradients() {
  const WindowProblem wp = st::passing_window(8);
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> g(0.0, 1.0);
  const int points = 20;

  // Local augmented Lagrangian of agent 0.
  std::vector<KnotTrajectory> knots;
  for (const auto& tr : wp.warm) knots.push_back(resample(tr, wp.spec.knots));
  ConsensusOcp ocp(wp.spec, knots, 0);
  const auto xi0 = ConsensusOcp::pack_consensus(knots, wp.spec.t_max);
  const auto weights = ConsensusOcp::consensus_weights(2, wp.spec.knots, 1.0, 10.0);
  double worst_al = 0.0;
  {
    std::vector<double> lb(ocp.num_vars()), ub(ocp.num_vars());
    ocp.bounds(lb, ub);
    for (int k = 0; k < points; ++k) {
      std::vector<double> xi = xi0, z(xi0.size());
      for (auto& x : xi) x += 0.05 * g(rng);
      for (auto& x : z) x = g(rng);
      ocp.set_consensus(xi, z, 5.0, weights);
      const auto at = st::jitter(ocp.initial_local(xi0), lb, ub, 0.05, rng);
      std::vector<double> grad(at.size(), 0.0);
      ocp.augmented_lagrangian(at, grad);
      const auto fd = st::fd_gradient([&](std::span<const double> y) { return ocp.augmented_lagrangian(y, {}); }, at);
      worst_al = std::max(worst_al, st::relative_error(grad, fd));
    }
  }

  // Centralised transcription: objective and constraint Jacobian products.
  const NlpHandle nlp = transcribe(wp.spec, wp.warm);
  double worst_obj = 0.0, worst_con = 0.0;
  {
    const std::size_t n = nlp->num_vars();
    std::vector<double> lb(n), ub(n);
    nlp->bounds(lb, ub);
    for (int k = 0; k < points; ++k) {
      const auto z = st::jitter(nlp->initial_guess(), lb, ub, 0.05, rng);
      std::vector<double> grad(n, 0.0);
      nlp->objective(z, grad);
      const auto fd = st::fd_gradient([&](std::span<const double> y) { return nlp->objective(y, {}); }, z);
      worst_obj = std::max(worst_obj, st::relative_error(grad, fd));
      std::vector<double> we(nlp->num_eq()), wi(nlp->num_ineq());
      for (auto& w : we) w = g(rng);
      for (auto& w : wi) w = g(rng);
      std::vector<double> vjp(n, 0.0);
      nlp->constraint_vjp(z, we, wi, vjp);
      const auto fdc =
          st::fd_gradient([&](std::span<const double> y) { return weighted_constraints(*nlp, y, we, wi); }, z);
      worst_con = std::max(worst_con, st::relative_error(vjp, fdc));
    }
  }
  Verdict v;
  v.pass = worst_al <= 1e-5 && worst_obj <= 1e-5 && worst_con <= 1e-5;
  v.detail = fmt("%d points each; max relative error: augmented Lagrangian %.2e, objective %.2e, constraints %.2e",
                 points, worst_al, worst_obj, worst_con);
  return v;
}

// Parallel lanes, K agents driving east by different distances.
MampProblem lanes(int K) {
  MampProblem prob;
  prob.workspace.width = 16;
  prob.workspace.height = 2 * K + 1;
  prob.workspace.rebuild_index();
  prob.prims = &st::desk_set();
  for (int i = 0; i < K; ++i) {
    prob.starts.push_back({{1, 1 + 2 * i}, 0, 0});
    prob.goals.push_back({{10 + (i % 3), 1 + 2 * i}, 0, 0});
  }
  return prob;
}

Verdict scaling() {
  const ModelParams p;
  // Medians over repeats; single runs on a shared machine are noisy.
  const int repeats = 3;
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::map<int, double> central, critical, serial;
  for (int K = 2; K <= 5; ++K) {
    const MampProblem prob = lanes(K);
    const ContinuousPlan cp = to_continuous(solve_simultaneous(prob), st::desk_set(), p);
    const WindowProblem wp = window_problem(cp, snap_window(cp, 0.0, 4.0), prob.workspace, p);
    std::vector<double> c, d, s;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = Clock::now();
      central_improve_window(wp.spec, wp.warm, SolverOptions{});
      c.push_back(seconds_since(t0));
      NadmmConfig cfg;
      cfg.workers = 1;
      t0 = Clock::now();
      const WindowSolution sol = nadmm_improve_window(wp.spec, wp.warm, cfg);
      s.push_back(seconds_since(t0));
      // Agents of one round run concurrently, so a round lasts as long as
      // its slowest agent.
      std::map<int, double> slowest;
      for (const auto& rec : sol.records) slowest[rec.round] = std::max(slowest[rec.round], rec.seconds);
      double path = 0.0;
      for (const auto& [round, t] : slowest) path += t;
      d.push_back(path);
    }
    central[K] = median(c);
    critical[K] = median(d);
    serial[K] = median(s);
  }
  std::ostringstream os;
  for (int K = 2; K <= 5; ++K) os << fmt("K=%d central %.3fs distributed %.3fs (serial %.3fs); ", K, central[K], critical[K], serial[K]);
  const double gd = critical[5] / critical[2], gc = central[5] / central[2];
  os << fmt("growth K=2->5: distributed %.2fx, centralized %.2fx, linear 2.50x; ", gd, gc);
  os << "target trend (distributed linear or better, centralized superlinear) "
     << (gd <= 2.5 && gc > 2.5 ? "observed" : "not observed");
  return {true, os.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    Verdict (*run)();
    bool blocking;
  };
  const Criterion criteria[] = {
      {1, "padding tradeoff fixture exactness", tradeoff_fixture, true},
      {2, "sum-cost optimality vs exhaustive search", [] { return optimality(false); }, true},
      {3, "makespan optimality vs exhaustive search", [] { return optimality(true); }, true},
      {4, "completeness on forward-solvable instances", completeness, true},
      {5, "primitive reversal", reversal, true},
      {6, "NADMM correctness", nadmm, true},
      {7, "improvement guarantees", improvement, true},
      {8, "gradient checks", gradients, true},
      {9, "scaling trend (report only)", scaling, false},
  };
  bool all = true;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    if (c.blocking && !v.pass) all = false;
  }
  return all ? 0 : 1;
}

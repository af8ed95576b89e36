#include "simarr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "simarr/errors.hpp"

namespace simarr {

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Ok: return "ok";
    case RunStatus::Infeasible: return "infeasible";
    case RunStatus::Timeout: return "timeout";
    case RunStatus::InputError: return "input_error";
    case RunStatus::Collision: return "collision";
    case RunStatus::Error: return "error";
  }
  return "error";
}

int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::Ok: return 0;
    case RunStatus::Infeasible: return 2;
    case RunStatus::Timeout: return 3;
    case RunStatus::InputError: return 4;
    default: return 1;
  }
}

RunReport run_pipeline(const Scenario& s, const PrimitiveSet& set, const PipelineConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  auto seconds = [&](Clock::time_point a, Clock::time_point b) {
    return cfg.record_timing ? std::chrono::duration<double>(b - a).count() : 0.0;
  };
  RunReport rep;
  rep.scenario = s.name;
  rep.agents = s.agents();
  const auto t0 = Clock::now();
  try {
    const MampProblem prob = to_problem(s, set, cfg.mode, cfg.aggregate);
    prob.validate();
    if (cfg.baseline) {
      BaselinePlan b = solve_baseline(prob, cfg.cbs);
      rep.lattice = std::move(b.plan);
    } else {
      rep.lattice = solve_simultaneous(prob, cfg.cbs);
    }
    rep.cbs_expanded = rep.lattice.cbs_expanded;
    rep.lattice_conflicts = conflicting_pairs(rep.lattice.paths, set);
    const auto t1 = Clock::now();
    rep.plan_seconds = seconds(t0, t1);

    rep.initial = to_continuous(rep.lattice, set, s.params);
    rep.initial_cost = plan_cost(rep.initial);
    rep.initial_t_f = rep.initial.t_f;
    const FeasibilityReport fr = check_plan(rep.initial, s.workspace, s.params, cfg.improve_cfg.tolerances);
    rep.dense_feasible = fr.ok;
    rep.final = rep.initial;
    if (!fr.ok) {
      rep.status = RunStatus::Collision;
      rep.message = "plan fails the dense check: " + fr.reason;
    } else {
      if (cfg.improve) {
        ImproveConfig ic = cfg.improve_cfg;
        ic.record_timing = cfg.record_timing;
        ImproveResult ir = improve(rep.initial, s.workspace, s.params, ic);
        rep.final = std::move(ir.plan);
        rep.iterations = std::move(ir.iterations);
        rep.first_window_latency = ir.first_window_latency;
      }
      rep.improve_seconds = seconds(t1, Clock::now());
      rep.status = RunStatus::Ok;
      rep.success = true;
    }
    rep.final_cost = plan_cost(rep.final);
    rep.final_t_f = rep.final.t_f;
  } catch (const ValidationError& e) {
    rep.status = RunStatus::InputError;
    rep.message = e.what();
  } catch (const Timeout& e) {
    rep.status = RunStatus::Timeout;
    rep.message = e.what();
  } catch (const Infeasible& e) {
    rep.status = RunStatus::Infeasible;
    rep.message = e.what();
  } catch (const NoPath& e) {
    rep.status = RunStatus::Infeasible;
    rep.message = e.what();
  } catch (const Error& e) {
    rep.status = RunStatus::Error;
    rep.message = e.what();
  }
  rep.total_seconds = seconds(t0, Clock::now());
  return rep;
}

bool forward_solvable(const Scenario& s, const PrimitiveSet& set, std::size_t max_nodes) {
  try {
    CbsOptions opts;
    opts.time_limit = std::numeric_limits<double>::infinity();
    opts.max_nodes = max_nodes;
    const MampProblem prob = to_problem(s, set);
    prob.validate();
    cbs_solve(prob, opts);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<RunReport> run_benchmark(const std::vector<Scenario>& scenarios, const PrimitiveSet& set,
                                     const PipelineConfig& cfg, int workers) {
  std::vector<RunReport> out(scenarios.size());
  const int n = static_cast<int>(scenarios.size());
#pragma omp parallel for num_threads(std::max(1, workers)) schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) out[i] = run_pipeline(scenarios[i], set, cfg);
  return out;
}

void write_benchmark_csv(std::ostream& os, const std::vector<RunReport>& reports, const PipelineConfig& cfg) {
  os << "scenario,agents,method,status,success,initial_cost,final_cost,initial_t_f,final_t_f,plan_seconds,"
        "improve_seconds,first_window_latency\n";
  const auto prec = os.precision(12);
  for (const auto& r : reports) {
    os << r.scenario << ',' << r.agents << ',' << (cfg.baseline ? "baseline" : "proposed") << ','
       << to_string(r.status) << ',' << (r.success ? 1 : 0) << ',' << r.initial_cost << ',' << r.final_cost << ','
       << r.initial_t_f << ',' << r.final_t_f << ',' << r.plan_seconds << ',' << r.improve_seconds << ','
       << r.first_window_latency << '\n';
  }
  os.precision(prec);
}

BenchmarkSummary summarize(const std::vector<RunReport>& reports) {
  BenchmarkSummary s;
  s.runs = static_cast<int>(reports.size());
  std::vector<double> times;
  for (const auto& r : reports) {
    if (r.success) ++s.successes;
    times.push_back(r.total_seconds);
  }
  if (s.runs == 0) return s;
  s.success_rate = static_cast<double>(s.successes) / s.runs;
  std::sort(times.begin(), times.end());
  auto quantile = [&](double q) {
    const std::size_t idx = static_cast<std::size_t>(std::ceil(q * times.size())) - 1;
    return times[std::min(idx, times.size() - 1)];
  };
  s.p50_seconds = quantile(0.5);
  s.p90_seconds = quantile(0.9);
  s.max_seconds = times.back();
  return s;
}

Json report_to_json(const RunReport& r) {
  Json iters = Json::array();
  for (const auto& it : r.iterations) {
    iters.push_back({{"k", it.k},
                     {"mode", to_string(it.mode)},
                     {"window_duration", it.window_duration},
                     {"accepted", it.accepted},
                     {"J", it.cost},
                     {"t_f", it.t_f},
                     {"wall_time", it.wall_time},
                     {"note", it.note},
                     {"nadmm_rounds", it.rounds.size()}});
  }
  return {{"scenario", r.scenario},
          {"agents", r.agents},
          {"success", r.success},
          {"status", to_string(r.status)},
          {"message", r.message},
          {"plan_seconds", r.plan_seconds},
          {"improve_seconds", r.improve_seconds},
          {"total_seconds", r.total_seconds},
          {"first_window_latency", r.first_window_latency},
          {"initial_cost", r.initial_cost},
          {"final_cost", r.final_cost},
          {"initial_t_f", r.initial_t_f},
          {"final_t_f", r.final_t_f},
          {"lattice_conflicts", r.lattice_conflicts},
          {"dense_feasible", r.dense_feasible},
          {"cbs_expanded", r.cbs_expanded},
          {"iterations", iters}};
}

}  // namespace simarr

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "simarr/scenario.hpp"

namespace simarr {

struct PipelineConfig {
  bool baseline = false;  // forward CBS then pad, instead of the backward search
  bool improve = true;
  ImproveConfig improve_cfg;
  CbsOptions cbs;
  CostMode mode = CostMode::RunningCost;
  Aggregate aggregate = Aggregate::Sum;
  bool record_timing = true;  // false: wall times reported as 0
};

enum class RunStatus { Ok, Infeasible, Timeout, InputError, Collision, Error };
const char* to_string(RunStatus s);

struct RunReport {
  std::string scenario;
  int agents = 0;
  bool success = false;
  RunStatus status = RunStatus::Error;
  std::string message;
  double plan_seconds = 0.0;
  double improve_seconds = 0.0;
  double total_seconds = 0.0;
  double initial_cost = 0.0;  // J of the executable plan before improvement
  double final_cost = 0.0;
  double initial_t_f = 0.0;
  double final_t_f = 0.0;
  int lattice_conflicts = 0;  // conflicting agent pairs on the lattice plan
  bool dense_feasible = false;
  double first_window_latency = 0.0;
  std::size_t cbs_expanded = 0;
  std::vector<ImproveIteration> iterations;
  SyncPlan lattice;
  ContinuousPlan initial;
  ContinuousPlan final;
};

/// solve_simultaneous (or the baseline) then optional improvement. Stage
/// errors are recorded in the report; never throws for planning failures.
RunReport run_pipeline(const Scenario& s, const PrimitiveSet& set, const PipelineConfig& cfg);

/// True when forward CBS finds a conflict-free lattice plan within a budget
/// of conflict-tree nodes. Used to draw benchmark instances that the
/// comparator can solve; a node budget keeps the draw machine-independent.
bool forward_solvable(const Scenario& s, const PrimitiveSet& set, std::size_t max_nodes = 20'000);

/// Runs scenarios (in parallel, `workers` threads); results ordered as input.
std::vector<RunReport> run_benchmark(const std::vector<Scenario>& scenarios, const PrimitiveSet& set,
                                     const PipelineConfig& cfg, int workers = 1);

/// One row per report plus a header.
void write_benchmark_csv(std::ostream& os, const std::vector<RunReport>& reports, const PipelineConfig& cfg);

struct BenchmarkSummary {
  int runs = 0;
  int successes = 0;
  double success_rate = 0.0;
  double p50_seconds = 0.0;
  double p90_seconds = 0.0;
  double max_seconds = 0.0;
};
BenchmarkSummary summarize(const std::vector<RunReport>& reports);

Json report_to_json(const RunReport& r);

/// Process exit code for a run status: 0 success, 2 infeasible, 3 timeout,
/// 4 input error, 1 otherwise.
int exit_code(RunStatus s);

}  // namespace simarr

// Command-line front end: primitive generation, scenario generation,
// planning, improvement, benchmarking and plotting.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <string>

#include "simarr/errors.hpp"
#include "simarr/pipeline.hpp"
#include "simarr/plot.hpp"

namespace fs = std::filesystem;
using namespace simarr;

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level g_level = Level::Info;

void log(Level l, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (l <= g_level) std::cerr << "[simarr " << names[static_cast<int>(l)] << "] " << msg << '\n';
}

void init_from_env() {
  if (const char* v = std::getenv("SIMARR_LOG_LEVEL")) {
    const std::string s = v;
    if (s == "error") g_level = Level::Error;
    else if (s == "warn") g_level = Level::Warn;
    else if (s == "info") g_level = Level::Info;
    else if (s == "debug") g_level = Level::Debug;
  }
}

int env_workers() {
  if (const char* v = std::getenv("SIMARR_WORKERS")) {
    try {
      return std::max(1, std::stoi(v));
    } catch (...) {
    }
  }
  return 1;
}

struct Common {
  std::string primitives = "primitives.json";
  double time_limit = 100.0;
  bool improve = false;
  bool baseline = false;
  std::string mode = "distributed";
  double horizon = 4.0;
  double step = 1.0;
  int knots = 20;
  double beta = 5.0;
  double lambda = 1.0;
  int s_max = 5;
  bool no_timing = false;
};

void add_common(CLI::App* app, Common& c, bool planning) {
  app->add_option("--primitives", c.primitives, "Primitive cache (generated if missing or stale)");
  app->add_option("--mode", c.mode, "Improvement mode")->check(CLI::IsMember({"distributed", "centralized"}));
  app->add_option("--horizon", c.horizon, "Improvement horizon T [s]");
  app->add_option("--step", c.step, "Improvement step delta [s]");
  app->add_option("--knots", c.knots, "Collocation intervals per window");
  app->add_option("--beta", c.beta, "NADMM penalty");
  app->add_option("--lambda", c.lambda, "NADMM relaxation");
  app->add_option("--s-max", c.s_max, "NADMM rounds minus one");
  app->add_flag("--no-timing", c.no_timing, "Report wall times as 0 (byte-identical outputs)");
  if (planning) {
    app->add_option("--time-limit", c.time_limit, "CBS time limit [s]");
    app->add_flag("--improve", c.improve, "Run receding-horizon improvement after planning");
    app->add_flag("--baseline", c.baseline, "Forward CBS then pad (comparator)");
  }
}

PipelineConfig make_config(const Common& c) {
  PipelineConfig cfg;
  cfg.baseline = c.baseline;
  cfg.improve = c.improve;
  cfg.cbs.time_limit = c.time_limit;
  cfg.cbs.workers = env_workers();
  cfg.record_timing = !c.no_timing;
  auto& ic = cfg.improve_cfg;
  ic.mode = c.mode == "centralized" ? ImproveMode::Centralized : ImproveMode::Distributed;
  ic.horizon = c.horizon;
  ic.step = c.step;
  ic.knots = c.knots;
  ic.nadmm.beta = c.beta;
  ic.nadmm.lambda = c.lambda;
  ic.nadmm.s_max = c.s_max;
  ic.nadmm.workers = env_workers();
  ic.record_timing = cfg.record_timing;
  return cfg;
}

PrimitiveSet primitives_for(const ModelParams& p, const std::string& path) {
  log(Level::Info, "loading primitives from " + path);
  PrimitiveSet set = load_or_generate(p, LatticeSpec::desk_default(), path, env_workers());
  log(Level::Info, std::to_string(set.prims.size()) + " primitives");
  return set;
}

void log_rounds(const std::vector<ImproveIteration>& iterations) {
  for (const auto& it : iterations) {
    for (const auto& r : it.rounds) {
      Json j = {{"window", it.k},     {"round", r.round},         {"agent", r.agent},
                {"objective", r.objective}, {"residual", r.residual}, {"iterations", r.iterations}};
      log(Level::Debug, j.dump());
    }
  }
}

// Maps library exceptions onto the documented exit codes.
int guarded(const std::function<int()>& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    log(Level::Error, std::string(e.what()) + (e.field().empty() ? "" : " [field " + e.field() + "]") +
                          (e.line() > 0 ? " [line " + std::to_string(e.line()) + "]" : ""));
    return 4;
  } catch (const ValidationError& e) {
    log(Level::Error, e.what());
    return 4;
  } catch (const IoError& e) {
    log(Level::Error, e.what());
    return 4;
  } catch (const Timeout& e) {
    log(Level::Error, e.what());
    return 3;
  } catch (const Infeasible& e) {
    log(Level::Error, e.what());
    return 2;
  } catch (const Error& e) {
    log(Level::Error, e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_from_env();
  CLI::App app{"Simultaneous-arrival multi-agent motion planning"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-primitives
  auto* gp = app.add_subcommand("gen-primitives", "Generate the motion-primitive lattice");
  std::string gp_out = "primitives.json";
  gp->add_option("--out", gp_out, "Output cache file");
  gp->callback([&] {
    rc = guarded([&] {
      ModelParams p;
      PrimitiveSet set = generate_primitives(p, LatticeSpec::desk_default(), env_workers());
      save_primitives(set, gp_out);
      for (const auto& f : set.failures) log(Level::Warn, "primitive " + f.name + " failed: " + f.reason);
      log(Level::Info, "wrote " + std::to_string(set.prims.size()) + " primitives to " + gp_out);
      return 0;
    });
  });

  // gen-scenarios
  auto* gs = app.add_subcommand("gen-scenarios", "Generate random scenarios");
  int gs_agents = 2, gs_count = 10;
  std::uint64_t gs_seed = 1;
  MapSpec map;
  std::string gs_dir = "scenarios", gs_prims = "primitives.json";
  bool gs_any = false;
  gs->add_option("--agents", gs_agents, "Agents per scenario");
  gs->add_option("--count", gs_count, "Number of scenarios");
  gs->add_option("--seed", gs_seed, "Random seed");
  gs->add_option("--width", map.width, "Map width [cells]");
  gs->add_option("--height", map.height, "Map height [cells]");
  gs->add_option("--density", map.obstacle_density, "Obstacle density");
  gs->add_option("--out-dir", gs_dir, "Output directory");
  gs->add_option("--primitives", gs_prims, "Primitive cache used by the solvability filter");
  gs->add_flag("--any", gs_any, "Keep scenarios that forward CBS cannot solve");
  gs->callback([&] {
    rc = guarded([&] {
      const ModelParams p;
      std::function<bool(const Scenario&)> accept;
      PrimitiveSet set;
      if (!gs_any) {
        set = primitives_for(p, gs_prims);
        accept = [&](const Scenario& s) { return forward_solvable(s, set); };
      }
      const auto list = generate_scenarios(gs_agents, gs_count, map, gs_seed, p, 10000, accept);
      fs::create_directories(gs_dir);
      for (const auto& s : list) save_scenario(s, (fs::path(gs_dir) / (s.name + ".json")).string());
      log(Level::Info, "wrote " + std::to_string(list.size()) + " scenarios to " + gs_dir);
      return 0;
    });
  });

  // plan
  auto* pl = app.add_subcommand("plan", "Plan a scenario (optionally improve)");
  Common pc;
  std::string pl_scenario, pl_out = "plan.json", pl_report, pl_svg;
  pl->add_option("--scenario", pl_scenario, "Scenario file")->required();
  pl->add_option("--out", pl_out, "Plan file");
  pl->add_option("--report", pl_report, "Run report (JSON)");
  pl->add_option("--svg", pl_svg, "SVG drawing of the final plan");
  add_common(pl, pc, true);
  pl->callback([&] {
    rc = guarded([&] {
      const Scenario s = load_scenario(pl_scenario);
      const PrimitiveSet set = primitives_for(s.params, pc.primitives);
      const RunReport r = run_pipeline(s, set, make_config(pc));
      log_rounds(r.iterations);
      if (!pl_report.empty()) write_json_file(report_to_json(r), pl_report);
      if (!r.success) {
        log(Level::Error, std::string(to_string(r.status)) + ": " + r.message);
        return exit_code(r.status);
      }
      write_json_file(plan_file_to_json({s.name, r.lattice, r.final, set.spec_hash}, set), pl_out);
      if (!pl_svg.empty()) emit_plot(r.final, s.workspace, s.params, pl_svg);
      log(Level::Info, "J " + std::to_string(r.initial_cost) + " -> " + std::to_string(r.final_cost) + ", t_f " +
                           std::to_string(r.initial_t_f) + " -> " + std::to_string(r.final_t_f));
      return 0;
    });
  });

  // improve
  auto* im = app.add_subcommand("improve", "Improve a stored plan");
  Common ic;
  std::string im_scenario, im_plan, im_out = "improved.json", im_csv;
  im->add_option("--scenario", im_scenario, "Scenario file")->required();
  im->add_option("--plan", im_plan, "Plan file")->required();
  im->add_option("--out", im_out, "Improved plan file");
  im->add_option("--csv", im_csv, "Per-iteration CSV");
  add_common(im, ic, false);
  im->callback([&] {
    rc = guarded([&] {
      const Scenario s = load_scenario(im_scenario);
      const PrimitiveSet set = primitives_for(s.params, ic.primitives);
      PlanFile f = plan_file_from_json(read_json_file(im_plan), set);
      const ImproveConfig cfg = make_config(ic).improve_cfg;
      const FeasibilityReport fr = check_plan(f.trajectories, s.workspace, s.params, cfg.tolerances);
      if (!fr.ok) throw ValidationError("stored plan fails the dense check: " + fr.reason);
      ImproveResult r = improve(f.trajectories, s.workspace, s.params, cfg);
      log_rounds(r.iterations);
      if (!im_csv.empty()) {
        std::ofstream out(im_csv);
        if (!out) throw IoError("cannot write " + im_csv);
        write_improve_csv(out, r.iterations);
      }
      f.trajectories = std::move(r.plan);
      write_json_file(plan_file_to_json(f, set), im_out);
      log(Level::Info, "J " + std::to_string(r.initial_cost) + " -> " + std::to_string(plan_cost(f.trajectories)));
      return 0;
    });
  });

  // bench
  auto* bn = app.add_subcommand("bench", "Run every scenario in a directory");
  Common bc;
  std::string bn_dir, bn_csv = "bench.csv";
  bn->add_option("--scenarios", bn_dir, "Scenario directory")->required();
  bn->add_option("--csv", bn_csv, "Output CSV");
  add_common(bn, bc, true);
  bn->callback([&] {
    rc = guarded([&] {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(bn_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<Scenario> list;
      for (const auto& f : files) list.push_back(load_scenario(f.string()));
      const PipelineConfig cfg = make_config(bc);
      std::vector<RunReport> reports;
      if (!list.empty()) {
        const PrimitiveSet set = primitives_for(list.front().params, bc.primitives);
        reports = run_benchmark(list, set, cfg, env_workers());
      }
      std::ofstream out(bn_csv);
      if (!out) throw IoError("cannot write " + bn_csv);
      write_benchmark_csv(out, reports, cfg);
      const BenchmarkSummary sm = summarize(reports);
      log(Level::Info, "success " + std::to_string(sm.successes) + "/" + std::to_string(sm.runs) + ", p50 " +
                           std::to_string(sm.p50_seconds) + " s, p90 " + std::to_string(sm.p90_seconds) + " s");
      return 0;
    });
  });

  // plot
  auto* pt = app.add_subcommand("plot", "Draw a plan as SVG");
  std::string pt_scenario, pt_plan, pt_out = "plan.svg", pt_prims = "primitives.json";
  pt->add_option("--scenario", pt_scenario, "Scenario file")->required();
  pt->add_option("--plan", pt_plan, "Plan file (omit for the empty map)");
  pt->add_option("--primitives", pt_prims, "Primitive cache");
  pt->add_option("--out", pt_out, "SVG file");
  pt->callback([&] {
    rc = guarded([&] {
      const Scenario s = load_scenario(pt_scenario);
      ContinuousPlan plan;
      if (!pt_plan.empty()) {
        const PrimitiveSet set = primitives_for(s.params, pt_prims);
        plan = plan_file_from_json(read_json_file(pt_plan), set).trajectories;
      }
      emit_plot(plan, s.workspace, s.params, pt_out);
      return 0;
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 4;
  }
  return rc;
}

#include "simarr/scenario.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "simarr/errors.hpp"

namespace simarr {

namespace {

Json units() { return {{"length", "m"}, {"angle", "rad"}, {"time", "s"}, {"grid", "cells"}}; }

Json pose_to_json(const Pose& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

// Runs `f` and converts library JSON exceptions into ParseError naming `field`.
template <class F>
auto with_field(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid field '" + field + "': " + e.what(), 0, field);
  }
}

Pose pose_from_json(const Json& j, const std::string& field) {
  for (const char* key : {"x", "y"}) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(field + " lacks " + key, 0, field + "." + key);
  }
  return with_field(field, [&] {
    Pose p;
    p.x = j.at("x").get<double>();
    p.y = j.at("y").get<double>();
    p.theta = j.value("theta", 0.0);
    return p;
  });
}

void check_version(const Json& j, int supported, const char* what) {
  if (!j.contains("schema_version")) throw ParseError(std::string(what) + " lacks schema_version", 0, "schema_version");
  const Json& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != supported) {
    throw ParseError(std::string("unsupported ") + what + " schema_version " + v.dump() + " (supported: " +
                         std::to_string(supported) + ")",
                     0, "schema_version");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

Json lattice_to_json(const LatticeState& s) { return {s.cell.col, s.cell.row, s.heading, s.vel}; }
LatticeState lattice_from_json(const Json& j) {
  return {{j.at(0).get<int>(), j.at(1).get<int>()}, j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

void validate_scenario(const Scenario& s) {
  std::vector<std::string> bad;
  try {
    s.params.validate();
  } catch (const Error& e) {
    bad.push_back(e.what());
  }
  try {
    s.workspace.validate();
  } catch (const Error& e) {
    bad.push_back(e.what());
  }
  if (s.starts.size() != s.goals.size()) bad.push_back("start and goal counts differ");
  if (s.starts.empty()) bad.push_back("no agents");
  const double r = s.params.radius();
  const double W = s.workspace.width * s.params.cell_size;
  const double H = s.workspace.height * s.params.cell_size;
  auto check_set = [&](const std::vector<Pose>& poses, const char* what) {
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Pose& q = poses[i];
      const std::string who = std::string(what) + " " + std::to_string(i);
      if (q.x - r < 0.0 || q.y - r < 0.0 || q.x + r > W || q.y + r > H) {
        bad.push_back(who + " footprint leaves the workspace");
        continue;
      }
      const Cell c = cell_of({q.x, q.y}, s.params);
      if (s.workspace.in_bounds(c) && s.workspace.blocked(c)) bad.push_back(who + " lies on an obstacle");
      for (std::size_t j = 0; j < i; ++j) {
        if (std::hypot(q.x - poses[j].x, q.y - poses[j].y) < 2.0 * r) {
          bad.push_back(who + " footprint overlaps " + what + " " + std::to_string(j));
        }
      }
    }
  };
  check_set(s.starts, "start");
  check_set(s.goals, "goal");
  if (!bad.empty()) {
    std::string msg = "invalid scenario";
    if (!s.name.empty()) msg += " '" + s.name + "'";
    msg += ":";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ValidationError(msg);
  }
}

Json scenario_to_json(const Scenario& s) {
  Json agents = Json::array();
  for (std::size_t i = 0; i < s.starts.size(); ++i) {
    agents.push_back({{"start", pose_to_json(s.starts[i])}, {"goal", pose_to_json(s.goals[i])}});
  }
  return {{"schema_version", kScenarioSchemaVersion},
          {"units", units()},
          {"name", s.name},
          {"seed", s.seed},
          {"tags", s.tags},
          {"workspace", workspace_to_json(s.workspace)},
          {"params", params_to_json(s.params)},
          {"agents", agents}};
}

Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");
  check_version(j, kScenarioSchemaVersion, "scenario");
  Scenario s;
  s.name = with_field("name", [&] { return j.value("name", std::string()); });
  s.seed = with_field("seed", [&] { return j.value("seed", std::uint64_t{0}); });
  s.tags = with_field("tags", [&] { return j.value("tags", std::vector<std::string>{}); });
  if (!j.contains("workspace")) throw ParseError("scenario lacks a workspace", 0, "workspace");
  s.workspace = with_field("workspace", [&] { return workspace_from_json(j.at("workspace")); });
  if (j.contains("params")) s.params = with_field("params", [&] { return params_from_json(j.at("params")); });
  if (!j.contains("agents") || !j.at("agents").is_array()) throw ParseError("scenario lacks agents", 0, "agents");
  const Json& agents = j.at("agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string f = "agents[" + std::to_string(i) + "]";
    if (!agents[i].contains("start")) throw ParseError(f + " lacks a start", 0, f + ".start");
    if (!agents[i].contains("goal")) throw ParseError(f + " lacks a goal", 0, f + ".goal");
    s.starts.push_back(pose_from_json(agents[i].at("start"), f + ".start"));
    s.goals.push_back(pose_from_json(agents[i].at("goal"), f + ".goal"));
  }
  validate_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  const Json j = read_json_file(path);
  Scenario s = scenario_from_json(j);
  if (s.name.empty()) s.name = path;
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) { write_json_file(scenario_to_json(s), path); }

LatticeState pose_to_lattice(const Pose& pose, const PrimitiveSet& set, const ModelParams& p) {
  const Cell c = cell_of({pose.x, pose.y}, p);
  const Point2 cc = cell_center(c, p);
  if (std::abs(cc.x - pose.x) > 1e-6 || std::abs(cc.y - pose.y) > 1e-6) {
    throw ValidationError("pose is not at a cell centre");
  }
  const double step = 2.0 * kPi / set.headings;
  double k = std::round(pose.theta / step);
  if (std::abs(normalize_angle(pose.theta - k * step)) > 1e-6) throw ValidationError("pose heading is off the lattice");
  int h = static_cast<int>(k) % set.headings;
  if (h < 0) h += set.headings;
  return {c, h, 0};
}

Pose lattice_to_pose(const LatticeState& s, const PrimitiveSet& set, const ModelParams& p) {
  const Point2 c = cell_center(s.cell, p);
  return {c.x, c.y, heading_angle(s.heading, set.headings)};
}

MampProblem to_problem(const Scenario& s, const PrimitiveSet& set, CostMode mode, Aggregate agg) {
  MampProblem prob;
  prob.workspace = s.workspace;
  prob.prims = &set;
  prob.mode = mode;
  prob.aggregate = agg;
  for (const auto& q : s.starts) prob.starts.push_back(pose_to_lattice(q, set, s.params));
  for (const auto& q : s.goals) prob.goals.push_back(pose_to_lattice(q, set, s.params));
  return prob;
}

std::vector<Scenario> generate_scenarios(int n_agents, int count, const MapSpec& map, std::uint64_t seed,
                                         const ModelParams& p, int max_attempts,
                                         const std::function<bool(const Scenario&)>& accept) {
  if (n_agents <= 0 || count < 0) throw SpecError("agent and scenario counts must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Scenario> out;
  int rejected = 0;
  for (int n = 0; n < count;) {
    Scenario s;
    s.params = p;
    s.seed = rng();
    s.name = "scenario_" + std::to_string(n);
    s.tags = {"generated"};
    std::mt19937_64 local(s.seed);
    s.workspace.width = map.width;
    s.workspace.height = map.height;
    std::bernoulli_distribution obstacle(map.obstacle_density);
    std::vector<Cell> free;
    for (int r = 0; r < map.height; ++r) {
      for (int c = 0; c < map.width; ++c) {
        if (obstacle(local)) {
          s.workspace.obstacles.push_back({c, r});
        } else {
          free.push_back({c, r});
        }
      }
    }
    s.workspace.rebuild_index();
    std::uniform_int_distribution<int> heading(0, std::max(1, map.headings) - 1);
    auto draw = [&](std::vector<Pose>& poses) {
      std::set<Cell> used;
      int attempts = 0;
      while (static_cast<int>(poses.size()) < n_agents) {
        if (++attempts > max_attempts || free.empty()) {
          throw GenerationTimeout("could not place " + std::to_string(n_agents) + " clear footprints");
        }
        std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
        const Cell c = free[pick(local)];
        const Point2 cc = cell_center(c, p);
        const double r = p.radius();
        if (cc.x - r < 0.0 || cc.y - r < 0.0 || cc.x + r > map.width * p.cell_size ||
            cc.y + r > map.height * p.cell_size) {
          continue;
        }
        bool clear = !used.count(c);
        for (const auto& q : poses) clear = clear && std::hypot(q.x - cc.x, q.y - cc.y) >= 2.0 * r;
        if (!clear) continue;
        used.insert(c);
        poses.push_back({cc.x, cc.y, heading(local) * 2.0 * kPi / std::max(1, map.headings)});
      }
    };
    draw(s.starts);
    draw(s.goals);
    for (auto& q : s.starts) q.theta = normalize_angle(q.theta);
    for (auto& q : s.goals) q.theta = normalize_angle(q.theta);
    if (accept && !accept(s)) {
      if (++rejected > max_attempts) throw GenerationTimeout("too many scenarios rejected by the filter");
      continue;
    }
    out.push_back(std::move(s));
    ++n;
  }
  return out;
}

Json sync_plan_to_json(const SyncPlan& plan, const PrimitiveSet& set) {
  Json agents = Json::array();
  for (std::size_t i = 0; i < plan.paths.size(); ++i) {
    const auto& p = plan.paths[i];
    Json actions = Json::array();
    for (const auto& a : p.actions) {
      actions.push_back({{"prim", a.prim}, {"name", set.prims.at(a.prim).name}, {"cell", {a.cell.col, a.cell.row}},
                         {"depart_step", a.depart}});
    }
    agents.push_back({{"start", lattice_to_json(p.start)},
                      {"goal", lattice_to_json(p.goal)},
                      {"start_step", p.start_step},
                      {"arrival_step", p.arrival},
                      {"padding_steps", i < plan.padding.size() ? plan.padding[i] : 0},
                      {"cost", p.cost},
                      {"actions", actions}});
  }
  return {{"t_f_steps", plan.t_f}, {"cost", plan.cost}, {"backward_cost", plan.backward_cost}, {"agents", agents}};
}

SyncPlan sync_plan_from_json(const Json& j, const PrimitiveSet& set) {
  return with_field("lattice", [&] {
    SyncPlan plan;
    plan.t_f = j.at("t_f_steps").get<Step>();
    plan.cost = j.at("cost").get<double>();
    plan.backward_cost = j.value("backward_cost", 0.0);
    for (const auto& a : j.at("agents")) {
      AgentPath p;
      p.start = lattice_from_json(a.at("start"));
      p.goal = lattice_from_json(a.at("goal"));
      p.start_step = a.at("start_step").get<Step>();
      p.arrival = a.at("arrival_step").get<Step>();
      p.cost = a.at("cost").get<double>();
      for (const auto& x : a.at("actions")) {
        const int id = x.at("prim").get<int>();
        if (id < 0 || id >= static_cast<int>(set.prims.size()) || set.prims[id].name != x.at("name")) {
          throw ParseError("plan refers to an unknown primitive", 0, "actions.prim");
        }
        p.actions.push_back({id, {x.at("cell")[0].get<int>(), x.at("cell")[1].get<int>()}, x.at("depart_step").get<Step>()});
      }
      plan.padding.push_back(a.value("padding_steps", Step{0}));
      plan.paths.push_back(std::move(p));
    }
    return plan;
  });
}

Json continuous_plan_to_json(const ContinuousPlan& plan) {
  Json trajs = Json::array();
  for (const auto& t : plan.trajectories) trajs.push_back(trajectory_to_json(t));
  Json goals = Json::array();
  for (const auto& g : plan.goals) goals.push_back(g.to_array());
  return {{"t_f", plan.t_f}, {"goals", goals}, {"trajectories", trajs}};
}

ContinuousPlan continuous_plan_from_json(const Json& j) {
  return with_field("trajectories", [&] {
    ContinuousPlan plan;
    plan.t_f = j.at("t_f").get<double>();
    for (const auto& g : j.at("goals")) {
      const auto a = g.get<std::vector<double>>();
      if (a.size() != AugmentedState::kDim) throw ParseError("goal state must have 7 entries", 0, "goals");
      plan.goals.push_back(AugmentedState::from_array(a));
    }
    for (const auto& t : j.at("trajectories")) plan.trajectories.push_back(trajectory_from_json(t));
    return plan;
  });
}

Json plan_file_to_json(const PlanFile& f, const PrimitiveSet& set) {
  return {{"schema_version", kPlanSchemaVersion},
          {"units", units()},
          {"scenario", f.scenario},
          {"primitive_hash", hex64(f.primitive_hash)},
          {"lattice", sync_plan_to_json(f.lattice, set)},
          {"plan", continuous_plan_to_json(f.trajectories)}};
}

PlanFile plan_file_from_json(const Json& j, const PrimitiveSet& set) {
  check_version(j, kPlanSchemaVersion, "plan");
  PlanFile f;
  f.scenario = with_field("scenario", [&] { return j.value("scenario", std::string()); });
  f.primitive_hash = with_field("primitive_hash", [&] {
    return std::stoull(j.at("primitive_hash").get<std::string>(), nullptr, 16);
  });
  if (f.primitive_hash != set.spec_hash) {
    throw ValidationError("plan was made with a different primitive set");
  }
  f.lattice = sync_plan_from_json(j.at("lattice"), set);
  f.trajectories = continuous_plan_from_json(j.at("plan"));
  return f;
}

}  // namespace simarr

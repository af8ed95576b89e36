#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "simarr/errors.hpp"
#include "simarr/json_io.hpp"
#include "simarr/primitives.hpp"

namespace simarr {

namespace {

constexpr int kPrimitiveFormatVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// nlohmann reports byte offsets; convert to a line number for ParseError.
int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

Json trajectory_to_json(const Trajectory& traj) {
  Json rows = Json::array();
  for (const auto& s : traj.samples) {
    rows.push_back({s.t, s.x.x, s.x.y, s.x.theta, s.x.alpha, s.x.omega, s.x.v, s.x.a, s.u.u_omega, s.u.u_a});
  }
  return {{"reversed", traj.reversed}, {"samples", rows}};
}

Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.reversed = j.value("reversed", false);
  for (const auto& r : j.at("samples")) {
    if (!r.is_array() || r.size() != 10) throw ParseError("trajectory sample must have 10 entries", 0, "samples");
    TrajectorySample s;
    s.t = r[0].get<double>();
    s.x = {r[1].get<double>(), r[2].get<double>(), r[3].get<double>(), r[4].get<double>(),
           r[5].get<double>(), r[6].get<double>(), r[7].get<double>()};
    s.u = {r[8].get<double>(), r[9].get<double>()};
    t.samples.push_back(s);
  }
  return t;
}

Json params_to_json(const ModelParams& p) {
  return {{"wheelbase", p.wheelbase},       {"alpha_max", p.alpha_max}, {"omega_max", p.omega_max},
          {"v_max", p.v_max},               {"a_max", p.a_max},         {"u_omega_max", p.u_omega_max},
          {"u_a_max", p.u_a_max},           {"cell_size", p.cell_size}, {"vehicle_length", p.vehicle_length},
          {"footprint_radius", p.radius()}, {"sample_dt", p.sample_dt}};
}

ModelParams params_from_json(const Json& j) {
  ModelParams p;
  p.wheelbase = j.value("wheelbase", p.wheelbase);
  p.alpha_max = j.value("alpha_max", p.alpha_max);
  p.omega_max = j.value("omega_max", p.omega_max);
  p.v_max = j.value("v_max", p.v_max);
  p.a_max = j.value("a_max", p.a_max);
  p.u_omega_max = j.value("u_omega_max", p.u_omega_max);
  p.u_a_max = j.value("u_a_max", p.u_a_max);
  p.cell_size = j.value("cell_size", p.cell_size);
  p.vehicle_length = j.value("vehicle_length", p.vehicle_length);
  p.footprint_radius = j.value("footprint_radius", p.footprint_radius);
  p.sample_dt = j.value("sample_dt", p.sample_dt);
  return p;
}

Json workspace_to_json(const Workspace& ws) {
  Json obs = Json::array();
  for (const auto& c : ws.obstacles) obs.push_back({c.col, c.row});
  return {{"width", ws.width}, {"height", ws.height}, {"obstacles", obs}};
}

Workspace workspace_from_json(const Json& j) {
  Workspace ws;
  ws.width = j.at("width").get<int>();
  ws.height = j.at("height").get<int>();
  for (const auto& c : j.value("obstacles", Json::array())) {
    if (!c.is_array() || c.size() != 2) throw ParseError("obstacle must be [col, row]", 0, "workspace.obstacles");
    ws.obstacles.push_back({c[0].get<int>(), c[1].get<int>()});
  }
  ws.rebuild_index();
  return ws;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), line_of(text, e.byte), "");
  }
}

void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

void save_primitives(const PrimitiveSet& set, const std::string& path) {
  Json prims = Json::array();
  for (const auto& pr : set.prims) {
    Json sweeps = Json::array();
    for (const auto& s : pr.sweeps) sweeps.push_back({s.dx, s.dy, s.ftt, s.swt, s.end_cell});
    prims.push_back({{"id", pr.id},
                     {"name", pr.name},
                     {"start", {pr.start.heading, pr.start.vel}},
                     {"end", {pr.end.cell.col, pr.end.cell.row, pr.end.heading, pr.end.vel}},
                     {"duration_steps", pr.duration},
                     {"cost", pr.cost},
                     {"wait", pr.wait},
                     {"backward", pr.backward},
                     {"source_id", pr.source_id},
                     {"sweeps", sweeps},
                     {"trajectory", trajectory_to_json(pr.trajectory)}});
  }
  Json fails = Json::array();
  for (const auto& f : set.failures) fails.push_back({{"name", f.name}, {"reason", f.reason}});
  Json j = {{"format", "simarr-primitives"},
            {"version", kPrimitiveFormatVersion},
            {"spec_hash", hex64(set.spec_hash)},
            {"headings", set.headings},
            {"velocities", set.velocities},
            {"step_seconds", set.step_seconds},
            {"cell_size", set.cell_size},
            {"tick_steps", set.tick},
            {"backward", set.backward},
            {"failures", fails},
            {"primitives", prims}};
  write_json_file(j, path);
}

PrimitiveSet load_primitives(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.value("format", "") != "simarr-primitives") throw ParseError("not a primitive cache", 0, "format");
  if (j.value("version", 0) != kPrimitiveFormatVersion) {
    throw ParseError("unsupported primitive cache version (supported: 1)", 0, "version");
  }
  try {
    PrimitiveSet set;
    set.spec_hash = std::stoull(j.at("spec_hash").get<std::string>(), nullptr, 16);
    set.headings = j.at("headings").get<int>();
    set.velocities = j.at("velocities").get<std::vector<double>>();
    set.step_seconds = j.at("step_seconds").get<double>();
    set.cell_size = j.value("cell_size", 1.0);
    set.tick = j.at("tick_steps").get<Step>();
    set.backward = j.value("backward", false);
    for (const auto& f : j.value("failures", Json::array())) {
      set.failures.push_back({f.at("name").get<std::string>(), f.at("reason").get<std::string>()});
    }
    for (const auto& q : j.at("primitives")) {
      MotionPrimitive pr;
      pr.id = q.at("id").get<int>();
      pr.name = q.at("name").get<std::string>();
      pr.start = {{0, 0}, q.at("start")[0].get<int>(), q.at("start")[1].get<int>()};
      const auto& e = q.at("end");
      pr.end = {{e[0].get<int>(), e[1].get<int>()}, e[2].get<int>(), e[3].get<int>()};
      pr.duration = q.at("duration_steps").get<Step>();
      pr.cost = q.at("cost").get<double>();
      pr.wait = q.value("wait", false);
      pr.backward = q.value("backward", false);
      pr.source_id = q.value("source_id", pr.id);
      for (const auto& s : q.at("sweeps")) {
        pr.sweeps.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<Step>(), s[3].get<Step>(), s[4].get<bool>()});
      }
      pr.trajectory = trajectory_from_json(q.at("trajectory"));
      set.prims.push_back(std::move(pr));
    }
    set.rebuild_index();
    set.validate();
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed primitive cache: " + e.what(), 0, "primitives");
  }
}

PrimitiveSet load_or_generate(const ModelParams& p, const LatticeSpec& spec, const std::string& path, int workers) {
  const std::uint64_t want = spec.hash(p);
  if (!path.empty() && std::filesystem::exists(path)) {
    try {
      PrimitiveSet cached = load_primitives(path);
      if (cached.spec_hash == want) return cached;
    } catch (const Error&) {
      // Stale or corrupt cache: regenerate below.
    }
  }
  PrimitiveSet set = generate_primitives(p, spec, workers);
  if (!path.empty()) save_primitives(set, path);
  return set;
}

}  // namespace simarr

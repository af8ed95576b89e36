#include "simarr/primitives.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "simarr/errors.hpp"
#include "simarr/nlp.hpp"
#include "simarr/ocp.hpp"

namespace simarr {

namespace {

const std::vector<int> kNone;

Step duration_steps(double seconds, double dt, const std::string& what) {
  const double q = seconds / dt;
  const Step s = static_cast<Step>(std::llround(q));
  if (s <= 0 || std::abs(q - static_cast<double>(s)) > 1e-6) {
    throw SpecError(what + ": duration " + std::to_string(seconds) + " s is not a positive multiple of the step");
  }
  return s;
}

// Cubic Hermite guess between the boundary poses. Only the first and last
// samples need to be exact.
Trajectory warm_guess(const AugmentedState& s, const AugmentedState& e, int n, double T, double dt) {
  const double D = std::hypot(e.x - s.x, e.y - s.y);
  const double m0x = D * std::cos(s.theta), m0y = D * std::sin(s.theta);
  const double m1x = D * std::cos(e.theta), m1y = D * std::sin(e.theta);
  Trajectory tr;
  double prev_theta = s.theta;
  for (int k = 0; k <= n; ++k) {
    const double a = static_cast<double>(k) / n;
    const double h00 = 2 * a * a * a - 3 * a * a + 1, h10 = a * a * a - 2 * a * a + a;
    const double h01 = -2 * a * a * a + 3 * a * a, h11 = a * a * a - a * a;
    const double d00 = 6 * a * a - 6 * a, d10 = 3 * a * a - 4 * a + 1;
    const double d01 = -6 * a * a + 6 * a, d11 = 3 * a * a - 2 * a;
    AugmentedState x;
    x.x = h00 * s.x + h10 * m0x + h01 * e.x + h11 * m1x;
    x.y = h00 * s.y + h10 * m0y + h01 * e.y + h11 * m1y;
    const double vx = d00 * s.x + d10 * m0x + d01 * e.x + d11 * m1x;
    const double vy = d00 * s.y + d10 * m0y + d01 * e.y + d11 * m1y;
    const double sp = std::hypot(vx, vy);
    x.theta = sp > 1e-9 ? prev_theta + normalize_angle(std::atan2(vy, vx) - prev_theta) : prev_theta;
    prev_theta = x.theta;
    x.v = sp / T;
    if (k == 0) x = s;
    if (k == n) {
      x = e;
      x.theta = prev_theta + normalize_angle(e.theta - prev_theta);
    }
    tr.samples.push_back({k * dt, x, {}});
  }
  return tr;
}

std::optional<MotionPrimitive> solve_request(const PrimitiveRequest& req, const LatticeSpec& spec,
                                             const PrimitiveSet& shape, const ModelParams& p, std::string& why) {
  const double dt = p.sample_dt;
  const Step steps = duration_steps(req.duration, dt, req.name);
  const int n = static_cast<int>(steps);
  const double T = n * dt;
  const int half = std::max(std::abs(req.dx), std::abs(req.dy)) + 3;
  Workspace ws;
  ws.width = ws.height = 2 * half + 1;
  ws.rebuild_index();
  const Cell c0{half, half};
  const LatticeState ls{c0, req.start_heading, req.start_vel};
  const LatticeState le{{c0.col + req.dx, c0.row + req.dy}, req.end_heading, req.end_vel};
  const AugmentedState xs = lattice_embedding(ls, shape, p);
  const AugmentedState xe = lattice_embedding(le, shape, p);

  SegmentSpec seg;
  seg.agents = {{xs, xe}};
  seg.knots = n;
  seg.t_min = seg.t_max = T;
  seg.workspace = ws;
  seg.params = p;
  const Trajectory guess = warm_guess(xs, xe, n, T, dt);
  SegmentOcp ocp(seg, std::span<const Trajectory>(&guess, 1));
  SolverOptions opts;
  opts.max_outer = 40;
  opts.max_inner = 400;
  const LocalSolution sol = solve_local(ocp, ocp.initial_guess(), opts);
  if (sol.max_violation > 1e-3) {
    why = "transcription did not converge (violation " + std::to_string(sol.max_violation) + ")";
    return std::nullopt;
  }
  KnotTrajectory kt = ocp.extract(sol.z, 0);

  AugmentedState x0 = xs;
  x0.x = 0.0;
  x0.y = 0.0;
  AugmentedState target = xe;
  target.x = req.dx * p.cell_size;
  target.y = req.dy * p.cell_size;
  const double err = shoot_to_target(x0, kt.u, T, target, p, 40, 1e-12);
  if (err > 1e-8) {
    why = "shooting residual " + std::to_string(err);
    return std::nullopt;
  }
  Trajectory traj = rollout(x0, kt.u, T, p, 0.0, dt);
  for (std::size_t k = 0; k < traj.size(); ++k) traj.samples[k].t = static_cast<double>(k) * dt;
  traj.samples.back().x = target;
  for (const auto& s : traj.samples) {
    if (!within_state_bounds(s.x, p, 1e-6) || !within_control_bounds(s.u, p, 1e-9)) {
      why = "rollout leaves the state box";
      return std::nullopt;
    }
  }

  MotionPrimitive prim;
  prim.name = req.name;
  prim.start = {{0, 0}, req.start_heading, req.start_vel};
  prim.end = {{req.dx, req.dy}, req.end_heading, req.end_vel};
  prim.duration = steps;
  prim.trajectory = std::move(traj);
  prim.cost = trajectory_cost(prim.trajectory);
  (void)spec;
  return prim;
}

MotionPrimitive make_wait(const LatticeSpec& spec, const ModelParams& p) {
  const Step steps = duration_steps(spec.wait_duration, p.sample_dt, "wait");
  MotionPrimitive w;
  w.name = "wait";
  w.wait = true;
  w.duration = steps;
  for (Step k = 0; k <= steps; ++k) w.trajectory.samples.push_back({static_cast<double>(k) * p.sample_dt, {}, {}});
  w.cost = trajectory_cost(w.trajectory);
  return w;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

double heading_angle(int heading, int headings) { return normalize_angle(heading * 2.0 * kPi / headings); }

AugmentedState lattice_embedding(const LatticeState& s, const PrimitiveSet& set, const ModelParams& p) {
  const Point2 c = cell_center(s.cell, p);
  AugmentedState x;
  x.x = c.x;
  x.y = c.y;
  x.theta = heading_angle(s.heading, set.headings);
  x.v = set.velocities.at(s.vel);
  return x;
}

const std::vector<int>& PrimitiveSet::applicable(int heading, int vel) const {
  const std::size_t k = static_cast<std::size_t>(heading) * velocities.size() + vel;
  if (heading < 0 || vel < 0 || k >= index_.size()) return kNone;
  return index_[k];
}

void PrimitiveSet::rebuild_index() {
  index_.assign(static_cast<std::size_t>(headings) * velocities.size(), {});
  wait_id = -1;
  for (const auto& pr : prims) {
    if (pr.wait) {
      wait_id = pr.id;
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(pr.start.heading) * velocities.size() + pr.start.vel;
    if (k < index_.size()) index_[k].push_back(pr.id);
  }
}

void PrimitiveSet::validate() const {
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const auto& pr = prims[i];
    if (pr.id != static_cast<int>(i)) throw SpecError("primitive ids must equal their index");
    if (pr.duration <= 0 || pr.duration % tick != 0) throw SpecError("primitive " + pr.name + " is off the tick");
    if (pr.wait) continue;
    if (applicable(pr.end.heading, pr.end.vel).empty() && !pr.end.at_rest()) {
      throw SpecError("primitive " + pr.name + " ends in a state with no successor");
    }
  }
}

LatticeSpec LatticeSpec::desk_default() {
  LatticeSpec s;
  s.requests = {
      {"accel", 0, 0, 1, 0, 0, 1, 2.0},     {"brake", 0, 1, 1, 0, 0, 0, 2.0},
      {"straight1", 0, 1, 1, 0, 0, 1, 1.0}, {"straight2", 0, 1, 2, 0, 0, 1, 2.0},
      {"turn45l", 0, 1, 2, 1, 1, 1, 2.5},   {"turn45r", 0, 1, 2, -1, 7, 1, 2.5},
      {"turn90l", 0, 1, 2, 2, 2, 1, 3.0},   {"turn90r", 0, 1, 2, -2, 6, 1, 3.0},
      {"accel_d", 1, 0, 1, 1, 1, 1, 3.0},   {"brake_d", 1, 1, 1, 1, 1, 0, 3.0},
      {"diag1", 1, 1, 1, 1, 1, 1, 1.5},     {"diag2", 1, 1, 2, 2, 1, 1, 3.0},
      {"turn_d0", 1, 1, 2, 1, 0, 1, 2.5},   {"turn_d2", 1, 1, 1, 2, 2, 1, 2.5},
  };
  return s;
}

std::uint64_t LatticeSpec::hash(const ModelParams& p) const {
  std::ostringstream os;
  os.precision(17);
  os << "v1|" << headings << '|' << tick << '|' << include_wait << '|' << wait_duration << '|' << rotate << '|';
  for (double v : velocities) os << v << ',';
  for (const auto& r : requests) {
    os << r.name << ':' << r.start_heading << ',' << r.start_vel << ',' << r.dx << ',' << r.dy << ','
       << r.end_heading << ',' << r.end_vel << ',' << r.duration << ';';
  }
  os << p.wheelbase << ',' << p.alpha_max << ',' << p.omega_max << ',' << p.v_max << ',' << p.a_max << ','
     << p.u_omega_max << ',' << p.u_a_max << ',' << p.cell_size << ',' << p.radius() << ',' << p.sample_dt;
  return fnv1a(os.str());
}

std::vector<SweepInstance> compute_sweeps(const MotionPrimitive& prim, const ModelParams& p) {
  const double cs = p.cell_size;
  const auto cells = swept_cells(prim.trajectory, p, nullptr, {-0.5 * cs, -0.5 * cs});
  std::vector<SweepInstance> out;
  out.reserve(cells.size());
  for (const auto& c : cells) {
    out.push_back({c.cell.col, c.cell.row, c.first, c.last - c.first, c.last >= prim.duration});
  }
  return out;
}

MotionPrimitive rotate_primitive(const MotionPrimitive& prim, int quarter_turns, int headings) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  auto rot = [q](double x, double y) -> std::pair<double, double> {
    switch (q) {
      case 1: return {-y, x};
      case 2: return {-x, -y};
      case 3: return {y, -x};
      default: return {x, y};
    }
  };
  auto rot_cell = [q](Cell c) -> Cell {
    switch (q) {
      case 1: return {-c.row, c.col};
      case 2: return {-c.col, -c.row};
      case 3: return {c.row, -c.col};
      default: return c;
    }
  };
  const int dh = q * headings / 4;
  MotionPrimitive out = prim;
  out.start.heading = (prim.start.heading + dh) % headings;
  out.end.heading = (prim.end.heading + dh) % headings;
  out.end.cell = rot_cell(prim.end.cell);
  for (auto& s : out.trajectory.samples) {
    const auto [x, y] = rot(s.x.x, s.x.y);
    s.x.x = x;
    s.x.y = y;
    s.x.theta = normalize_angle(s.x.theta + q * 0.5 * kPi);
  }
  for (auto& w : out.sweeps) {
    const Cell c = rot_cell({w.dx, w.dy});
    w.dx = c.col;
    w.dy = c.row;
  }
  return out;
}

MotionPrimitive reverse_primitive(const MotionPrimitive& prim, double cell_size) {
  MotionPrimitive out = prim;
  const int dx = prim.dx();
  const int dy = prim.dy();
  out.start = {{0, 0}, prim.end.heading, prim.end.vel};
  out.end = {{-dx, -dy}, prim.start.heading, prim.start.vel};
  out.backward = !prim.backward;
  out.sweeps.clear();
  for (const auto& s : prim.sweeps) {
    out.sweeps.push_back({s.dx - dx, s.dy - dy, prim.duration - s.ftt - s.swt, s.swt, s.ftt == 0});
  }
  std::sort(out.sweeps.begin(), out.sweeps.end(), [](const SweepInstance& a, const SweepInstance& b) {
    if (a.ftt != b.ftt) return a.ftt < b.ftt;
    return std::pair(a.dx, a.dy) < std::pair(b.dx, b.dy);
  });
  if (!prim.trajectory.empty()) {
    const double step = prim.trajectory.size() > 1 ? prim.trajectory.samples[1].t - prim.trajectory.samples[0].t : 1.0;
    out.trajectory = reverse_trajectory(prim.trajectory, std::round(step * 1e9) / 1e9);
    const double ox = dx * cell_size;
    const double oy = dy * cell_size;
    for (auto& s : out.trajectory.samples) {
      s.x.x -= ox;
      s.x.y -= oy;
    }
  }
  return out;
}

PrimitiveSet reverse_set(const PrimitiveSet& set, double cell_size) {
  PrimitiveSet out = set;
  out.backward = !set.backward;
  for (auto& pr : out.prims) pr = reverse_primitive(pr, cell_size);
  out.rebuild_index();
  return out;
}

PrimitiveSet generate_primitives(const ModelParams& p, const LatticeSpec& spec, int workers) {
  p.validate();
  if (spec.headings % 4 != 0 && spec.rotate) throw SpecError("rotation needs a heading count divisible by 4");
  if (spec.velocities.empty() || spec.velocities.front() != 0.0) throw SpecError("velocity level 0 must be rest");
  PrimitiveSet set;
  set.headings = spec.headings;
  set.velocities = spec.velocities;
  set.step_seconds = p.sample_dt;
  set.cell_size = p.cell_size;
  set.tick = duration_steps(spec.tick, p.sample_dt, "tick");
  set.spec_hash = spec.hash(p);

  const int n = static_cast<int>(spec.requests.size());
  std::vector<std::optional<MotionPrimitive>> solved(n);
  std::vector<std::string> why(n);
  for (const auto& r : spec.requests) {
    if (duration_steps(r.duration, p.sample_dt, r.name) % set.tick != 0) {
      throw SpecError(r.name + ": duration is not a multiple of the tick");
    }
  }
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int i = 0; i < n; ++i) {
    try {
      solved[i] = solve_request(spec.requests[i], spec, set, p, why[i]);
    } catch (const Error& e) {
      why[i] = e.what();
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!solved[i]) {
      set.failures.push_back({spec.requests[i].name, why[i]});
      continue;
    }
    const int turns = spec.rotate ? 4 : 1;
    for (int q = 0; q < turns; ++q) {
      MotionPrimitive pr = rotate_primitive(*solved[i], q, spec.headings);
      if (q > 0) pr.name += "@" + std::to_string(q * 90);
      pr.trajectory.samples.front().x = lattice_embedding(pr.start, set, p);
      pr.trajectory.samples.front().x.x = 0.0;
      pr.trajectory.samples.front().x.y = 0.0;
      AugmentedState end = lattice_embedding(pr.end, set, p);
      end.x = pr.dx() * p.cell_size;
      end.y = pr.dy() * p.cell_size;
      pr.trajectory.samples.back().x = end;
      pr.id = static_cast<int>(set.prims.size());
      pr.source_id = pr.id;
      pr.sweeps = compute_sweeps(pr, p);
      set.prims.push_back(std::move(pr));
    }
  }
  if (set.prims.empty() && n > 0) throw EmptySet("no movement primitive could be generated");
  if (spec.include_wait) {
    MotionPrimitive w = make_wait(spec, p);
    if (w.duration != set.tick) throw SpecError("wait duration must equal the tick");
    w.id = static_cast<int>(set.prims.size());
    w.source_id = w.id;
    w.sweeps = compute_sweeps(w, p);
    set.prims.push_back(std::move(w));
  }
  set.rebuild_index();
  return set;
}

}  // namespace simarr

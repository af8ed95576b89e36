#include "simarr/sipp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include "simarr/errors.hpp"

namespace simarr {

namespace {

const std::vector<SafeInterval> kNoIntervals;

Cell offset(Cell c, int dx, int dy) { return {c.col + dx, c.row + dy}; }

double rest_cost(const PrimitiveSet& set, CostMode mode, Step steps) {
  return mode == CostMode::Makespan ? static_cast<double>(steps) : set.wait_cost(steps);
}

double motion_cost(const MotionPrimitive& prim, CostMode mode) {
  return mode == CostMode::Makespan ? static_cast<double>(prim.duration) : prim.cost;
}

}  // namespace

// ---------------------------------------------------------------------------
// Safe intervals

IntervalTable::IntervalTable(const Workspace& ws, std::span<const BlockedInterval> blocked,
                             std::span<const ActionBan> bans)
    : width_(ws.width), height_(ws.height), bans_(bans.begin(), bans.end()) {
  cells_.assign(static_cast<std::size_t>(width_) * height_, {});
  for (const auto& b : bans_) {
    if (b.first < 0 || b.last < b.first) throw PreconditionViolation("action ban must be non-negative and ordered");
    static_after_ = std::max(static_after_, b.last >= kInfStep ? b.first : b.last + 1);
  }
  std::map<Cell, std::vector<std::pair<Step, Step>>> per_cell;
  for (const auto& b : blocked) {
    if (b.first < 0 || b.last < b.first) throw PreconditionViolation("blocked interval must be non-negative and ordered");
    per_cell[b.cell].push_back({b.first, b.last});
    // A block to infinity is static from its first step on.
    static_after_ = std::max(static_after_, b.last >= kInfStep ? b.first : b.last + 1);
  }
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const Cell cell{c, r};
      if (!ws.free(cell)) continue;
      auto& out = cells_[static_cast<std::size_t>(r) * width_ + c];
      auto it = per_cell.find(cell);
      if (it == per_cell.end()) {
        out.push_back({cell, 0, kInfStep});
        continue;
      }
      auto blocks = it->second;
      std::sort(blocks.begin(), blocks.end());
      Step free_from = 0;
      for (const auto& [lo, hi] : blocks) {
        if (lo > free_from) out.push_back({cell, free_from, lo - 1});
        free_from = std::max(free_from, hi >= kInfStep ? kInfStep : hi + 1);
      }
      if (free_from < kInfStep) out.push_back({cell, free_from, kInfStep});
    }
  }
}

const std::vector<SafeInterval>& IntervalTable::intervals(Cell c) const {
  if (c.col < 0 || c.row < 0 || c.col >= width_ || c.row >= height_) return kNoIntervals;
  return cells_[static_cast<std::size_t>(c.row) * width_ + c.col];
}

bool IntervalTable::banned(int prim, Cell from, Step depart) const {
  return std::any_of(bans_.begin(), bans_.end(), [&](const ActionBan& b) {
    return b.prim == prim && b.cell == from && b.first <= depart && depart <= b.last;
  });
}

int IntervalTable::find(Cell c, Step t) const {
  const auto& iv = intervals(c);
  auto it = std::upper_bound(iv.begin(), iv.end(), t, [](Step v, const SafeInterval& s) { return v < s.start; });
  if (it == iv.begin()) return -1;
  --it;
  return t <= it->end ? static_cast<int>(it - iv.begin()) : -1;
}

ConflictAvoidance::ConflictAvoidance(const Workspace& ws, std::span<const std::vector<CellInterval>> others)
    : width_(ws.width), height_(ws.height), cells_(static_cast<std::size_t>(ws.width) * ws.height) {
  for (const auto& occ : others) {
    for (const auto& e : occ) {
      if (!ws.in_bounds(e.cell)) continue;
      cells_[static_cast<std::size_t>(e.cell.row) * width_ + e.cell.col].push_back({e.first, e.last});
    }
  }
}

int ConflictAvoidance::count(Cell c, Step first, Step last) const {
  if (c.col < 0 || c.row < 0 || c.col >= width_ || c.row >= height_) return 0;
  int n = 0;
  for (const auto& [a, b] : cells_[static_cast<std::size_t>(c.row) * width_ + c.col]) {
    if (a <= last && first <= b) ++n;
  }
  return n;
}

IntervalTable build_safe_intervals(const Workspace& ws, std::span<const BlockedInterval> blocked) {
  return IntervalTable(ws, blocked);
}

std::vector<BlockedInterval> constraints_for(std::span<const SearchConstraint> constraints, int agent) {
  std::vector<BlockedInterval> out;
  for (const auto& c : constraints) {
    if (c.agent == agent && c.prim < 0) out.push_back({c.cell, std::max<Step>(0, c.first), c.last});
  }
  return out;
}

std::vector<ActionBan> action_bans_for(std::span<const SearchConstraint> constraints, int agent) {
  std::vector<ActionBan> out;
  for (const auto& c : constraints) {
    if (c.agent == agent && c.prim >= 0) out.push_back({c.prim, c.cell, std::max<Step>(0, c.first), c.last});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heuristic

DistanceHeuristic::DistanceHeuristic(const Workspace& ws, Cell goal, const PrimitiveSet& set, CostMode mode)
    : width_(ws.width) {
  // Rate: min over movement primitives of cost per 8-connected path length
  // through the primitive's own swept cells.
  rate_ = std::numeric_limits<double>::infinity();
  for (const auto& pr : set.prims) {
    if (pr.wait || (pr.dx() == 0 && pr.dy() == 0)) continue;
    std::map<Cell, double> d;
    std::vector<Cell> cells;
    for (const auto& s : pr.sweeps) cells.push_back({s.dx, s.dy});
    using Item = std::pair<double, Cell>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[{0, 0}] = 0.0;
    pq.push({0.0, {0, 0}});
    while (!pq.empty()) {
      auto [dist, c] = pq.top();
      pq.pop();
      if (dist > d[c]) continue;
      for (const Cell& n : cells) {
        const int ax = std::abs(n.col - c.col), ay = std::abs(n.row - c.row);
        if (ax > 1 || ay > 1 || (ax == 0 && ay == 0)) continue;
        const double nd = dist + ((ax + ay == 2) ? std::sqrt(2.0) : 1.0);
        auto it = d.find(n);
        if (it == d.end() || nd < it->second) {
          d[n] = nd;
          pq.push({nd, n});
        }
      }
    }
    auto it = d.find(pr.end.cell);
    // Disconnected sweeps cannot happen for continuous motion; be safe.
    const double len = it == d.end() ? std::hypot(pr.dx(), pr.dy()) : it->second;
    const double c = mode == CostMode::Makespan ? static_cast<double>(pr.duration) : pr.cost;
    rate_ = std::min(rate_, c / len);
  }
  if (!std::isfinite(rate_)) rate_ = 0.0;

  dist_.assign(static_cast<std::size_t>(ws.width) * ws.height, std::numeric_limits<double>::infinity());
  if (!ws.free(goal)) return;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const int g = goal.row * width_ + goal.col;
  dist_[g] = 0.0;
  pq.push({0.0, g});
  while (!pq.empty()) {
    auto [dist, idx] = pq.top();
    pq.pop();
    if (dist > dist_[idx]) continue;
    const Cell c{idx % width_, idx / width_};
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        const Cell n{c.col + dx, c.row + dy};
        if (!ws.free(n)) continue;
        const double nd = dist + ((dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0);
        const int ni = n.row * width_ + n.col;
        if (nd < dist_[ni]) {
          dist_[ni] = nd;
          pq.push({nd, ni});
        }
      }
    }
  }
}

DistanceHeuristic::DistanceHeuristic(const Workspace& ws, const LatticeState& goal, const PrimitiveSet& set,
                                     CostMode mode)
    : DistanceHeuristic(ws, goal.cell, set, mode) {
  height_ = ws.height;
  headings_ = set.headings;
  vels_ = static_cast<int>(set.velocities.size());
  const int n = width_ * height_ * headings_ * vels_;
  auto index = [&](const LatticeState& s) { return ((s.cell.row * width_ + s.cell.col) * headings_ + s.heading) * vels_ + s.vel; };
  lattice_.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  if (!ws.free(goal.cell) || goal.heading < 0 || goal.heading >= headings_ || goal.vel < 0 || goal.vel >= vels_) return;

  // Reverse edges of the static lattice, then Dijkstra from the goal.
  std::vector<std::vector<std::pair<int, double>>> preds(static_cast<std::size_t>(n));
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (!ws.free({c, r})) continue;
      for (int h = 0; h < headings_; ++h) {
        for (int v = 0; v < vels_; ++v) {
          const LatticeState from{{c, r}, h, v};
          for (int pid : set.applicable(h, v)) {
            const auto& pr = set.prims[pid];
            const bool fits = std::all_of(pr.sweeps.begin(), pr.sweeps.end(),
                                          [&](const SweepInstance& s) { return ws.free(offset(from.cell, s.dx, s.dy)); });
            const LatticeState to{offset(from.cell, pr.dx(), pr.dy()), pr.end.heading, pr.end.vel};
            if (!fits || !ws.free(to.cell)) continue;
            preds[index(to)].push_back({index(from), motion_cost(pr, mode)});
          }
        }
      }
    }
  }
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  lattice_[index(goal)] = 0.0;
  pq.push({0.0, index(goal)});
  while (!pq.empty()) {
    auto [d, k] = pq.top();
    pq.pop();
    if (d > lattice_[k]) continue;
    for (const auto& [from, c] : preds[k]) {
      if (d + c < lattice_[from]) {
        lattice_[from] = d + c;
        pq.push({d + c, from});
      }
    }
  }
}

double DistanceHeuristic::operator()(const LatticeState& s) const {
  if (lattice_.empty() || s.heading < 0 || s.heading >= headings_ || s.vel < 0 || s.vel >= vels_ || s.cell.col < 0 ||
      s.cell.row < 0 || s.cell.col >= width_ || s.cell.row >= height_) {
    return (*this)(s.cell);
  }
  return lattice_[((static_cast<std::size_t>(s.cell.row) * width_ + s.cell.col) * headings_ + s.heading) * vels_ + s.vel];
}

double DistanceHeuristic::operator()(Cell c) const {
  const std::size_t idx = static_cast<std::size_t>(c.row) * width_ + c.col;
  if (c.col < 0 || c.row < 0 || c.col >= width_ || idx >= dist_.size()) return std::numeric_limits<double>::infinity();
  const double d = dist_[idx];
  return std::isfinite(d) ? rate_ * d : d;
}

// ---------------------------------------------------------------------------
// Interval projection

namespace {

// True if every sweep of prim departing from `cell` at step d lies inside
// one safe interval. Sets `end_interval` to the interval holding arrival.
bool sweeps_fit(const MotionPrimitive& prim, Cell cell, Step d, const IntervalTable& table, int& end_interval) {
  for (const auto& s : prim.sweeps) {
    const Cell c = offset(cell, s.dx, s.dy);
    const int idx = table.find(c, d + s.ftt);
    if (idx < 0) return false;
    if (table.intervals(c)[idx].end < d + s.last()) return false;
  }
  end_interval = table.find(offset(cell, prim.dx(), prim.dy()), d + prim.duration);
  return end_interval >= 0;
}

}  // namespace

std::vector<SippNode> project_intervals(const SippNode& node, const MotionPrimitive& prim, const PrimitiveSet& set,
                                        const IntervalTable& table, CostMode mode, Step depart_cap) {
  std::vector<SippNode> out;
  const auto& ivs = table.intervals(node.state.cell);
  if (node.interval < 0 || node.interval >= static_cast<int>(ivs.size())) return out;
  const SafeInterval& here = ivs[node.interval];
  Step latest = node.state.at_rest() ? std::min(here.end, std::max(node.arrival, depart_cap)) : node.arrival;
  // Past the last dynamic block every departure sees the same free cells.
  const Step stat = table.static_after();
  if (depart_cap >= kInfStep && node.arrival < stat) {
    latest = std::min(latest, node.arrival + ((stat - node.arrival + set.tick - 1) / set.tick) * set.tick);
  } else if (depart_cap >= kInfStep) {
    latest = node.arrival;
  }
  const LatticeState next_state{offset(node.state.cell, prim.dx(), prim.dy()), prim.end.heading, prim.end.vel};
  int last_rest_interval = -1;
  for (Step d = node.arrival; d <= latest; d += set.tick) {
    int end_iv = -1;
    if (table.banned(prim.id, node.state.cell, d)) continue;
    if (!sweeps_fit(prim, node.state.cell, d, table, end_iv)) continue;
    if (next_state.at_rest()) {
      if (end_iv == last_rest_interval) continue;
      last_rest_interval = end_iv;
    }
    SippNode s;
    s.state = next_state;
    s.interval = end_iv;
    s.arrival = d + prim.duration;
    s.g = node.g + rest_cost(set, mode, d - node.arrival) + motion_cost(prim, mode);
    s.prim = prim.id;
    s.depart = d;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Search

namespace {

struct LabelKey {
  LatticeState state;
  int interval;
  // Goal labels that may end the search never compete with ones that may not.
  bool finishable;
  auto operator<=>(const LabelKey&) const = default;
};

struct Label {
  Step arrival;
  double g;
  int overlaps;
  int node;
};

}  // namespace

AgentPath sipp_search(const SippQuery& q, const PrimitiveSet& set, const Workspace& ws, const IntervalTable& table,
                      const DistanceHeuristic* heuristic) {
  if (!q.goal.at_rest()) throw PreconditionViolation("sipp goal must be a rest state");
  if (!ws.free(q.goal.cell)) throw NoPath("goal cell is not free");
  if (!ws.free(q.start.cell)) throw NoPath("start cell is not free");
  const int start_iv = table.find(q.start.cell, q.start_step);
  if (start_iv < 0) throw NoPath("start cell is blocked at the start time");

  std::optional<DistanceHeuristic> own;
  if (heuristic == nullptr) {
    own.emplace(ws, q.goal, set, q.mode);
    heuristic = &*own;
  }
  // Waiting past the last dynamic block (or the arrival bound) only delays a
  // static continuation.
  const Step stat = std::max(table.static_after(), q.min_arrival);
  auto depart_cap = [&](Step arrival) {
    if (arrival >= stat) return arrival;
    return arrival + ((stat - arrival + set.tick - 1) / set.tick) * set.tick;
  };

  std::vector<SippNode> nodes;
  std::map<LabelKey, std::vector<Label>> labels;
  struct Entry {
    double f;
    int overlaps;
    Step arrival;
    std::size_t seq;
    int node;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.overlaps != b.overlaps) return a.overlaps > b.overlaps;
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.seq > b.seq;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  std::size_t seq = 0;

  // Label (a, g, o) dominates (a2, g2, o2) at the same key if it can reach
  // every continuation of the other no later, no dearer and with no more
  // overlaps. Overlaps only break ties, so ignoring those accrued while a
  // rest label waits for a later arrival costs no optimality.
  auto dominates = [&](const LatticeState& s, Step a, double g, int o, Step a2, double g2, int o2) {
    if (a > a2 || o > o2) return false;
    if (s.at_rest()) return g + rest_cost(set, q.mode, a2 - a) <= g2;
    if (a == a2 || a >= stat) return g <= g2;
    return false;
  };

  auto push = [&](const SippNode& n) {
    auto& ls = labels[{n.state, n.interval, n.state == q.goal && n.arrival >= q.min_arrival}];
    for (const auto& l : ls) {
      if (l.node >= 0 && dominates(n.state, l.arrival, l.g, l.overlaps, n.arrival, n.g, n.overlaps)) return;
    }
    const double h = (*heuristic)(n.state);
    if (!std::isfinite(h)) return;
    for (auto& l : ls) {
      if (l.node >= 0 && dominates(n.state, n.arrival, n.g, n.overlaps, l.arrival, l.g, l.overlaps)) l.node = -1;
    }
    nodes.push_back(n);
    const int id = static_cast<int>(nodes.size()) - 1;
    ls.push_back({n.arrival, n.g, n.overlaps, id});
    open.push({n.g + h, n.overlaps, n.arrival, seq++, id});
  };

  SippNode root;
  root.state = q.start;
  root.interval = start_iv;
  root.arrival = q.start_step;
  root.g = rest_cost(set, q.mode, q.start_step);
  push(root);

  if (q.deadline && std::chrono::steady_clock::now() > *q.deadline) throw Timeout("sipp deadline reached");
  std::vector<char> closed;
  std::size_t expansions = 0;
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    closed.resize(nodes.size(), 0);
    if (closed[e.node]) continue;
    // Skip labels dominated after they were queued.
    {
      const SippNode& n = nodes[e.node];
      const auto& ls = labels[{n.state, n.interval, n.state == q.goal && n.arrival >= q.min_arrival}];
      const bool alive = std::any_of(ls.begin(), ls.end(), [&](const Label& l) { return l.node == e.node; });
      if (!alive) continue;
    }
    closed[e.node] = 1;
    const SippNode cur = nodes[e.node];
    const auto& iv = table.intervals(cur.state.cell)[cur.interval];
    if (cur.state == q.goal && iv.end == kInfStep && cur.arrival >= q.min_arrival) {
      AgentPath path;
      path.start = q.start;
      path.goal = q.goal;
      path.start_step = q.start_step;
      path.arrival = cur.arrival;
      path.cost = cur.g;
      for (int n = e.node; nodes[n].parent >= 0; n = nodes[n].parent) {
        path.actions.push_back({nodes[n].prim, nodes[nodes[n].parent].state.cell, nodes[n].depart});
      }
      std::reverse(path.actions.begin(), path.actions.end());
      if (q.mode == CostMode::Makespan) path.cost = static_cast<double>(path.arrival) * set.step_seconds;
      return path;
    }
    if (++expansions > q.max_expansions) throw Timeout("sipp expansion cap reached");
    if (q.deadline && (expansions & 255) == 0 && std::chrono::steady_clock::now() > *q.deadline) {
      throw Timeout("sipp deadline reached");
    }
    for (int pid : set.applicable(cur.state.heading, cur.state.vel)) {
      const auto& prim = set.prims[pid];
      for (SippNode s : project_intervals(cur, prim, set, table, q.mode, depart_cap(cur.arrival))) {
        s.parent = e.node;
        if (q.avoid != nullptr) {
          s.overlaps = cur.overlaps;
          if (s.depart > cur.arrival) s.overlaps += q.avoid->count(cur.state.cell, cur.arrival, s.depart);
          for (const auto& sw : prim.sweeps) {
            s.overlaps += q.avoid->count(offset(cur.state.cell, sw.dx, sw.dy), s.depart + sw.ftt, s.depart + sw.last());
          }
          if (s.state == q.goal) s.overlaps += q.avoid->count(s.state.cell, s.arrival, kInfStep);
        }
        push(s);
      }
    }
  }
  throw NoPath("open list exhausted");
}

// ---------------------------------------------------------------------------
// Path utilities

std::vector<CellInterval> path_occupancy(const AgentPath& path, const PrimitiveSet& set) {
  std::vector<CellInterval> out;
  Cell cell = path.start.cell;
  Step rest_from = 0;
  for (const auto& a : path.actions) {
    const auto& pr = set.prims[a.prim];
    if (a.depart > rest_from) out.push_back({cell, rest_from, a.depart});
    for (const auto& s : pr.sweeps) out.push_back({offset(a.cell, s.dx, s.dy), a.depart + s.ftt, a.depart + s.last()});
    cell = offset(a.cell, pr.dx(), pr.dy());
    rest_from = a.depart + pr.duration;
  }
  out.push_back({cell, rest_from, kInfStep});
  return out;
}

double path_cost(const AgentPath& path, const PrimitiveSet& set, CostMode mode) {
  if (mode == CostMode::Makespan) return static_cast<double>(path.arrival) * set.step_seconds;
  double c = 0.0;
  Step moving = 0;
  for (const auto& a : path.actions) {
    c += set.prims[a.prim].cost;
    moving += set.prims[a.prim].duration;
  }
  return c + set.wait_cost(path.arrival - moving);
}

Trajectory path_trajectory(const AgentPath& path, const PrimitiveSet& set, const ModelParams& p, Step t_end) {
  if (t_end < path.arrival) throw PreconditionViolation("trajectory end before arrival");
  Trajectory out;
  LatticeState cur = path.start;
  Step t = 0;
  auto rest_until = [&](Step until) {
    AugmentedState x = lattice_embedding(cur, set, p);
    for (; t < until; ++t) out.samples.push_back({static_cast<double>(t) * p.sample_dt, x, {}});
  };
  for (const auto& a : path.actions) {
    const auto& pr = set.prims[a.prim];
    if (pr.trajectory.size() != static_cast<std::size_t>(pr.duration) + 1) {
      throw PreconditionViolation("primitive " + pr.name + " has no step-sampled trajectory");
    }
    rest_until(a.depart);
    const Point2 c = cell_center(a.cell, p);
    for (Step k = 0; k < pr.duration; ++k, ++t) {
      TrajectorySample s = pr.trajectory.samples[k];
      s.t = static_cast<double>(t) * p.sample_dt;
      s.x.x += c.x;
      s.x.y += c.y;
      out.samples.push_back(s);
    }
    cur = {offset(a.cell, pr.dx(), pr.dy()), pr.end.heading, pr.end.vel};
  }
  rest_until(t_end);
  out.samples.push_back({static_cast<double>(t_end) * p.sample_dt, lattice_embedding(cur, set, p), {}});
  return out;
}

AgentPath reverse_path(const AgentPath& path, const PrimitiveSet& source, const PrimitiveSet& target, Step t_f) {
  if (t_f < path.arrival) throw PreconditionViolation("reversal time precedes arrival");
  AgentPath out;
  out.start = path.goal;
  out.goal = path.start;
  out.start_step = t_f - path.arrival;
  out.arrival = t_f - path.start_step;
  for (auto it = path.actions.rbegin(); it != path.actions.rend(); ++it) {
    const auto& pr = source.prims[it->prim];
    const auto& tp = target.prims.at(it->prim);
    out.actions.push_back({tp.id, offset(it->cell, pr.dx(), pr.dy()), t_f - (it->depart + pr.duration)});
  }
  out.cost = path_cost(out, target, CostMode::RunningCost);
  return out;
}

}  // namespace simarr

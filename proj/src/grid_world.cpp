#include "simarr/grid_world.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <tuple>

#include "simarr/errors.hpp"

namespace simarr {

std::vector<SweepInstance> abstract_sweeps(int dx, int dy, Step duration) {
  if ((dx == 0) == (dy == 0)) throw SpecError("abstract moves must be axis aligned");
  const Step k = std::abs(dx + dy);
  const int sx = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int sy = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const Step T = duration;
  std::vector<SweepInstance> out;
  for (Step j = 0; j <= k; ++j) {
    // The footprint centre sits at j cells at time j*T/k; cell j is touched
    // while the centre is within half a cell of it.
    const Step lo_num = std::max<Step>(0, (2 * j - 1) * T);
    const Step hi_num = std::min<Step>(2 * k * T, (2 * j + 1) * T);
    const Step first = lo_num / (2 * k);
    const Step last = (hi_num + 2 * k - 1) / (2 * k);
    out.push_back({static_cast<int>(sx * j), static_cast<int>(sy * j), first, last - first, j == k});
  }
  return out;
}

PrimitiveSet abstract_set(const std::vector<AbstractMove>& moves, Step tick, double wait_cost) {
  PrimitiveSet set;
  set.headings = 1;
  set.velocities = {0.0};
  set.tick = tick;
  for (const auto& m : moves) {
    MotionPrimitive pr;
    pr.id = static_cast<int>(set.prims.size());
    pr.name = m.name;
    pr.start = {{0, 0}, 0, 0};
    pr.end = {{m.dx, m.dy}, 0, 0};
    pr.duration = m.duration;
    pr.cost = m.cost;
    pr.sweeps = abstract_sweeps(m.dx, m.dy, m.duration);
    set.prims.push_back(std::move(pr));
  }
  MotionPrimitive w;
  w.id = static_cast<int>(set.prims.size());
  w.name = "wait";
  w.duration = tick;
  w.cost = wait_cost;
  w.wait = true;
  w.sweeps = {{0, 0, 0, tick, true}};
  set.prims.push_back(std::move(w));
  set.rebuild_index();
  set.validate();
  return set;
}

MampProblem GridInstance::problem(CostMode mode, Aggregate agg) const {
  MampProblem p;
  p.workspace = workspace;
  p.starts = starts;
  p.goals = goals;
  p.prims = &set;
  p.mode = mode;
  p.aggregate = agg;
  return p;
}

GridInstance padding_tradeoff_fixture() {
  GridInstance g;
  g.workspace.width = 5;
  g.workspace.height = 3;
  for (int c = 0; c < 5; ++c) g.workspace.obstacles.push_back({c, 1});
  g.workspace.obstacles.push_back({3, 2});
  g.workspace.obstacles.push_back({4, 2});
  g.workspace.rebuild_index();
  g.set = abstract_set({{"p1", 2, 0, 60, 9.0}, {"p2", 1, 0, 40, 5.0}}, 10, 1.0);
  g.starts = {{{0, 0}, 0, 0}, {{0, 2}, 0, 0}};
  g.goals = {{{4, 0}, 0, 0}, {{2, 2}, 0, 0}};
  return g;
}

GridInstance random_grid_instance(std::uint64_t seed, double wait_cost, int max_side) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(3, max_side);
  std::uniform_int_distribution<int> cost(1, 5);
  std::bernoulli_distribution obstacle(0.2);
  GridInstance g;
  g.workspace.width = side(rng);
  g.workspace.height = side(rng);
  std::vector<Cell> free;
  for (int r = 0; r < g.workspace.height; ++r) {
    for (int c = 0; c < g.workspace.width; ++c) {
      if (obstacle(rng)) {
        g.workspace.obstacles.push_back({c, r});
      } else {
        free.push_back({c, r});
      }
    }
  }
  while (free.size() < 4) {
    free.push_back(g.workspace.obstacles.back());
    g.workspace.obstacles.pop_back();
  }
  g.workspace.rebuild_index();
  g.set = abstract_set({{"east", 1, 0, 10, double(cost(rng))},
                        {"north", 0, 1, 10, double(cost(rng))},
                        {"west", -1, 0, 10, double(cost(rng))},
                        {"south", 0, -1, 10, double(cost(rng))}},
                       10, wait_cost);
  std::shuffle(free.begin(), free.end(), rng);
  g.starts = {{free[0], 0, 0}, {free[1], 0, 0}};
  std::shuffle(free.begin(), free.end(), rng);
  g.goals = {{free[0], 0, 0}, {free[1], 0, 0}};
  return g;
}

namespace {

struct Occ {
  Cell cell;
  Step first;
  Step last;
};

// Occupancy of one agent during one tick starting at step t0.
void tick_occupancy(Cell c, int action, const PrimitiveSet& set, Step t0, std::vector<Occ>& out) {
  const auto& pr = set.prims[action];
  for (const auto& s : pr.sweeps) out.push_back({{c.col + s.dx, c.row + s.dy}, t0 + s.ftt, t0 + s.ftt + s.swt});
}

bool collide(const std::vector<Occ>& a, const std::vector<Occ>& b) {
  for (const auto& x : a) {
    for (const auto& y : b) {
      if (x.cell == y.cell && x.first <= y.last && y.first <= x.last) return true;
    }
  }
  return false;
}

}  // namespace

std::optional<double> brute_force_optimum(const GridInstance& inst, JointObjective obj, int horizon_ticks,
                                          bool free_rest_at_goal) {
  const auto& set = inst.set;
  const auto& ws = inst.workspace;
  const Step tick = set.tick;
  for (const auto& pr : set.prims) {
    if (pr.duration != tick) throw PreconditionViolation("brute force needs single-tick actions");
  }
  const std::size_t K = inst.starts.size();
  // Cells, finished flags, tick.
  using Key = std::tuple<std::vector<Cell>, std::vector<char>, int>;
  std::map<Key, double> best;
  using Item = std::pair<double, Key>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  Key start;
  for (const auto& s : inst.starts) std::get<0>(start).push_back(s.cell);
  std::get<1>(start).assign(inst.starts.size(), 0);
  best[start] = 0.0;
  open.push({0.0, start});

  // Action A (one past the primitives) is a free rest that finishes the agent.
  const int A = static_cast<int>(set.prims.size());
  const int wait = set.wait_id;
  const int actions = free_rest_at_goal ? A + 1 : A;
  while (!open.empty()) {
    auto [g, key] = open.top();
    open.pop();
    if (best[key] < g) continue;
    bool done = true;
    const auto& [cells, finished, tk] = key;
    for (std::size_t i = 0; i < K; ++i) done = done && cells[i] == inst.goals[i].cell;
    if (done) return g;
    if (tk >= horizon_ticks) continue;
    const Step t0 = tk * tick;

    // Enumerate joint actions.
    std::vector<int> act(K, 0);
    for (;;) {
      std::vector<std::vector<Occ>> occ(K);
      std::vector<Cell> next(K);
      std::vector<char> fin = finished;
      double step_cost = 0.0;
      bool ok = true;
      for (std::size_t i = 0; i < K && ok; ++i) {
        const bool finish = act[i] == A;
        if (finished[i] && !finish) ok = false;
        if (finish && cells[i] != inst.goals[i].cell) ok = false;
        if (!ok) break;
        const auto& pr = set.prims[finish ? wait : act[i]];
        next[i] = {cells[i].col + pr.dx(), cells[i].row + pr.dy()};
        for (const auto& s : pr.sweeps) ok = ok && ws.free({cells[i].col + s.dx, cells[i].row + s.dy});
        if (!ok) break;
        tick_occupancy(cells[i], finish ? wait : act[i], set, t0, occ[i]);
        step_cost += finish ? 0.0 : pr.cost;
        fin[i] = finish ? 1 : 0;
      }
      for (std::size_t i = 0; i < K && ok; ++i) {
        for (std::size_t j = i + 1; j < K && ok; ++j) ok = !collide(occ[i], occ[j]);
      }
      if (ok) {
        const double ng = obj == JointObjective::SumCost ? g + step_cost : double((tk + 1) * tick);
        Key nk{next, fin, tk + 1};
        auto it = best.find(nk);
        if (it == best.end() || ng < it->second) {
          best[nk] = ng;
          open.push({ng, nk});
        }
      }
      std::size_t d = 0;
      while (d < K && ++act[d] == actions) act[d++] = 0;
      if (d == K) break;
    }
  }
  return std::nullopt;
}

}  // namespace simarr

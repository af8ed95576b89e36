#include <chrono>
#include <cmath>
#include <functional>
#include <limits>

#include "doctest.h"
#include "simarr/grid_world.hpp"
#include "support.hpp"

using namespace simarr;

namespace {

Workspace corridor(int width, int height = 1) {
  Workspace ws;
  ws.width = width;
  ws.height = height;
  ws.rebuild_index();
  return ws;
}

SippNode rest_node(const IntervalTable& table, LatticeState s, Step t) {
  SippNode n;
  n.state = s;
  n.arrival = t;
  n.interval = table.find(s.cell, t);
  return n;
}

double action_sum(const AgentPath& path, const PrimitiveSet& set) {
  double c = 0.0;
  for (const auto& a : path.actions) c += set.prims[a.prim].cost;
  return c;
}

}  // namespace

TEST_SUITE("sipp") {
  TEST_CASE("overlapping blocks merge into one unsafe range") {
    const Workspace ws = corridor(2);
    const std::vector<BlockedInterval> blocked{{{0, 0}, 1, 3}, {{0, 0}, 2, 5}};
    const IntervalTable table = build_safe_intervals(ws, blocked);
    const auto& iv = table.intervals({0, 0});
    REQUIRE(iv.size() == 2);
    CHECK(iv[0] == SafeInterval{{0, 0}, 0, 0});
    CHECK(iv[1] == SafeInterval{{0, 0}, 6, kInfStep});
    CHECK(table.intervals({1, 0}).size() == 1);
    CHECK(table.find({0, 0}, 3) == -1);
    CHECK(table.find({0, 0}, 7) == 1);
    CHECK(table.static_after() == 6);
  }

  TEST_CASE("obstacles and outside cells have no safe interval") {
    Workspace ws = corridor(3);
    ws.obstacles.push_back({1, 0});
    ws.rebuild_index();
    const IntervalTable table = build_safe_intervals(ws, {});
    CHECK(table.intervals({1, 0}).empty());
    CHECK(table.intervals({5, 0}).empty());
    CHECK(table.find({-1, 0}, 0) == -1);
  }

  TEST_CASE("constraints are filtered per agent") {
    const std::vector<SearchConstraint> cs{{0, {1, 0}, 4, 6}, {1, {2, 0}, 1, 1}, {0, {3, 0}, 0, 2}};
    const auto mine = constraints_for(cs, 0);
    REQUIRE(mine.size() == 2);
    CHECK(mine[0].cell == Cell{1, 0});
    CHECK(mine[1].last == 2);
  }

  TEST_CASE("an agent at rest delays its departure past a blocked sweep") {
    const PrimitiveSet set = abstract_set({{"east", 1, 0, 10, 1.0}}, 10, 0.5);
    const Workspace ws = corridor(3);
    // east touches the next cell on [5, 10]; block it on [3, 12].
    const std::vector<BlockedInterval> blocked{{{1, 0}, 3, 12}};
    const IntervalTable table = build_safe_intervals(ws, blocked);
    const SippNode n = rest_node(table, {{0, 0}, 0, 0}, 0);
    const auto succ = project_intervals(n, set.prims[0], set, table, CostMode::RunningCost, kInfStep);
    REQUIRE(succ.size() == 1);
    // Dense scan of departures at tick resolution: 0 clashes, 10 is clear.
    CHECK(succ[0].depart == 10);
    CHECK(succ[0].arrival == 20);
    CHECK(succ[0].g == doctest::Approx(1.0 + 0.5));
    // A departure cap below the first clear tick leaves nothing.
    CHECK(project_intervals(n, set.prims[0], set, table, CostMode::RunningCost, 5).empty());
  }

  TEST_CASE("banned departures are skipped and extend the dynamic horizon") {
    const PrimitiveSet set = abstract_set({{"east", 1, 0, 10, 1.0}}, 10, 0.5);
    const Workspace ws = corridor(3);
    const std::vector<ActionBan> bans{{0, {0, 0}, 0, 15}};
    const IntervalTable table(ws, {}, bans);
    CHECK(table.static_after() == 16);
    CHECK(table.banned(0, {0, 0}, 10));
    CHECK_FALSE(table.banned(0, {1, 0}, 10));
    CHECK_FALSE(table.banned(0, {0, 0}, 20));
    const auto succ = project_intervals(rest_node(table, {{0, 0}, 0, 0}, 0), set.prims[0], set, table,
                                        CostMode::RunningCost, kInfStep);
    REQUIRE(succ.size() == 1);
    CHECK(succ[0].depart == 20);

    const std::vector<SearchConstraint> cs{{0, {0, 0}, 0, 15, 0}, {0, {2, 0}, 3, 4}, {1, {0, 0}, 0, 5, 0}};
    CHECK(constraints_for(cs, 0).size() == 1);
    const auto mine = action_bans_for(cs, 0);
    REQUIRE(mine.size() == 1);
    CHECK(mine[0].last == 15);

    SippQuery q;
    q.start = {{0, 0}, 0, 0};
    q.goal = {{2, 0}, 0, 0};
    const AgentPath path = sipp_search(q, set, ws, table);
    REQUIRE(path.actions.size() == 2);
    CHECK(path.actions[0].depart == 20);
    CHECK(path.cost == doctest::Approx(2.0 + 2 * 0.5));
  }

  TEST_CASE("a moving agent cannot wait out a blocked sweep") {
    const auto& set = testing::desk_set();
    const Workspace ws = corridor(6);
    const int straight = 8;  // straight1: one cell at cruise speed
    REQUIRE(set.prims[straight].name == "straight1");
    const std::vector<BlockedInterval> blocked{{{2, 0}, 0, 10}};
    const IntervalTable table = build_safe_intervals(ws, blocked);
    const SippNode n = rest_node(table, {{1, 0}, 0, 1}, 0);
    CHECK(project_intervals(n, set.prims[straight], set, table, CostMode::RunningCost, kInfStep).empty());
    const IntervalTable later = build_safe_intervals(ws, std::vector<BlockedInterval>{{{2, 0}, 40, 50}});
    const auto ok = project_intervals(rest_node(later, {{1, 0}, 0, 1}, 0), set.prims[straight], set, later,
                                      CostMode::RunningCost, kInfStep);
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].depart == 0);
  }

  TEST_CASE("corridor plan equals exhaustive enumeration of move sequences") {
    const PrimitiveSet set = abstract_set({{"one", 1, 0, 10, 2.0}, {"two", 2, 0, 20, 3.0}}, 10, 1.0);
    const Workspace ws = corridor(6);
    const IntervalTable table = build_safe_intervals(ws, {});
    SippQuery q;
    q.start = {{0, 0}, 0, 0};
    q.goal = {{5, 0}, 0, 0};
    const AgentPath path = sipp_search(q, set, ws, table);

    double best = std::numeric_limits<double>::infinity();
    std::function<void(int, double, int)> enumerate = [&](int x, double c, int depth) {
      if (x == 5) best = std::min(best, c);
      if (x >= 5 || depth == 6) return;
      enumerate(x + 1, c + 2.0, depth + 1);
      enumerate(x + 2, c + 3.0, depth + 1);
    };
    enumerate(0, 0.0, 0);
    CHECK(best == 8.0);
    CHECK(path.cost == best);
    CHECK(action_sum(path, set) == best);
    CHECK(path_cost(path, set, CostMode::RunningCost) == best);
  }

  TEST_CASE("desk corridor: accelerate, cruise, brake") {
    const auto& set = testing::desk_set();
    const Workspace ws = corridor(10);
    const IntervalTable table = build_safe_intervals(ws, {});
    SippQuery q;
    q.start = {{1, 0}, 0, 0};
    q.goal = {{7, 0}, 0, 0};
    const AgentPath path = sipp_search(q, set, ws, table);
    REQUIRE(path.actions.size() >= 3);
    CHECK(set.prims[path.actions.front().prim].name == "accel");
    CHECK(set.prims[path.actions.back().prim].name == "brake");
    CHECK(path.cost == doctest::Approx(action_sum(path, set)).epsilon(1e-12));

    // Oracle: enumerate straight east-facing sequences up to depth 6.
    double best = std::numeric_limits<double>::infinity();
    std::function<void(int, int, double, int)> enumerate = [&](int x, int vel, double c, int depth) {
      if (x == 6 && vel == 0) best = std::min(best, c);
      if (x >= 6 || depth == 6) return;
      for (int id : set.applicable(0, vel)) {
        const auto& pr = set.prims[id];
        if (pr.dy() != 0 || pr.end.heading != 0) continue;
        enumerate(x + pr.dx(), pr.end.vel, c + pr.cost, depth + 1);
      }
    };
    enumerate(0, 0, 0.0, 0);
    CHECK(path.cost == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("makespan cost is the arrival time") {
    const PrimitiveSet set = abstract_set({{"one", 1, 0, 10, 2.0}, {"two", 2, 0, 20, 3.0}}, 10, 1.0);
    const Workspace ws = corridor(6);
    const IntervalTable table = build_safe_intervals(ws, {});
    SippQuery q;
    q.start = {{0, 0}, 0, 0};
    q.goal = {{5, 0}, 0, 0};
    q.mode = CostMode::Makespan;
    const AgentPath path = sipp_search(q, set, ws, table);
    CHECK(path.arrival == 50);
    CHECK(path.cost == doctest::Approx(5.0));
    CHECK(path_cost(path, set, CostMode::Makespan) == doctest::Approx(5.0));
  }

  TEST_CASE("goal blocked forever and expired deadlines") {
    const PrimitiveSet set = abstract_set({{"one", 1, 0, 10, 2.0}}, 10, 1.0);
    Workspace ws = corridor(4);
    ws.obstacles.push_back({2, 0});
    ws.rebuild_index();
    const IntervalTable table = build_safe_intervals(ws, {});
    SippQuery q;
    q.start = {{0, 0}, 0, 0};
    q.goal = {{3, 0}, 0, 0};
    CHECK_THROWS_AS(sipp_search(q, set, ws, table), NoPath);

    const Workspace open = corridor(4);
    const IntervalTable t2 = build_safe_intervals(open, {});
    q.deadline = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    CHECK_THROWS_AS(sipp_search(q, set, open, t2), Timeout);
  }

  TEST_CASE("a goal occupied later forces a detour in time, not a collision") {
    const PrimitiveSet set = abstract_set({{"east", 1, 0, 10, 1.0}, {"west", -1, 0, 10, 1.0}}, 10, 0.0);
    const Workspace ws = corridor(4);
    // Something passes through the goal on [40, 60]: resting there at 30 is unsafe.
    const IntervalTable table = build_safe_intervals(ws, std::vector<BlockedInterval>{{{3, 0}, 40, 60}});
    SippQuery q;
    q.start = {{0, 0}, 0, 0};
    q.goal = {{3, 0}, 0, 0};
    const AgentPath path = sipp_search(q, set, ws, table);
    CHECK(path.arrival > 60);
    for (const auto& occ : path_occupancy(path, set)) {
      if (occ.cell == Cell{3, 0}) CHECK((occ.last < 40 || occ.first > 60));
    }
  }

  TEST_CASE("heuristic never overestimates") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const GridInstance g = random_grid_instance(seed, 0.0);
      const IntervalTable table = build_safe_intervals(g.workspace, {});
      for (CostMode mode : {CostMode::RunningCost, CostMode::Makespan}) {
        const DistanceHeuristic h(g.workspace, g.goals[0].cell, g.set, mode);
        for (int c = 0; c < g.workspace.width; ++c) {
          for (int r = 0; r < g.workspace.height; ++r) {
            const Cell cell{c, r};
            if (!g.workspace.free(cell)) continue;
            SippQuery q;
            q.start = {cell, 0, 0};
            q.goal = g.goals[0];
            q.mode = mode;
            try {
              const AgentPath p = sipp_search(q, g.set, g.workspace, table);
              // Makespan heuristics are in steps, path costs in seconds.
              const double scale = mode == CostMode::Makespan ? g.set.step_seconds : 1.0;
              CHECK(h(cell) * scale <= p.cost + 1e-12);
            } catch (const NoPath&) {
            }
          }
        }
      }
    }
  }

  TEST_CASE("lattice heuristic equals the unconstrained optimum") {
    const auto& set = testing::desk_set();
    Workspace ws = corridor(10, 10);
    ws.obstacles = {{3, 4}, {4, 4}, {6, 6}};
    ws.rebuild_index();
    const IntervalTable table = build_safe_intervals(ws, {});
    const LatticeState goal{{5, 3}, 2, 0};
    const DistanceHeuristic cells(ws, goal.cell, set, CostMode::RunningCost);
    const DistanceHeuristic lattice(ws, goal, set, CostMode::RunningCost);
    int reached = 0;
    for (int c = 0; c < ws.width; ++c) {
      for (int r = 0; r < ws.height; ++r) {
        for (int h = 0; h < set.headings; ++h) {
          const LatticeState start{{c, r}, h, 0};
          if (!ws.free(start.cell)) continue;
          CHECK(lattice(start) >= cells(start.cell) - 1e-12);
          SippQuery q;
          q.start = start;
          q.goal = goal;
          try {
            // The cell bound drives this search, so it is an independent oracle.
            const AgentPath path = sipp_search(q, set, ws, table, &cells);
            CHECK(lattice(start) == doctest::Approx(path.cost).epsilon(1e-12));
            ++reached;
          } catch (const NoPath&) {
            CHECK(std::isinf(lattice(start)));
          }
        }
      }
    }
    CHECK(reached > 100);
  }

  TEST_CASE("path reversal round trip and trajectories") {
    const auto& set = testing::desk_set();
    const PrimitiveSet back = reverse_set(set, 0.0);
    const Workspace ws = corridor(10, 3);
    const IntervalTable table = build_safe_intervals(ws, {});
    SippQuery q;
    q.start = {{1, 1}, 0, 0};
    q.goal = {{7, 1}, 0, 0};
    const AgentPath path = sipp_search(q, set, ws, table);
    const Step t_f = path.arrival + 15;
    const AgentPath twice = reverse_path(reverse_path(path, set, back, t_f), back, set, t_f);
    REQUIRE(twice.actions.size() == path.actions.size());
    for (std::size_t i = 0; i < path.actions.size(); ++i) CHECK(twice.actions[i] == path.actions[i]);
    CHECK(twice.arrival == path.arrival);

    ModelParams p;
    const Trajectory tr = path_trajectory(path, set, p, t_f);
    CHECK(tr.size() == static_cast<std::size_t>(t_f + 1));
    CHECK(tr.samples.back().x.x == doctest::Approx(7.5));
    CHECK(tr.samples.back().x.v == 0.0);
    CHECK(dynamics_residual(tr, p) < 1e-6);
  }
}

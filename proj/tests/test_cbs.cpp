#include "doctest.h"
#include "simarr/grid_world.hpp"
#include "support.hpp"

using namespace simarr;

namespace {

// 1x5 corridor with a side pocket above the middle cell; the agents swap ends.
// Rests cost 0.5 per tick: with free rests, point constraints can always be
// dodged by waiting one more step and best-first CBS never reaches the detour.
GridInstance pocket_swap() {
  GridInstance g;
  g.workspace.width = 5;
  g.workspace.height = 2;
  for (int c : {0, 1, 3, 4}) g.workspace.obstacles.push_back({c, 1});
  g.workspace.rebuild_index();
  g.set = abstract_set({{"east", 1, 0, 10, 1.0}, {"north", 0, 1, 10, 1.0}, {"west", -1, 0, 10, 1.0},
                        {"south", 0, -1, 10, 1.0}},
                       10, 0.5);
  g.starts = {{{0, 0}, 0, 0}, {{4, 0}, 0, 0}};
  g.goals = {{{4, 0}, 0, 0}, {{0, 0}, 0, 0}};
  return g;
}

}  // namespace

TEST_SUITE("cbs") {
  TEST_CASE("constraint and aggregate helpers") {
    Conflict c;
    c.agent_i = 0;
    c.agent_j = 1;
    c.step = 12;
    c.cell = {3, 4};
    CHECK(make_constraint(c, 1) == SearchConstraint{1, {3, 4}, 12, 12});
    CHECK(make_constraint(c, 0, 2) == SearchConstraint{0, {3, 4}, 10, 14});
    std::vector<AgentPath> paths(2);
    paths[0].cost = 3.0;
    paths[1].cost = 5.0;
    CHECK(aggregate_cost(paths, Aggregate::Sum) == 8.0);
    CHECK(aggregate_cost(paths, Aggregate::Max) == 5.0);
  }

  TEST_CASE("swap through a side pocket: one agent yields, cost is the joint optimum") {
    const GridInstance g = pocket_swap();
    const MampProblem prob = g.problem(CostMode::RunningCost, Aggregate::Sum);
    const CbsResult r = cbs_solve(prob);
    CHECK_FALSE(plan_conflict(r.paths, g.set).has_value());
    CHECK(conflicting_pairs(r.paths, g.set) == 0);
    bool pocket = false;
    for (const auto& path : r.paths) {
      for (const auto& a : path.actions) pocket = pocket || g.set.prims[a.prim].name == "north";
    }
    CHECK(pocket);
    // Rests cost 0.5 per tick except after the final arrival, as in forward CBS.
    const auto bf = brute_force_optimum(g, JointObjective::SumCost, 20, true);
    REQUIRE(bf.has_value());
    CHECK(r.cost == *bf);
  }

  TEST_CASE("forward CBS matches the joint optimum when rests are free") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 40 && checked < 10; ++seed) {
      const GridInstance g = random_grid_instance(seed, 0.0);
      const auto bf = brute_force_optimum(g, JointObjective::SumCost, 16, true);
      if (!bf) continue;
      CbsOptions opts;
      opts.time_limit = 5.0;
      const CbsResult r = cbs_solve(g.problem(CostMode::RunningCost, Aggregate::Sum), opts);
      CHECK(r.cost == *bf);
      ++checked;
    }
    CHECK(checked == 10);
  }

  TEST_CASE("replanning under a constraint removes the conflict") {
    const GridInstance g = pocket_swap();
    const MampProblem prob = g.problem(CostMode::RunningCost, Aggregate::Sum);
    const IntervalTable free_table = build_safe_intervals(g.workspace, {});
    std::vector<AgentPath> paths;
    for (int i = 0; i < 2; ++i) {
      SippQuery q;
      q.start = g.starts[i];
      q.goal = g.goals[i];
      paths.push_back(sipp_search(q, g.set, g.workspace, free_table));
    }
    const auto c = plan_conflict(paths, g.set);
    REQUIRE(c.has_value());
    const std::vector<SearchConstraint> cs{make_constraint(*c, 0)};
    const IntervalTable table = build_safe_intervals(g.workspace, constraints_for(cs, 0));
    SippQuery q;
    q.start = g.starts[0];
    q.goal = g.goals[0];
    const AgentPath child = sipp_search(q, g.set, g.workspace, table);
    for (const auto& occ : path_occupancy(child, g.set)) {
      if (occ.cell == c->cell) CHECK((occ.last < c->step || occ.first > c->step));
    }
    paths[0] = child;
    const auto again = plan_conflict(paths, g.set);
    if (again) CHECK((again->cell != c->cell || again->step != c->step));
  }

  TEST_CASE("malformed problems are rejected") {
    GridInstance g = pocket_swap();
    g.goals[1] = g.goals[0];
    CHECK_THROWS_AS(g.problem(CostMode::RunningCost, Aggregate::Sum).validate(), ValidationError);
    GridInstance h = pocket_swap();
    h.starts[0].cell = {0, 1};  // obstacle
    CHECK_THROWS_AS(cbs_solve(h.problem(CostMode::RunningCost, Aggregate::Sum)), ValidationError);
  }

  TEST_CASE("an unsolvable swap ends with Infeasible or Timeout") {
    GridInstance g;
    g.workspace.width = 2;
    g.workspace.height = 1;
    g.workspace.rebuild_index();
    g.set = abstract_set({{"east", 1, 0, 10, 1.0}, {"west", -1, 0, 10, 1.0}}, 10, 0.0);
    g.starts = {{{0, 0}, 0, 0}, {{1, 0}, 0, 0}};
    g.goals = {{{1, 0}, 0, 0}, {{0, 0}, 0, 0}};
    CbsOptions opts;
    opts.time_limit = 2.0;
    opts.max_nodes = 2000;
    try {
      cbs_solve(g.problem(CostMode::RunningCost, Aggregate::Sum), opts);
      FAIL("expected failure");
    } catch (const Infeasible&) {
    } catch (const Timeout&) {
    }
  }

  TEST_CASE("worker count does not change the solution") {
    const auto prob = testing::passing_problem();
    CbsOptions one, two;
    two.workers = 2;
    const CbsResult a = cbs_solve(prob, one);
    const CbsResult b = cbs_solve(prob, two);
    CHECK(a.cost == b.cost);
    REQUIRE(a.paths.size() == b.paths.size());
    for (std::size_t i = 0; i < a.paths.size(); ++i) CHECK(a.paths[i].actions == b.paths[i].actions);
  }
}

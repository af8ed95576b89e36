#include "simarr/cbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "simarr/errors.hpp"

namespace simarr {

void MampProblem::validate() const {
  std::vector<std::string> bad;
  if (prims == nullptr) bad.push_back("no primitive set");
  if (starts.size() != goals.size()) bad.push_back("start/goal count mismatch");
  if (starts.empty()) bad.push_back("no agents");
  auto check_unique = [&](const std::vector<LatticeState>& v, const char* what) {
    std::set<Cell> seen;
    for (const auto& s : v) {
      if (!workspace.free(s.cell)) {
        bad.push_back(std::string(what) + " cell (" + std::to_string(s.cell.col) + ", " + std::to_string(s.cell.row) +
                      ") is not free");
      }
      if (!seen.insert(s.cell).second) bad.push_back(std::string(what) + " cells overlap");
      if (!s.at_rest()) bad.push_back(std::string(what) + " states must be at rest");
    }
  };
  check_unique(starts, "start");
  check_unique(goals, "goal");
  if (!bad.empty()) {
    std::string msg = "invalid problem:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ValidationError(msg);
  }
}

SearchConstraint make_constraint(const Conflict& c, int agent_index, Step halfwidth) {
  if (agent_index != c.agent_i && agent_index != c.agent_j) {
    throw PreconditionViolation("agent is not part of the conflict");
  }
  return {agent_index, c.cell, std::max<Step>(0, c.step - halfwidth), c.step + halfwidth};
}

double aggregate_cost(std::span<const AgentPath> paths, Aggregate agg) {
  double total = 0.0;
  for (const auto& p : paths) total = agg == Aggregate::Sum ? total + p.cost : std::max(total, p.cost);
  return total;
}

std::optional<Conflict> plan_conflict(std::span<const AgentPath> paths, const PrimitiveSet& set) {
  std::vector<std::vector<CellInterval>> occ;
  std::vector<Step> finals(paths.size(), kInfStep);
  for (const auto& p : paths) occ.push_back(path_occupancy(p, set));
  return first_conflict(occ, finals, set.step_seconds);
}

int conflicting_pairs(std::span<const AgentPath> paths, const PrimitiveSet& set) {
  int count = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t j = i + 1; j < paths.size(); ++j) {
      const AgentPath pair[2] = {paths[i], paths[j]};
      if (plan_conflict(pair, set)) ++count;
    }
  }
  return count;
}

namespace {

std::optional<Conflict> node_conflict(const std::vector<std::vector<CellInterval>>& occ, double step_seconds) {
  const std::vector<Step> finals(occ.size(), kInfStep);
  return first_conflict(occ, finals, step_seconds);
}

// Overlapping episode pairs over all agent pairs; zero iff conflict free.
int count_overlaps(const Workspace& ws, const std::vector<std::vector<CellInterval>>& occ) {
  int count = 0;
  for (std::size_t j = 1; j < occ.size(); ++j) {
    const ConflictAvoidance earlier(ws, std::span(occ.data(), j));
    for (const auto& e : occ[j]) count += earlier.count(e.cell, e.first, e.last);
  }
  return count;
}

// A primitive execution occupying the conflict cell at the conflict step.
struct Motion {
  const MotionPrimitive* prim = nullptr;
  Cell from;
  Step depart = 0;
};

std::optional<Motion> motion_at(const AgentPath& path, const PrimitiveSet& set, Cell c, Step s) {
  for (const auto& a : path.actions) {
    const auto& pr = set.prims[a.prim];
    for (const auto& sw : pr.sweeps) {
      const Cell at{a.cell.col + sw.dx, a.cell.row + sw.dy};
      if (at == c && a.depart + sw.ftt <= s && s <= a.depart + sw.last()) return Motion{&pr, a.cell, a.depart};
    }
  }
  return std::nullopt;
}

// Latest departure of `m`'s primitive that still occupies `c` at step s.
Step latest_covering_depart(const Motion& m, Cell c, Step s) {
  Step best = m.depart;
  for (const auto& sw : m.prim->sweeps) {
    const Cell at{m.from.col + sw.dx, m.from.row + sw.dy};
    if (at == c && m.depart + sw.ftt <= s && s <= m.depart + sw.last()) best = std::max(best, s - sw.ftt);
  }
  return best;
}

struct CtNode {
  std::vector<SearchConstraint> constraints;
  std::vector<Step> min_arrival;  // per agent
  std::vector<AgentPath> paths;
  std::vector<std::vector<CellInterval>> occupancy;  // per agent, from paths
  double cost = 0.0;
  int overlaps = 0;  // tie-breaker among equal costs
  std::size_t seq = 0;
};

}  // namespace

CbsResult cbs_solve(const MampProblem& prob, const CbsOptions& opts) {
  prob.validate();
  const auto& set = *prob.prims;
  const auto t0 = std::chrono::steady_clock::now();
  // A non-finite limit means no deadline.
  const auto deadline = std::isfinite(opts.time_limit)
                            ? t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(opts.time_limit))
                            : std::chrono::steady_clock::time_point::max();
  const int K = prob.agents();

  std::vector<DistanceHeuristic> heur;
  heur.reserve(K);
  for (int i = 0; i < K; ++i) heur.emplace_back(prob.workspace, prob.goals[i], set, prob.mode);

  auto plan_agent = [&](int i, const CtNode& node) {
    const auto blocked = constraints_for(node.constraints, i);
    const auto bans = action_bans_for(node.constraints, i);
    const IntervalTable table(prob.workspace, blocked, bans);
    std::vector<std::vector<CellInterval>> others;
    for (int j = 0; j < static_cast<int>(node.occupancy.size()); ++j) {
      if (j != i) others.push_back(node.occupancy[j]);
    }
    const ConflictAvoidance avoid(prob.workspace, others);
    SippQuery q;
    q.start = prob.starts[i];
    q.goal = prob.goals[i];
    q.mode = prob.mode;
    q.min_arrival = node.min_arrival[i];
    q.deadline = deadline;
    q.avoid = &avoid;
    return sipp_search(q, set, prob.workspace, table, &heur[i]);
  };

  CbsResult res;
  std::vector<std::unique_ptr<CtNode>> nodes;
  auto root = std::make_unique<CtNode>();
  root->paths.resize(K);
  root->min_arrival.assign(K, 0);
  for (int i = 0; i < K; ++i) {
    try {
      root->paths[i] = plan_agent(i, *root);
      root->occupancy.push_back(path_occupancy(root->paths[i], set));
    } catch (const NoPath& e) {
      throw Infeasible("agent " + std::to_string(i) + " has no path: " + e.what());
    }
  }
  root->cost = aggregate_cost(root->paths, prob.aggregate);
  root->overlaps = count_overlaps(prob.workspace, root->occupancy);
  nodes.push_back(std::move(root));

  auto worse = [&](std::size_t a, std::size_t b) {
    const CtNode& x = *nodes[a];
    const CtNode& y = *nodes[b];
    if (x.cost != y.cost) return x.cost > y.cost;
    if (x.overlaps != y.overlaps) return x.overlaps > y.overlaps;
    return x.seq > y.seq;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> open(worse);
  open.push(0);
  res.generated = 1;

  while (!open.empty()) {
    if (std::chrono::steady_clock::now() > deadline) throw Timeout("cbs time limit reached");
    if (nodes.size() > opts.max_nodes) throw Timeout("cbs node cap reached");
    const std::size_t idx = open.top();
    open.pop();
    ++res.expanded;
    const CtNode& node = *nodes[idx];
    const auto conflict = node_conflict(node.occupancy, set.step_seconds);
    if (!conflict) {
      res.paths = node.paths;
      res.cost = node.cost;
      return res;
    }
    int involved[2] = {conflict->agent_i, conflict->agent_j};
    // Target conflict: one agent already rests at its goal. Either it arrives
    // after the conflict step, or the other agent keeps off that cell from
    // the conflict step on. Every solution satisfies one of the two.
    int target = -1;
    for (int c = 0; c < 2; ++c) {
      const int a = involved[c];
      if (conflict->cell == prob.goals[a].cell && conflict->step >= node.paths[a].arrival) target = c;
    }
    if (target == 1) std::swap(involved[0], involved[1]);
    // Ordinary split. When both agents execute a primitive, the one that
    // departed later (i) yields: either i stays out of the other's (j's)
    // swept cells while that execution occupies them, or j does not depart
    // that primitive then. Any plan breaking both collides, and the first
    // child covers every way i could pass. A resting agent gets a point
    // constraint, and its moving partner a ban on the departures that still
    // cover the conflict step.
    std::vector<SearchConstraint> split[2];
    if (target < 0) {
      std::optional<Motion> m[2];
      for (int c = 0; c < 2; ++c) {
        split[c] = {make_constraint(*conflict, involved[c], opts.constraint_halfwidth)};
        if (opts.constraint_halfwidth == 0) m[c] = motion_at(node.paths[involved[c]], set, conflict->cell, conflict->step);
      }
      if (m[0] && m[1]) {
        const int yj = m[0]->depart <= m[1]->depart ? 0 : 1;
        const int yi = 1 - yj;
        const Motion& mj = *m[yj];
        split[yi].clear();
        for (const auto& sw : mj.prim->sweeps) {
          split[yi].push_back({involved[yi], {mj.from.col + sw.dx, mj.from.row + sw.dy}, mj.depart + sw.ftt,
                               mj.depart + sw.last()});
        }
        split[yj] = {{involved[yj], mj.from, mj.depart, mj.depart, mj.prim->id}};
      } else {
        for (int c = 0; c < 2; ++c) {
          if (!m[c]) continue;
          split[c] = {{involved[c], m[c]->from, m[c]->depart,
                       latest_covering_depart(*m[c], conflict->cell, conflict->step), m[c]->prim->id}};
        }
      }
    }
    std::unique_ptr<CtNode> children[2];
    std::exception_ptr errors[2];
#pragma omp parallel for num_threads(std::max(1, std::min(2, opts.workers))) schedule(static)
    for (int c = 0; c < 2; ++c) {
      const int agent = involved[c];
      auto child = std::make_unique<CtNode>();
      child->constraints = node.constraints;
      child->min_arrival = node.min_arrival;
      if (target < 0) {
        child->constraints.insert(child->constraints.end(), split[c].begin(), split[c].end());
      } else if (c == 0) {
        child->min_arrival[agent] = std::max(child->min_arrival[agent], conflict->step + 1);
      } else {
        child->constraints.push_back({agent, conflict->cell, conflict->step, kInfStep});
      }
      child->paths = node.paths;
      child->occupancy = node.occupancy;
      try {
        child->paths[agent] = plan_agent(agent, *child);
        child->occupancy[agent] = path_occupancy(child->paths[agent], set);
        child->cost = aggregate_cost(child->paths, prob.aggregate);
        child->overlaps = count_overlaps(prob.workspace, child->occupancy);
        children[c] = std::move(child);
      } catch (const NoPath&) {
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (auto& ch : children) {
      if (!ch) continue;
      ch->seq = nodes.size();
      nodes.push_back(std::move(ch));
      open.push(nodes.size() - 1);
      ++res.generated;
    }
  }
  throw Infeasible("conflict tree exhausted");
}

}  // namespace simarr

#include "simarr/sim_arrival.hpp"

#include <algorithm>

#include "simarr/errors.hpp"

namespace simarr {

double sync_cost(const SyncPlan& plan, const PrimitiveSet& set, CostMode mode, Aggregate agg) {
  double total = 0.0;
  for (const auto& p : plan.paths) {
    const double c = path_cost(p, set, mode);
    total = agg == Aggregate::Sum ? total + c : std::max(total, c);
  }
  return total;
}

SyncPlan reverse_plan(std::span<const AgentPath> backward, const PrimitiveSet& backward_set,
                      const PrimitiveSet& forward_set, Step t_f) {
  SyncPlan out;
  out.t_f = t_f;
  for (const auto& b : backward) {
    if (b.arrival > t_f) throw PreconditionViolation("t_f precedes an agent's arrival");
    AgentPath f = reverse_path(b, backward_set, forward_set, t_f);
    out.padding.push_back(t_f - b.arrival);
    out.paths.push_back(std::move(f));
  }
  return out;
}

SyncPlan solve_simultaneous(const MampProblem& prob, const CbsOptions& opts) {
  if (prob.prims == nullptr) throw ValidationError("no primitive set");
  for (const auto& s : prob.starts) {
    if (!s.at_rest()) throw PreconditionViolation("every agent must start at rest");
  }
  const PrimitiveSet backward_set = reverse_set(*prob.prims, prob.prims->cell_size);
  MampProblem back = prob;
  back.starts = prob.goals;
  back.goals = prob.starts;
  back.prims = &backward_set;
  const CbsResult res = cbs_solve(back, opts);

  Step t_f = 0;
  for (const auto& p : res.paths) t_f = std::max(t_f, p.arrival);
  SyncPlan plan = reverse_plan(res.paths, backward_set, *prob.prims, t_f);
  plan.backward_cost = res.cost;
  plan.cbs_expanded = res.expanded;
  for (auto& p : plan.paths) p.cost = path_cost(p, *prob.prims, prob.mode);
  plan.cost = sync_cost(plan, *prob.prims, prob.mode, prob.aggregate);
  return plan;
}

BaselinePlan solve_baseline(const MampProblem& prob, const CbsOptions& opts) {
  const CbsResult res = cbs_solve(prob, opts);
  BaselinePlan out;
  Step t_f = 0;
  for (const auto& p : res.paths) t_f = std::max(t_f, p.arrival);
  out.plan.t_f = t_f;
  for (AgentPath p : res.paths) {
    const Step pad = t_f - p.arrival;
    for (auto& a : p.actions) a.depart += pad;
    p.start_step += pad;
    p.arrival = t_f;
    p.cost = path_cost(p, *prob.prims, prob.mode);
    out.plan.padding.push_back(pad);
    out.plan.paths.push_back(std::move(p));
  }
  out.plan.backward_cost = res.cost;
  out.plan.cost = sync_cost(out.plan, *prob.prims, prob.mode, prob.aggregate);
  out.collides = plan_conflict(out.plan.paths, *prob.prims).has_value();
  return out;
}

}  // namespace simarr

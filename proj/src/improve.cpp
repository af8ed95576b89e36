#include "simarr/improve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "simarr/errors.hpp"

namespace simarr {

const char* to_string(ImproveMode m) { return m == ImproveMode::Distributed ? "distributed" : "centralized"; }

void ImproveConfig::validate() const {
  if (!(step > 0.0 && step <= horizon)) throw SpecError("improvement needs 0 < step <= horizon");
  if (knots < 2) throw SpecError("improvement needs at least two knots");
  if (!(t_min_ratio > 0.0 && t_min_ratio <= 1.0)) throw SpecError("t_min_ratio must lie in (0, 1]");
  nadmm.validate();
}

ContinuousPlan to_continuous(const SyncPlan& plan, const PrimitiveSet& set, const ModelParams& p) {
  ContinuousPlan out;
  for (const auto& path : plan.paths) {
    out.trajectories.push_back(path_trajectory(path, set, p, plan.t_f));
    out.goals.push_back(lattice_embedding(path.goal, set, p));
  }
  out.t_f = static_cast<double>(plan.t_f) * p.sample_dt;
  return out;
}

double plan_cost(const ContinuousPlan& plan) {
  double J = 0.0;
  for (const auto& t : plan.trajectories) J += trajectory_cost(t);
  return J;
}

namespace {

// Distance from a point to the closed square of a cell.
double distance_to_cell(Point2 q, Cell c, const ModelParams& p) {
  const double x0 = c.col * p.cell_size;
  const double y0 = c.row * p.cell_size;
  const double dx = std::max({x0 - q.x, 0.0, q.x - (x0 + p.cell_size)});
  const double dy = std::max({y0 - q.y, 0.0, q.y - (y0 + p.cell_size)});
  return std::hypot(dx, dy);
}

// Empty string when the disc at q clears the boundary and every obstacle.
std::string disc_clear(Point2 q, const Workspace& ws, const ModelParams& p, double tol) {
  const double r = p.radius();
  const double W = ws.width * p.cell_size;
  const double H = ws.height * p.cell_size;
  if (q.x - r < -tol || q.y - r < -tol || q.x + r > W + tol || q.y + r > H + tol) return "leaves the workspace";
  const int c0 = static_cast<int>(std::floor((q.x - r) / p.cell_size));
  const int c1 = static_cast<int>(std::floor((q.x + r) / p.cell_size));
  const int r0 = static_cast<int>(std::floor((q.y - r) / p.cell_size));
  const int r1 = static_cast<int>(std::floor((q.y + r) / p.cell_size));
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      const Cell c{col, row};
      if (ws.in_bounds(c) && ws.blocked(c) && distance_to_cell(q, c, p) < r - tol) return "hits an obstacle";
    }
  }
  return {};
}

}  // namespace

FeasibilityReport check_plan(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                             const FeasibilityTolerances& tol) {
  FeasibilityReport rep;
  rep.min_distance = std::numeric_limits<double>::infinity();
  auto fail = [&](std::string why) {
    if (rep.ok) {
      rep.ok = false;
      rep.reason = std::move(why);
    }
  };
  const std::size_t K = plan.agents();
  if (K == 0) return rep;
  if (plan.goals.size() != K) fail("goal count mismatch");
  const auto& ref = plan.trajectories.front();
  for (std::size_t i = 0; i < K; ++i) {
    const auto& tr = plan.trajectories[i];
    const std::string who = "agent " + std::to_string(i) + " ";
    if (tr.size() != ref.size()) {
      fail(who + "has a different sample grid");
      return rep;
    }
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (tr.samples[k].t != ref.samples[k].t) {
        fail(who + "has a different sample grid");
        return rep;
      }
    }
    const double res = dynamics_residual(tr, p);
    rep.max_residual = std::max(rep.max_residual, res);
    if (res > tol.dynamics) fail(who + "violates the dynamics");
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (!within_state_bounds(tr.samples[k].x, p, tol.bounds)) fail(who + "exceeds state bounds");
      if (k + 1 < tr.size() && !within_control_bounds(tr.samples[k].u, p, tol.bounds)) {
        fail(who + "exceeds control bounds");
      }
    }
    if (i < plan.goals.size() && state_distance(tr.final_state(), plan.goals[i]) > tol.goal) {
      fail(who + "does not end at its goal");
    }
  }
  const int den = std::max(1, tol.dense_points);
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const int steps = k + 1 < ref.size() ? den : 1;
    for (int m = 0; m < steps; ++m) {
      std::vector<Point2> pts(K);
      for (std::size_t i = 0; i < K; ++i) {
        pts[i] = interpolate_position(plan.trajectories[i], k, m, den, p);
        const std::string why = disc_clear(pts[i], ws, p, tol.obstacle);
        if (!why.empty()) fail("agent " + std::to_string(i) + " " + why);
      }
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i + 1; j < K; ++j) {
          const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
          rep.min_distance = std::min(rep.min_distance, d);
          if (d < 2.0 * p.radius() - tol.clearance) {
            fail("agents " + std::to_string(i) + " and " + std::to_string(j) + " collide");
          }
        }
      }
    }
  }
  return rep;
}

Window snap_window(const ContinuousPlan& plan, double t_start, double horizon) {
  const auto& s = plan.trajectories.front().samples;
  auto nearest = [&](double t) {
    auto it = std::lower_bound(s.begin(), s.end(), t, [](const TrajectorySample& a, double v) { return a.t < v; });
    if (it == s.end()) return s.size() - 1;
    std::size_t i = static_cast<std::size_t>(it - s.begin());
    if (i > 0 && t - s[i - 1].t < s[i].t - t) --i;
    return i;
  };
  Window w;
  w.first = nearest(t_start);
  w.last = nearest(s[w.first].t + horizon);
  return w;
}

ContinuousPlan splice_candidate(const ContinuousPlan& current, const Window& w,
                                const std::vector<Trajectory>& window_trajs, const ModelParams& p,
                                double boundary_tol) {
  const std::size_t K = current.agents();
  if (window_trajs.size() != K) throw SpliceMismatch("one window trajectory per agent is required");
  if (w.last <= w.first || w.last >= current.trajectories.front().size()) throw SpliceMismatch("bad window");
  const double T_star = window_trajs.front().duration();
  ContinuousPlan out;
  out.goals = current.goals;
  for (std::size_t i = 0; i < K; ++i) {
    const auto& cur = current.trajectories[i].samples;
    const auto& win = window_trajs[i].samples;
    if (window_trajs[i].duration() != T_star) throw SpliceMismatch("window durations differ between agents");
    if (state_distance(win.front().x, cur[w.first].x) > boundary_tol ||
        state_distance(win.back().x, cur[w.last].x) > boundary_tol) {
      throw SpliceMismatch("window boundary states do not match agent " + std::to_string(i));
    }
    const double t_s = cur[w.first].t;
    const double dT = (cur[w.last].t - t_s) - T_star;
    // Keep stored time stamps when the window keeps the stored grid.
    const bool same_grid = dT == 0.0 && win.size() == w.last - w.first + 1 &&
                           std::equal(win.begin(), win.end(), cur.begin() + w.first,
                                      [&](const TrajectorySample& a, const TrajectorySample& b) {
                                        return a.t == b.t - t_s;
                                      });

    Trajectory tr;
    tr.samples.assign(cur.begin(), cur.begin() + w.first);
    for (std::size_t m = 0; m + 1 < win.size(); ++m) {
      TrajectorySample s = win[m];
      s.t = same_grid ? cur[w.first + m].t : t_s + win[m].t;
      if (m == 0) s.x = cur[w.first].x;
      tr.samples.push_back(s);
    }
    const AugmentedState& x_end = win.back().x;
    if (dT == 0.0 && x_end == cur[w.last].x) {
      tr.samples.insert(tr.samples.end(), cur.begin() + w.last, cur.end());
    } else {
      AugmentedState x = x_end;
      for (std::size_t j = w.last; j < cur.size(); ++j) {
        TrajectorySample s = cur[j];
        s.t = cur[j].t - dT;
        s.x = x;
        tr.samples.push_back(s);
        if (j + 1 < cur.size()) x = integrate_interval(x, cur[j].u, cur[j + 1].t - cur[j].t, p);
      }
    }
    tr.samples.back().u = {};
    out.trajectories.push_back(std::move(tr));
  }
  out.t_f = out.trajectories.front().samples.back().t;
  return out;
}

bool accept_candidate(const ContinuousPlan& candidate, const ContinuousPlan& current, const Workspace& ws,
                      const ModelParams& p, const FeasibilityTolerances& tol) {
  if (!check_plan(candidate, ws, p, tol).ok) return false;
  return plan_cost(candidate) <= plan_cost(current);
}

namespace {

Trajectory sub_trajectory(const Trajectory& tr, const Window& w) {
  Trajectory out;
  const double t0 = tr.samples[w.first].t;
  for (std::size_t k = w.first; k <= w.last; ++k) {
    TrajectorySample s = tr.samples[k];
    s.t -= t0;
    out.samples.push_back(s);
  }
  return out;
}

}  // namespace

WindowProblem window_problem(const ContinuousPlan& plan, const Window& w, const Workspace& ws,
                             const ModelParams& p, int knots, double t_min_ratio) {
  if (plan.agents() == 0 || w.last <= w.first) throw SpecError("empty window");
  const auto& ref = plan.trajectories.front().samples;
  const double T_w = ref.at(w.last).t - ref.at(w.first).t;
  WindowProblem out;
  out.spec.knots = knots;
  out.spec.t_min = t_min_ratio * T_w;
  out.spec.t_max = T_w;
  out.spec.active_pairs = SegmentSpec::all_pairs(static_cast<int>(plan.agents()));
  out.spec.workspace = ws;
  out.spec.params = p;
  for (const auto& tr : plan.trajectories) {
    out.warm.push_back(sub_trajectory(tr, w));
    out.spec.agents.push_back({out.warm.back().samples.front().x, out.warm.back().samples.back().x});
  }
  return out;
}

ImproveResult improve(const ContinuousPlan& plan, const Workspace& ws, const ModelParams& p,
                      const ImproveConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  ImproveResult res;
  res.plan = plan;
  res.initial_cost = plan_cost(plan);
  res.initial_t_f = plan.t_f;
  if (plan.agents() == 0) return res;
  double J = res.initial_cost;
  const int K = static_cast<int>(plan.agents());
  const double eps = 1e-9;

  for (int k = 0; k < cfg.max_iterations; ++k) {
    const double t_start = k * cfg.step;
    double horizon = cfg.horizon;
    if (t_start + horizon > res.plan.t_f + eps) {
      if (k > 0) break;
      horizon = res.plan.t_f;  // one window over the whole plan
    }
    const Window w = snap_window(res.plan, t_start, horizon);
    if (w.last <= w.first) break;

    ImproveIteration it;
    it.k = k;
    it.mode = cfg.mode;
    const auto t0 = Clock::now();
    try {
      const auto [spec, warm] = window_problem(res.plan, w, ws, p, cfg.knots, cfg.t_min_ratio);
      const WindowSolution sol = cfg.mode == ImproveMode::Distributed
                                     ? nadmm_improve_window(spec, warm, cfg.nadmm)
                                     : central_improve_window(spec, warm, cfg.central, cfg.nadmm.violation_tol);
      it.rounds = sol.records;
      std::vector<Trajectory> window_trajs;
      for (int i = 0; i < K; ++i) {
        std::vector<ControlInput> u = sol.trajectories[i].u;
        const double err = shoot_to_target(spec.agents[i].start, u, sol.duration, spec.agents[i].end, p);
        if (err > cfg.shoot_tol) throw WindowFailed("shooting did not reach the window end");
        window_trajs.push_back(rollout(spec.agents[i].start, u, sol.duration, p, 0.0, p.sample_dt));
      }
      it.window_duration = sol.duration;
      ContinuousPlan cand = splice_candidate(res.plan, w, window_trajs, p);
      const FeasibilityReport rep = check_plan(cand, ws, p, cfg.tolerances);
      const double Jc = plan_cost(cand);
      if (!rep.ok) {
        it.note = "rejected: " + rep.reason;
      } else if (Jc > J) {
        it.note = "rejected: cost increase";
      } else {
        res.plan = std::move(cand);
        J = Jc;
        it.accepted = true;
      }
    } catch (const Error& e) {
      it.note = std::string("window failed: ") + e.what();
    }
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    it.wall_time = cfg.record_timing ? wall : 0.0;
    if (k == 0) res.first_window_latency = it.wall_time;
    it.cost = J;
    it.t_f = res.plan.t_f;
    res.iterations.push_back(std::move(it));
  }
  return res;
}

void write_improve_csv(std::ostream& os, const std::vector<ImproveIteration>& iterations) {
  os << "k,mode,window_duration,accepted,J,t_f,wall_time\n";
  const auto prec = os.precision(12);
  for (const auto& it : iterations) {
    os << it.k << ',' << to_string(it.mode) << ',' << it.window_duration << ',' << (it.accepted ? 1 : 0) << ','
       << it.cost << ',' << it.t_f << ',' << it.wall_time << '\n';
  }
  os.precision(prec);
}

}  // namespace simarr

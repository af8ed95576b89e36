#include "simarr/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "simarr/errors.hpp"

namespace simarr {

void ModelParams::validate() const {
  std::ostringstream bad;
  if (!(wheelbase > 0.0)) bad << " wheelbase must be > 0;";
  if (!(cell_size > 0.0)) bad << " cell_size must be > 0;";
  if (!(sample_dt > 0.0)) bad << " sample_dt must be > 0;";
  for (double b : {alpha_max, omega_max, v_max, a_max, u_omega_max, u_a_max}) {
    if (!std::isfinite(b) || b <= 0.0) {
      bad << " state/control bounds must be finite and positive;";
      break;
    }
  }
  if (!(radius() > 0.0)) bad << " footprint radius must be > 0;";
  if (!bad.str().empty()) throw ValidationError("invalid model parameters:" + bad.str());
}

bool Workspace::blocked(Cell c) const {
  if (!in_bounds(c)) return true;
  if (occupancy_.size() == static_cast<std::size_t>(width) * height) {
    return occupancy_[static_cast<std::size_t>(c.row) * width + c.col] != 0;
  }
  return std::find(obstacles.begin(), obstacles.end(), c) != obstacles.end();
}

void Workspace::rebuild_index() {
  occupancy_.assign(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), 0);
  for (const Cell& c : obstacles) {
    if (in_bounds(c)) occupancy_[static_cast<std::size_t>(c.row) * width + c.col] = 1;
  }
}

void Workspace::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("workspace dimensions must be positive");
  for (const Cell& c : obstacles) {
    if (!in_bounds(c)) {
      throw ValidationError("obstacle cell (" + std::to_string(c.col) + ", " + std::to_string(c.row) +
                            ") outside workspace");
    }
  }
}

Point2 cell_center(Cell c, const ModelParams& p) {
  return {(c.col + 0.5) * p.cell_size, (c.row + 0.5) * p.cell_size};
}

Cell cell_of(Point2 pt, const ModelParams& p) {
  return {static_cast<int>(std::floor(pt.x / p.cell_size)), static_cast<int>(std::floor(pt.y / p.cell_size))};
}

double normalize_angle(double theta) {
  double r = std::remainder(theta, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

AugmentedState dynamics(const AugmentedState& x, const ControlInput& u, const ModelParams& p) {
  AugmentedState d;
  d.x = x.v * std::cos(x.theta);
  d.y = x.v * std::sin(x.theta);
  d.theta = x.v * std::tan(x.alpha) / p.wheelbase;
  d.alpha = x.omega;
  d.omega = u.u_omega;
  d.v = x.a;
  d.a = u.u_a;
  return d;
}

namespace {

AugmentedState axpy(const AugmentedState& x, double h, const AugmentedState& d) {
  return {x.x + h * d.x, x.y + h * d.y, x.theta + h * d.theta, x.alpha + h * d.alpha,
          x.omega + h * d.omega, x.v + h * d.v, x.a + h * d.a};
}

AugmentedState rk4_raw(const AugmentedState& s, const ControlInput& u, double dt, const ModelParams& p) {
  const AugmentedState k1 = dynamics(s, u, p);
  const AugmentedState k2 = dynamics(axpy(s, 0.5 * dt, k1), u, p);
  const AugmentedState k3 = dynamics(axpy(s, 0.5 * dt, k2), u, p);
  const AugmentedState k4 = dynamics(axpy(s, dt, k3), u, p);
  const double w = dt / 6.0;
  AugmentedState r;
  r.x = s.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
  r.y = s.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
  r.theta = s.theta + w * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
  r.alpha = s.alpha + w * (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha);
  r.omega = s.omega + w * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega);
  r.v = s.v + w * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
  r.a = s.a + w * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
  r.theta = normalize_angle(r.theta);
  return r;
}

}  // namespace

bool within_state_bounds(const AugmentedState& x, const ModelParams& p, double tol) {
  return std::abs(x.alpha) <= p.alpha_max + tol && std::abs(x.omega) <= p.omega_max + tol &&
         std::abs(x.v) <= p.v_max + tol && std::abs(x.a) <= p.a_max + tol;
}

bool within_control_bounds(const ControlInput& u, const ModelParams& p, double tol) {
  return std::abs(u.u_omega) <= p.u_omega_max + tol && std::abs(u.u_a) <= p.u_a_max + tol;
}

void check_state_bounds(const AugmentedState& x, const ModelParams& p) {
  if (!within_state_bounds(x, p, p.bound_tolerance)) {
    std::ostringstream os;
    os << "state exceeds bounds: alpha=" << x.alpha << " omega=" << x.omega << " v=" << x.v << " a=" << x.a;
    throw BoundsViolation(os.str());
  }
}

AugmentedState integrate_dynamics(const AugmentedState& state, const ControlInput& u, double dt,
                                  const ModelParams& p) {
  if (!(dt > 0.0)) throw PreconditionViolation("integrate_dynamics: dt must be positive");
  AugmentedState r = rk4_raw(state, u, dt, p);
  check_state_bounds(r, p);
  return r;
}

AugmentedState integrate_interval(const AugmentedState& state, const ControlInput& u, double h,
                                  const ModelParams& p) {
  if (h <= 0.0) return state;
  const int n = std::max(1, static_cast<int>(std::ceil(h / 0.05 - 1e-9)));
  const double dt = h / n;
  AugmentedState s = state;
  for (int i = 0; i < n; ++i) s = rk4_raw(s, u, dt, p);
  return s;
}

double running_cost(const AugmentedState& x, const ControlInput& u) {
  return 1.0 + 0.5 * (x.alpha * x.alpha + 10.0 * x.omega * x.omega + x.a * x.a + u.u_omega * u.u_omega +
                      u.u_a * u.u_a);
}

double trajectory_cost(const Trajectory& traj) {
  if (traj.empty()) throw EmptyTrajectory("trajectory_cost of an empty trajectory");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const auto& s0 = traj.samples[k];
    const auto& s1 = traj.samples[k + 1];
    const double h = s1.t - s0.t;
    sum += 0.5 * h * (running_cost(s0.x, s0.u) + running_cost(s1.x, s0.u));
  }
  return sum;
}

double dynamics_residual(const Trajectory& traj, const ModelParams& p) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const auto& s0 = traj.samples[k];
    const auto& s1 = traj.samples[k + 1];
    const AugmentedState pred = integrate_interval(s0.x, s0.u, s1.t - s0.t, p);
    const auto a = pred.to_array();
    const auto b = s1.x.to_array();
    for (int i = 0; i < AugmentedState::kDim; ++i) {
      double d = a[i] - b[i];
      if (i == 2) d = normalize_angle(d);
      worst = std::max(worst, std::abs(d));
    }
  }
  return worst;
}

namespace {

// a^2 (3 - 2a): Hermite basis for the far endpoint.
double h_pos(double a) { return a * a * (3.0 - 2.0 * a); }
// a * b^2: Hermite tangent basis.
double h_tan(double a, double b) { return a * b * b; }

double rounded_interval(double h) { return std::round(h * 1e9) / 1e9; }

}  // namespace

Point2 interpolate_position(const Trajectory& traj, std::size_t k, int num, int den, const ModelParams& p) {
  (void)p;
  const auto& s0 = traj.samples[k];
  if (num == 0 || k + 1 >= traj.size()) return {s0.x.x, s0.x.y};
  const auto& s1 = traj.samples[k + 1];
  if (num == den) return {s1.x.x, s1.x.y};
  const double s = static_cast<double>(num) / den;
  const double sb = static_cast<double>(den - num) / den;
  const double h = rounded_interval(s1.t - s0.t);
  const double sign = traj.reversed ? -1.0 : 1.0;
  const double m0x = sign * (h * s0.x.v * std::cos(s0.x.theta));
  const double m0y = sign * (h * s0.x.v * std::sin(s0.x.theta));
  const double m1x = sign * (h * s1.x.v * std::cos(s1.x.theta));
  const double m1y = sign * (h * s1.x.v * std::sin(s1.x.theta));
  const double f0 = h_pos(sb);
  const double f1 = h_pos(s);
  const double g0 = h_tan(s, sb);
  const double g1 = h_tan(sb, s);
  Point2 r;
  r.x = (f0 * s0.x.x + f1 * s1.x.x) + (g0 * m0x - g1 * m1x);
  r.y = (f0 * s0.x.y + f1 * s1.x.y) + (g0 * m0y - g1 * m1y);
  return r;
}

Step to_step_floor(double t, double dt) { return static_cast<Step>(std::floor(t / dt + 1e-9)); }
Step to_step_ceil(double t, double dt) { return static_cast<Step>(std::ceil(t / dt - 1e-9)); }

namespace {

constexpr double kDenseSeconds = 1e-3;

struct OpenEpisode {
  Step first;
  Step last;
  bool touching;
};

}  // namespace

std::vector<CellInterval> swept_cells(const Trajectory& traj, const ModelParams& p, const Workspace* ws,
                                      Point2 origin) {
  std::vector<CellInterval> out;
  if (traj.empty()) return out;
  const double cs = p.cell_size;
  const double r = p.radius();
  const double r2 = r * r;
  const double dt = p.sample_dt;
  const double t0 = traj.samples.front().t;

  std::map<Cell, std::vector<CellInterval>> episodes;
  std::map<Cell, bool> touched_prev;

  auto visit = [&](Point2 pt, Step lo, Step hi) {
    const int c0 = static_cast<int>(std::floor((pt.x - r - origin.x) / cs));
    const int c1 = static_cast<int>(std::floor((pt.x + r - origin.x) / cs));
    const int r0 = static_cast<int>(std::floor((pt.y - r - origin.y) / cs));
    const int r1 = static_cast<int>(std::floor((pt.y + r - origin.y) / cs));
    std::vector<Cell> now;
    for (int c = c0; c <= c1; ++c) {
      for (int w = r0; w <= r1; ++w) {
        const double lx = origin.x + c * cs;
        const double hx = lx + cs;
        const double ly = origin.y + w * cs;
        const double hy = ly + cs;
        const double ddx = std::max({lx - pt.x, 0.0, pt.x - hx});
        const double ddy = std::max({ly - pt.y, 0.0, pt.y - hy});
        if (ddx * ddx + ddy * ddy < r2) now.push_back({c, w});
      }
    }
    for (auto& [cell, flag] : touched_prev) {
      if (flag && std::find(now.begin(), now.end(), cell) == now.end()) flag = false;
    }
    for (const Cell& cell : now) {
      auto& eps = episodes[cell];
      bool& flag = touched_prev[cell];
      if (flag && !eps.empty()) {
        eps.back().last = std::max(eps.back().last, hi);
        eps.back().first = std::min(eps.back().first, lo);
      } else {
        eps.push_back({cell, lo, hi});
      }
      flag = true;
    }
  };

  const std::size_t n = traj.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double base = (traj.samples[k].t - t0) / dt;
    if (k + 1 == n) {
      visit(interpolate_position(traj, k, 0, 1, p), static_cast<Step>(std::floor(base + 1e-9)),
            static_cast<Step>(std::ceil(base - 1e-9)));
      break;
    }
    const double h = traj.samples[k + 1].t - traj.samples[k].t;
    const double len = h / dt;
    const int den = std::max(1, static_cast<int>(std::lround(h / kDenseSeconds)));
    for (int m = 0; m < den; ++m) {
      const double tau = base + (static_cast<double>(m) / den) * len;
      visit(interpolate_position(traj, k, m, den, p), static_cast<Step>(std::floor(tau + 1e-9)),
            static_cast<Step>(std::ceil(tau - 1e-9)));
    }
  }

  for (auto& [cell, eps] : episodes) {
    std::sort(eps.begin(), eps.end(), [](const CellInterval& a, const CellInterval& b) { return a.first < b.first; });
    std::vector<CellInterval> merged;
    for (const auto& e : eps) {
      if (!merged.empty() && e.first <= merged.back().last) {
        merged.back().last = std::max(merged.back().last, e.last);
      } else {
        merged.push_back(e);
      }
    }
    for (const auto& e : merged) out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const CellInterval& a, const CellInterval& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.cell < b.cell;
  });

  if (ws != nullptr) {
    for (const auto& e : out) {
      if (!ws->in_bounds(e.cell) || ws->blocked(e.cell)) {
        throw OutOfWorkspace("footprint touches cell (" + std::to_string(e.cell.col) + ", " +
                             std::to_string(e.cell.row) + ") outside free space");
      }
    }
  }
  return out;
}

std::optional<Conflict> first_conflict(std::span<const std::vector<CellInterval>> occupancy,
                                       std::span<const Step> final_steps, double step_seconds) {
  std::optional<Conflict> best;
  const int n = static_cast<int>(occupancy.size());
  // Episodes sorted by cell, then merged pairwise.
  std::vector<std::vector<CellInterval>> sorted(n);
  for (int i = 0; i < n; ++i) {
    sorted[i].reserve(occupancy[i].size());
    for (const auto& e : occupancy[i]) {
      sorted[i].push_back({e.cell, e.first, e.last >= final_steps[i] ? kInfStep : e.last});
    }
    std::sort(sorted[i].begin(), sorted[i].end(), [](const CellInterval& a, const CellInterval& b) {
      return a.cell != b.cell ? a.cell < b.cell : a.first < b.first;
    });
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& A = sorted[i];
      const auto& B = sorted[j];
      std::size_t a = 0;
      std::size_t b = 0;
      while (a < A.size() && b < B.size()) {
        if (A[a].cell < B[b].cell) {
          ++a;
          continue;
        }
        if (B[b].cell < A[a].cell) {
          ++b;
          continue;
        }
        const Cell cell = A[a].cell;
        std::size_t a_end = a;
        std::size_t b_end = b;
        while (a_end < A.size() && A[a_end].cell == cell) ++a_end;
        while (b_end < B.size() && B[b_end].cell == cell) ++b_end;
        for (std::size_t x = a; x < a_end; ++x) {
          for (std::size_t y = b; y < b_end; ++y) {
            const Step lo = std::max(A[x].first, B[y].first);
            const Step hi = std::min(A[x].last, B[y].last);
            if (lo > hi) continue;
            const bool better = !best || lo < best->step ||
                                (lo == best->step && std::pair(i, j) < std::pair(best->agent_i, best->agent_j)) ||
                                (lo == best->step && i == best->agent_i && j == best->agent_j && cell < best->cell);
            if (better) best = Conflict{i, j, lo, lo * step_seconds, cell};
          }
        }
        a = a_end;
        b = b_end;
      }
    }
  }
  return best;
}

std::optional<Conflict> first_conflict(std::span<const Trajectory> plan, const ModelParams& p) {
  std::vector<std::vector<CellInterval>> occ;
  std::vector<Step> finals;
  occ.reserve(plan.size());
  for (const auto& traj : plan) {
    occ.push_back(swept_cells(traj, p));
    finals.push_back(traj.empty() ? 0 : to_step_ceil(traj.samples.back().t - traj.samples.front().t, p.sample_dt));
  }
  return first_conflict(occ, finals, p.sample_dt);
}

Trajectory reverse_trajectory(const Trajectory& traj, double grid_dt) {
  Trajectory out;
  out.reversed = !traj.reversed;
  if (traj.empty()) return out;
  const double t0 = traj.samples.front().t;
  const double T = traj.samples.back().t - t0;
  const std::size_t n = traj.size();
  out.samples.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& src = traj.samples[n - 1 - j];
    double t = T - (src.t - t0);
    const double k = std::round(t / grid_dt);
    if (std::abs(t - k * grid_dt) < 1e-9) t = k * grid_dt;
    out.samples[j].t = t0 + t;
    out.samples[j].x = src.x;
    // Interval j of the reversed trajectory is interval n-2-j of the source.
    out.samples[j].u = (j + 1 < n) ? traj.samples[n - 2 - j].u : ControlInput{};
  }
  out.samples.front().t = t0;
  return out;
}

}  // namespace simarr

#include "simarr/ocp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "simarr/errors.hpp"

namespace simarr {

namespace {

constexpr int kNx = AugmentedState::kDim;
constexpr int kNu = ControlInput::kDim;
constexpr double kFreeBound = 1e6;

void f_eval(const double* x, const double* u, const ModelParams& p, double* out) {
  const double th = x[2], al = x[3], om = x[4], v = x[5], a = x[6];
  out[0] = v * std::cos(th);
  out[1] = v * std::sin(th);
  out[2] = v * std::tan(al) / p.wheelbase;
  out[3] = om;
  out[4] = u[0];
  out[5] = a;
  out[6] = u[1];
}

// out += F_x^T w
void fx_transpose(const double* x, const ModelParams& p, const double* w, double scale, double* out) {
  const double th = x[2], al = x[3], v = x[5];
  const double c = std::cos(th), s = std::sin(th), t = std::tan(al);
  out[2] += scale * (-v * s * w[0] + v * c * w[1]);
  out[3] += scale * (v * (1.0 + t * t) / p.wheelbase * w[2]);
  out[4] += scale * w[3];
  out[5] += scale * (c * w[0] + s * w[1] + t / p.wheelbase * w[2]);
  out[6] += scale * w[5];
}

double l_eval(const double* x, const double* u) {
  return 1.0 + 0.5 * (x[3] * x[3] + 10.0 * x[4] * x[4] + x[6] * x[6] + u[0] * u[0] + u[1] * u[1]);
}

void set_state_bounds(double* lb, double* ub, const ModelParams& p, const Workspace& ws) {
  const double r = p.radius();
  lb[0] = r;
  ub[0] = ws.width * p.cell_size - r;
  lb[1] = r;
  ub[1] = ws.height * p.cell_size - r;
  lb[2] = -kFreeBound;
  ub[2] = kFreeBound;
  lb[3] = -p.alpha_max;
  ub[3] = p.alpha_max;
  lb[4] = -p.omega_max;
  ub[4] = p.omega_max;
  lb[5] = -p.v_max;
  ub[5] = p.v_max;
  lb[6] = -p.a_max;
  ub[6] = p.a_max;
}

void fix_state(double* lb, double* ub, const AugmentedState& s) {
  const auto a = s.to_array();
  for (int i = 0; i < kNx; ++i) lb[i] = ub[i] = a[i];
}

// Heading of `target` shifted by whole turns to lie closest to `reference`.
double unwrap_near(double target, double reference) {
  return target + 2.0 * kPi * std::round((reference - target) / (2.0 * kPi));
}

std::vector<Cell> band_obstacles(const Workspace& ws, std::span<const AugmentedState> knots, const ModelParams& p,
                                 int band) {
  std::set<Cell> cells;
  for (const auto& s : knots) {
    const Cell c = cell_of({s.x, s.y}, p);
    for (int dx = -band; dx <= band; ++dx) {
      for (int dy = -band; dy <= band; ++dy) {
        const Cell q{c.col + dx, c.row + dy};
        if (ws.in_bounds(q) && ws.blocked(q)) cells.insert(q);
      }
    }
  }
  return {cells.begin(), cells.end()};
}

double obstacle_clearance(const SegmentSpec& spec) {
  return spec.params.radius() + 0.5 * spec.params.cell_size + spec.clearance_margin;
}

void validate_spec(const SegmentSpec& spec, std::size_t warm_count) {
  if (spec.knots < 2) throw SpecError("segment needs at least 2 knots");
  if (!(spec.t_min > 0.0) || spec.t_min > spec.t_max) throw SpecError("segment duration bounds invalid");
  if (spec.agents.empty()) throw SpecError("segment has no agents");
  if (warm_count != spec.agents.size()) throw SpecError("warm start count does not match agents");
  for (const auto& [i, j] : spec.active_pairs) {
    if (i == j || i < 0 || j < 0 || i >= static_cast<int>(spec.agents.size()) ||
        j >= static_cast<int>(spec.agents.size())) {
      throw SpecError("invalid collision pair");
    }
  }
}

}  // namespace

std::vector<std::pair<int, int>> SegmentSpec::all_pairs(int agents) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < agents; ++i)
    for (int j = i + 1; j < agents; ++j) out.emplace_back(i, j);
  return out;
}

double state_distance(const AugmentedState& a, const AugmentedState& b) {
  const auto x = a.to_array();
  const auto y = b.to_array();
  double m = 0.0;
  for (int i = 0; i < kNx; ++i) {
    double d = x[i] - y[i];
    if (i == 2) d = normalize_angle(d);
    m = std::max(m, std::abs(d));
  }
  return m;
}

KnotTrajectory resample(const Trajectory& traj, int n) {
  if (traj.empty()) throw EmptyTrajectory("resample of an empty trajectory");
  KnotTrajectory out;
  const double t0 = traj.samples.front().t;
  const double T = traj.duration();
  out.duration = T;
  std::vector<double> theta(traj.size());
  theta[0] = traj.samples[0].x.theta;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    theta[k] = theta[k - 1] + normalize_angle(traj.samples[k].x.theta - traj.samples[k - 1].x.theta);
  }
  auto locate = [&](double t) {
    std::size_t lo = 0;
    std::size_t hi = traj.size() - 1;
    if (hi == 0) return std::size_t{0};
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (traj.samples[mid].t <= t) lo = mid; else hi = mid;
    }
    return lo;
  };
  out.x.resize(n + 1);
  out.u.resize(n);
  for (int k = 0; k <= n; ++k) {
    if (k == 0 || traj.size() == 1) {
      out.x[k] = traj.samples.front().x;
      out.x[k].theta = theta[0];
      if (traj.size() == 1 && k > 0) out.x[k] = out.x[0];
      continue;
    }
    if (k == n) {
      out.x[k] = traj.samples.back().x;
      out.x[k].theta = theta.back();
      continue;
    }
    const double t = t0 + T * k / n;
    const std::size_t j = locate(t);
    const auto& a = traj.samples[j];
    const auto& b = traj.samples[std::min(j + 1, traj.size() - 1)];
    const double span = b.t - a.t;
    const double w = span > 0.0 ? (t - a.t) / span : 0.0;
    auto xa = a.x.to_array();
    auto xb = b.x.to_array();
    xa[2] = theta[j];
    xb[2] = theta[std::min(j + 1, traj.size() - 1)];
    std::array<double, kNx> xs{};
    for (int i = 0; i < kNx; ++i) xs[i] = (1.0 - w) * xa[i] + w * xb[i];
    out.x[k] = AugmentedState::from_array(xs);
  }
  for (int k = 0; k < n; ++k) {
    const double t = t0 + T * (k + 0.5) / n;
    out.u[k] = traj.size() > 1 ? traj.samples[locate(t)].u : ControlInput{};
  }
  return out;
}

namespace transcription {

double cost(std::span<const double> X, std::span<const double> U, double T, int N, std::span<double> gX,
            std::span<double> gU, double* gT) {
  const double h = T / N;
  double J = 0.0;
  double dJdT = 0.0;
  for (int k = 0; k < N; ++k) {
    const double* x0 = &X[k * kNx];
    const double* x1 = &X[(k + 1) * kNx];
    const double* u = &U[k * kNu];
    const double l0 = l_eval(x0, u);
    const double l1 = l_eval(x1, u);
    J += 0.5 * h * (l0 + l1);
    dJdT += 0.5 * (l0 + l1) / N;
    if (!gX.empty()) {
      double* g0 = &gX[k * kNx];
      double* g1 = &gX[(k + 1) * kNx];
      const double c = 0.5 * h;
      g0[3] += c * x0[3];
      g0[4] += c * 10.0 * x0[4];
      g0[6] += c * x0[6];
      g1[3] += c * x1[3];
      g1[4] += c * 10.0 * x1[4];
      g1[6] += c * x1[6];
      gU[k * kNu + 0] += h * u[0];
      gU[k * kNu + 1] += h * u[1];
    }
  }
  if (gT != nullptr) *gT += dJdT;
  return J;
}

void defects(std::span<const double> X, std::span<const double> U, double T, int N, const ModelParams& p,
             std::span<double> out) {
  const double h = T / N;
  double f0[kNx], f1[kNx];
  for (int k = 0; k < N; ++k) {
    const double* x0 = &X[k * kNx];
    const double* x1 = &X[(k + 1) * kNx];
    const double* u = &U[k * kNu];
    f_eval(x0, u, p, f0);
    f_eval(x1, u, p, f1);
    for (int i = 0; i < kNx; ++i) out[k * kNx + i] = x1[i] - x0[i] - 0.5 * h * (f0[i] + f1[i]);
  }
}

void defects_vjp(std::span<const double> X, std::span<const double> U, double T, int N, const ModelParams& p,
                 std::span<const double> w, std::span<double> gX, std::span<double> gU, double* gT) {
  const double h = T / N;
  double f0[kNx], f1[kNx];
  double dT = 0.0;
  for (int k = 0; k < N; ++k) {
    const double* x0 = &X[k * kNx];
    const double* x1 = &X[(k + 1) * kNx];
    const double* u = &U[k * kNu];
    const double* wk = &w[k * kNx];
    double* g0 = &gX[k * kNx];
    double* g1 = &gX[(k + 1) * kNx];
    for (int i = 0; i < kNx; ++i) {
      g1[i] += wk[i];
      g0[i] -= wk[i];
    }
    fx_transpose(x0, p, wk, -0.5 * h, g0);
    fx_transpose(x1, p, wk, -0.5 * h, g1);
    gU[k * kNu + 0] -= h * wk[4];
    gU[k * kNu + 1] -= h * wk[6];
    if (gT != nullptr) {
      f_eval(x0, u, p, f0);
      f_eval(x1, u, p, f1);
      for (int i = 0; i < kNx; ++i) dT -= 0.5 / N * wk[i] * (f0[i] + f1[i]);
    }
  }
  if (gT != nullptr) *gT += dT;
}

}  // namespace transcription

// ---------------------------------------------------------------------------
// Centralised segment

SegmentOcp::SegmentOcp(SegmentSpec spec, std::span<const Trajectory> warm) : spec_(std::move(spec)) {
  validate_spec(spec_, warm.size());
  const int K = static_cast<int>(spec_.agents.size());
  const int N = spec_.knots;
  std::size_t off = 0;
  blocks_.resize(K);
  std::vector<KnotTrajectory> knots(K);
  for (int a = 0; a < K; ++a) {
    if (warm[a].empty()) throw SpecError("empty warm start");
    if (state_distance(warm[a].samples.front().x, spec_.agents[a].start) > 1e-6 ||
        state_distance(warm[a].samples.back().x, spec_.agents[a].end) > 1e-6) {
      throw SpecError("warm start does not match boundary states of agent " + std::to_string(a));
    }
    knots[a] = resample(warm[a], N);
    blocks_[a].x_offset = off;
    off += static_cast<std::size_t>(N + 1) * kNx;
    blocks_[a].u_offset = off;
    off += static_cast<std::size_t>(N) * kNu;
  }
  const std::size_t t_index = off++;
  for (auto& b : blocks_) b.t_index = t_index;
  n_ = off;
  n_eq_ = static_cast<std::size_t>(K) * N * kNx;

  obstacles_.resize(K);
  for (int a = 0; a < K; ++a) {
    obstacles_[a] = band_obstacles(spec_.workspace, knots[a].x, spec_.params, spec_.obstacle_band);
  }
  n_in_ = spec_.active_pairs.size() * static_cast<std::size_t>(N - 1);
  for (int a = 0; a < K; ++a) n_in_ += obstacles_[a].size() * static_cast<std::size_t>(N - 1);

  z0_.assign(n_, 0.0);
  double T0 = 0.0;
  for (int a = 0; a < K; ++a) T0 = std::max(T0, knots[a].duration);
  for (int a = 0; a < K; ++a) {
    for (int k = 0; k <= N; ++k) {
      const auto s = knots[a].x[k].to_array();
      std::copy(s.begin(), s.end(), z0_.begin() + blocks_[a].x_offset + k * kNx);
    }
    for (int k = 0; k < N; ++k) {
      z0_[blocks_[a].u_offset + k * kNu + 0] = knots[a].u[k].u_omega;
      z0_[blocks_[a].u_offset + k * kNu + 1] = knots[a].u[k].u_a;
    }
  }
  z0_[t_index] = std::clamp(T0, spec_.t_min, spec_.t_max);
}

void SegmentOcp::bounds(std::span<double> lb, std::span<double> ub) const {
  const int K = static_cast<int>(spec_.agents.size());
  const int N = spec_.knots;
  const auto& p = spec_.params;
  for (int a = 0; a < K; ++a) {
    const auto& b = blocks_[a];
    for (int k = 0; k <= N; ++k) set_state_bounds(&lb[b.x_offset + k * kNx], &ub[b.x_offset + k * kNx], p, spec_.workspace);
    fix_state(&lb[b.x_offset], &ub[b.x_offset], spec_.agents[a].start);
    AugmentedState end = spec_.agents[a].end;
    end.theta = unwrap_near(end.theta, z0_[b.x_offset + N * kNx + 2]);
    fix_state(&lb[b.x_offset + N * kNx], &ub[b.x_offset + N * kNx], end);
    lb[b.x_offset + 2] = ub[b.x_offset + 2] = z0_[b.x_offset + 2];
    for (int k = 0; k < N; ++k) {
      lb[b.u_offset + k * kNu + 0] = -p.u_omega_max;
      ub[b.u_offset + k * kNu + 0] = p.u_omega_max;
      lb[b.u_offset + k * kNu + 1] = -p.u_a_max;
      ub[b.u_offset + k * kNu + 1] = p.u_a_max;
    }
  }
  lb[blocks_[0].t_index] = spec_.t_min;
  ub[blocks_[0].t_index] = spec_.t_max;
}

double SegmentOcp::objective(std::span<const double> z, std::span<double> grad) const {
  const int K = static_cast<int>(spec_.agents.size());
  const int N = spec_.knots;
  const std::size_t xs = static_cast<std::size_t>(N + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N) * kNu;
  const double T = z[blocks_[0].t_index];
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double J = spec_.terminal_time_weight * T;
  double gT = spec_.terminal_time_weight;
  for (int a = 0; a < K; ++a) {
    const auto& b = blocks_[a];
    if (grad.empty()) {
      J += transcription::cost(z.subspan(b.x_offset, xs), z.subspan(b.u_offset, us), T, N, {}, {}, nullptr);
    } else {
      J += transcription::cost(z.subspan(b.x_offset, xs), z.subspan(b.u_offset, us), T, N,
                               grad.subspan(b.x_offset, xs), grad.subspan(b.u_offset, us), &gT);
    }
  }
  if (!grad.empty()) grad[blocks_[0].t_index] += gT;
  return J;
}

void SegmentOcp::constraints(std::span<const double> z, std::span<double> c_eq, std::span<double> c_in) const {
  const int K = static_cast<int>(spec_.agents.size());
  const int N = spec_.knots;
  const std::size_t xs = static_cast<std::size_t>(N + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N) * kNu;
  const double T = z[blocks_[0].t_index];
  for (int a = 0; a < K; ++a) {
    const auto& b = blocks_[a];
    transcription::defects(z.subspan(b.x_offset, xs), z.subspan(b.u_offset, us), T, N, spec_.params,
                           c_eq.subspan(static_cast<std::size_t>(a) * N * kNx, static_cast<std::size_t>(N) * kNx));
  }
  std::size_t idx = 0;
  const double d2 = spec_.clearance() * spec_.clearance();
  for (const auto& [i, j] : spec_.active_pairs) {
    for (int k = 1; k < N; ++k) {
      const double dx = z[blocks_[i].x_offset + k * kNx] - z[blocks_[j].x_offset + k * kNx];
      const double dy = z[blocks_[i].x_offset + k * kNx + 1] - z[blocks_[j].x_offset + k * kNx + 1];
      c_in[idx++] = d2 - (dx * dx + dy * dy);
    }
  }
  const double o2 = obstacle_clearance(spec_) * obstacle_clearance(spec_);
  for (int a = 0; a < K; ++a) {
    for (const Cell& c : obstacles_[a]) {
      const Point2 cc = cell_center(c, spec_.params);
      for (int k = 1; k < N; ++k) {
        const double dx = z[blocks_[a].x_offset + k * kNx] - cc.x;
        const double dy = z[blocks_[a].x_offset + k * kNx + 1] - cc.y;
        c_in[idx++] = o2 - (dx * dx + dy * dy);
      }
    }
  }
}

void SegmentOcp::constraint_vjp(std::span<const double> z, std::span<const double> w_eq,
                                std::span<const double> w_in, std::span<double> grad) const {
  const int K = static_cast<int>(spec_.agents.size());
  const int N = spec_.knots;
  const std::size_t xs = static_cast<std::size_t>(N + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N) * kNu;
  const std::size_t ti = blocks_[0].t_index;
  const double T = z[ti];
  double gT = 0.0;
  for (int a = 0; a < K; ++a) {
    const auto& b = blocks_[a];
    transcription::defects_vjp(z.subspan(b.x_offset, xs), z.subspan(b.u_offset, us), T, N, spec_.params,
                               w_eq.subspan(static_cast<std::size_t>(a) * N * kNx, static_cast<std::size_t>(N) * kNx),
                               grad.subspan(b.x_offset, xs), grad.subspan(b.u_offset, us), &gT);
  }
  grad[ti] += gT;
  std::size_t idx = 0;
  for (const auto& [i, j] : spec_.active_pairs) {
    for (int k = 1; k < N; ++k) {
      const std::size_t oi = blocks_[i].x_offset + k * kNx;
      const std::size_t oj = blocks_[j].x_offset + k * kNx;
      const double w = w_in[idx++];
      if (w == 0.0) continue;
      const double dx = z[oi] - z[oj];
      const double dy = z[oi + 1] - z[oj + 1];
      grad[oi] += -2.0 * dx * w;
      grad[oi + 1] += -2.0 * dy * w;
      grad[oj] += 2.0 * dx * w;
      grad[oj + 1] += 2.0 * dy * w;
    }
  }
  for (int a = 0; a < K; ++a) {
    for (const Cell& c : obstacles_[a]) {
      const Point2 cc = cell_center(c, spec_.params);
      for (int k = 1; k < N; ++k) {
        const double w = w_in[idx++];
        if (w == 0.0) continue;
        const std::size_t o = blocks_[a].x_offset + k * kNx;
        grad[o] += -2.0 * (z[o] - cc.x) * w;
        grad[o + 1] += -2.0 * (z[o + 1] - cc.y) * w;
      }
    }
  }
}

KnotTrajectory SegmentOcp::extract(std::span<const double> z, int agent) const {
  const int N = spec_.knots;
  KnotTrajectory out;
  out.duration = z[blocks_[agent].t_index];
  out.x.resize(N + 1);
  out.u.resize(N);
  for (int k = 0; k <= N; ++k) out.x[k] = AugmentedState::from_array(z.subspan(blocks_[agent].x_offset + k * kNx, kNx));
  for (int k = 0; k < N; ++k) {
    out.u[k] = {z[blocks_[agent].u_offset + k * kNu], z[blocks_[agent].u_offset + k * kNu + 1]};
  }
  return out;
}

NlpHandle transcribe(const SegmentSpec& spec, std::span<const Trajectory> warm) {
  return std::make_unique<SegmentOcp>(spec, warm);
}

// ---------------------------------------------------------------------------
// Consensus (NADMM) local problem

double consensus_penalty(std::span<const double> local, std::span<const double> global, std::span<const double> z,
                         double beta, std::span<const double> weights, std::span<double> grad_local) {
  if (local.size() != global.size() || z.size() != global.size() || weights.size() != global.size()) {
    throw DimensionMismatch("consensus vectors differ in length");
  }
  double val = 0.0;
  for (std::size_t k = 0; k < local.size(); ++k) {
    const double wr = weights[k] * (local[k] - global[k]);
    val += z[k] * wr + 0.5 * beta * wr * wr;
    if (!grad_local.empty()) grad_local[k] += weights[k] * (z[k] + beta * wr);
  }
  return val;
}

std::vector<double> ConsensusOcp::pack_consensus(std::span<const KnotTrajectory> trajs, double duration) {
  std::vector<double> xi;
  for (const auto& t : trajs) {
    for (const auto& s : t.x) {
      const auto a = s.to_array();
      xi.insert(xi.end(), a.begin(), a.end());
    }
  }
  xi.push_back(duration);
  return xi;
}

std::vector<double> ConsensusOcp::consensus_weights(int agents, int knots, double w_traj, double w_t) {
  std::vector<double> w(static_cast<std::size_t>(agents) * (knots + 1) * kNx, w_traj);
  w.push_back(w_t);
  return w;
}

ConsensusOcp::ConsensusOcp(const SegmentSpec& spec, std::span<const KnotTrajectory> warm, int agent)
    : spec_(spec), agent_(agent), K_(static_cast<int>(spec.agents.size())), N_(spec.knots) {
  validate_spec(spec_, warm.size());
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  x_off_ = 0;
  u_off_ = xs;
  t_index_ = u_off_ + static_cast<std::size_t>(N_) * kNu;
  std::size_t off = t_index_ + 1;
  proposal_off_.assign(K_, 0);
  for (int j = 0; j < K_; ++j) {
    if (j == agent_) continue;
    proposal_off_[j] = off;
    off += xs;
  }
  n_ = off;
  n_eq_ = static_cast<std::size_t>(N_) * kNx;
  obstacles_ = band_obstacles(spec_.workspace, warm[agent_].x, spec_.params, spec_.obstacle_band);
  std::size_t pairs = 0;
  for (const auto& [i, j] : spec_.active_pairs) {
    if (i == agent_ || j == agent_) ++pairs;
  }
  n_in_ = (pairs + obstacles_.size()) * static_cast<std::size_t>(N_ - 1);
  xi_dim_ = static_cast<std::size_t>(K_) * xs + 1;
  boundaries_ = spec_.agents;
  for (int j = 0; j < K_; ++j) {
    boundaries_[j].start.theta = warm[j].x.front().theta;
    boundaries_[j].end.theta = unwrap_near(spec_.agents[j].end.theta, warm[j].x.back().theta);
  }
  // Controls are only known to the owning agent; keep its warm controls.
  z_.assign(xi_dim_, 0.0);
  xi_.assign(xi_dim_, 0.0);
  w_.assign(xi_dim_, 1.0);
  xi_.back() = warm[agent_].duration;
  warm_u_.resize(static_cast<std::size_t>(N_) * kNu);
  for (int k = 0; k < N_; ++k) {
    warm_u_[k * kNu] = warm[agent_].u[k].u_omega;
    warm_u_[k * kNu + 1] = warm[agent_].u[k].u_a;
  }
}

void ConsensusOcp::set_consensus(std::span<const double> xi, std::span<const double> z, double beta,
                                 std::span<const double> weights) {
  if (xi.size() != xi_dim_ || z.size() != xi_dim_ || weights.size() != xi_dim_) {
    throw DimensionMismatch("consensus vector has wrong dimension");
  }
  xi_.assign(xi.begin(), xi.end());
  z_.assign(z.begin(), z.end());
  w_.assign(weights.begin(), weights.end());
  beta_ = beta;
}

void ConsensusOcp::bounds(std::span<double> lb, std::span<double> ub) const {
  const auto& p = spec_.params;
  for (int k = 0; k <= N_; ++k) set_state_bounds(&lb[x_off_ + k * kNx], &ub[x_off_ + k * kNx], p, spec_.workspace);
  fix_state(&lb[x_off_], &ub[x_off_], boundaries_[agent_].start);
  fix_state(&lb[x_off_ + N_ * kNx], &ub[x_off_ + N_ * kNx], boundaries_[agent_].end);
  for (int k = 0; k < N_; ++k) {
    lb[u_off_ + k * kNu] = -p.u_omega_max;
    ub[u_off_ + k * kNu] = p.u_omega_max;
    lb[u_off_ + k * kNu + 1] = -p.u_a_max;
    ub[u_off_ + k * kNu + 1] = p.u_a_max;
  }
  lb[t_index_] = spec_.t_min;
  ub[t_index_] = spec_.t_max;
  for (int j = 0; j < K_; ++j) {
    if (j == agent_) continue;
    const std::size_t o = proposal_off_[j];
    for (int k = 0; k <= N_; ++k) set_state_bounds(&lb[o + k * kNx], &ub[o + k * kNx], p, spec_.workspace);
    fix_state(&lb[o], &ub[o], boundaries_[j].start);
    fix_state(&lb[o + N_ * kNx], &ub[o + N_ * kNx], boundaries_[j].end);
  }
}

void ConsensusOcp::to_consensus(std::span<const double> local, std::span<double> xi_tilde) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  for (int j = 0; j < K_; ++j) {
    const std::size_t src = j == agent_ ? x_off_ : proposal_off_[j];
    std::copy_n(local.begin() + src, xs, xi_tilde.begin() + j * xs);
  }
  xi_tilde[xi_dim_ - 1] = local[t_index_];
}

double ConsensusOcp::own_cost(std::span<const double> local) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N_) * kNu;
  return transcription::cost(local.subspan(x_off_, xs), local.subspan(u_off_, us), local[t_index_], N_, {}, {},
                             nullptr) +
         spec_.terminal_time_weight * local[t_index_];
}

double ConsensusOcp::objective(std::span<const double> z, std::span<double> grad) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N_) * kNu;
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double gT = spec_.terminal_time_weight;
  double J = spec_.terminal_time_weight * z[t_index_];
  if (grad.empty()) {
    J += transcription::cost(z.subspan(x_off_, xs), z.subspan(u_off_, us), z[t_index_], N_, {}, {}, nullptr);
  } else {
    J += transcription::cost(z.subspan(x_off_, xs), z.subspan(u_off_, us), z[t_index_], N_,
                             grad.subspan(x_off_, xs), grad.subspan(u_off_, us), &gT);
    grad[t_index_] += gT;
  }
  std::vector<double> xt(xi_dim_);
  to_consensus(z, xt);
  std::vector<double> gxi;
  if (!grad.empty()) gxi.assign(xi_dim_, 0.0);
  J += consensus_penalty(xt, xi_, z_, beta_, w_, gxi);
  if (!grad.empty()) {
    for (int j = 0; j < K_; ++j) {
      const std::size_t dst = j == agent_ ? x_off_ : proposal_off_[j];
      for (std::size_t i = 0; i < xs; ++i) grad[dst + i] += gxi[j * xs + i];
    }
    grad[t_index_] += gxi[xi_dim_ - 1];
  }
  return J;
}

void ConsensusOcp::constraints(std::span<const double> z, std::span<double> c_eq, std::span<double> c_in) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N_) * kNu;
  transcription::defects(z.subspan(x_off_, xs), z.subspan(u_off_, us), z[t_index_], N_, spec_.params, c_eq);
  std::size_t idx = 0;
  const double d2 = spec_.clearance() * spec_.clearance();
  for (const auto& [i, j] : spec_.active_pairs) {
    if (i != agent_ && j != agent_) continue;
    const int other = i == agent_ ? j : i;
    for (int k = 1; k < N_; ++k) {
      const double dx = z[x_off_ + k * kNx] - z[proposal_off_[other] + k * kNx];
      const double dy = z[x_off_ + k * kNx + 1] - z[proposal_off_[other] + k * kNx + 1];
      c_in[idx++] = d2 - (dx * dx + dy * dy);
    }
  }
  const double o = obstacle_clearance(spec_);
  for (const Cell& c : obstacles_) {
    const Point2 cc = cell_center(c, spec_.params);
    for (int k = 1; k < N_; ++k) {
      const double dx = z[x_off_ + k * kNx] - cc.x;
      const double dy = z[x_off_ + k * kNx + 1] - cc.y;
      c_in[idx++] = o * o - (dx * dx + dy * dy);
    }
  }
}

void ConsensusOcp::constraint_vjp(std::span<const double> z, std::span<const double> w_eq,
                                  std::span<const double> w_in, std::span<double> grad) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  const std::size_t us = static_cast<std::size_t>(N_) * kNu;
  double gT = 0.0;
  transcription::defects_vjp(z.subspan(x_off_, xs), z.subspan(u_off_, us), z[t_index_], N_, spec_.params, w_eq,
                             grad.subspan(x_off_, xs), grad.subspan(u_off_, us), &gT);
  grad[t_index_] += gT;
  std::size_t idx = 0;
  for (const auto& [i, j] : spec_.active_pairs) {
    if (i != agent_ && j != agent_) continue;
    const int other = i == agent_ ? j : i;
    for (int k = 1; k < N_; ++k) {
      const double w = w_in[idx++];
      if (w == 0.0) continue;
      const std::size_t oi = x_off_ + k * kNx;
      const std::size_t oj = proposal_off_[other] + k * kNx;
      const double dx = z[oi] - z[oj];
      const double dy = z[oi + 1] - z[oj + 1];
      grad[oi] += -2.0 * dx * w;
      grad[oi + 1] += -2.0 * dy * w;
      grad[oj] += 2.0 * dx * w;
      grad[oj + 1] += 2.0 * dy * w;
    }
  }
  for (const Cell& c : obstacles_) {
    const Point2 cc = cell_center(c, spec_.params);
    for (int k = 1; k < N_; ++k) {
      const double w = w_in[idx++];
      if (w == 0.0) continue;
      const std::size_t o = x_off_ + k * kNx;
      grad[o] += -2.0 * (z[o] - cc.x) * w;
      grad[o + 1] += -2.0 * (z[o + 1] - cc.y) * w;
    }
  }
}

std::vector<double> ConsensusOcp::initial_local(std::span<const double> xi) const {
  const std::size_t xs = static_cast<std::size_t>(N_ + 1) * kNx;
  std::vector<double> local(n_, 0.0);
  std::copy_n(xi.begin() + agent_ * xs, xs, local.begin() + x_off_);
  std::copy(warm_u_.begin(), warm_u_.end(), local.begin() + u_off_);
  local[t_index_] = xi[xi_dim_ - 1];
  for (int j = 0; j < K_; ++j) {
    if (j == agent_) continue;
    std::copy_n(xi.begin() + j * xs, xs, local.begin() + proposal_off_[j]);
  }
  return local;
}

KnotTrajectory ConsensusOcp::extract_own(std::span<const double> local) const {
  KnotTrajectory out;
  out.duration = local[t_index_];
  out.x.resize(N_ + 1);
  out.u.resize(N_);
  for (int k = 0; k <= N_; ++k) out.x[k] = AugmentedState::from_array(local.subspan(x_off_ + k * kNx, kNx));
  for (int k = 0; k < N_; ++k) out.u[k] = {local[u_off_ + k * kNu], local[u_off_ + k * kNu + 1]};
  return out;
}

// ---------------------------------------------------------------------------
// Shooting

namespace {

int substeps_for(double h, double max_dt) { return std::max(1, static_cast<int>(std::ceil(h / max_dt - 1e-9))); }

AugmentedState rollout_end(const AugmentedState& x0, std::span<const ControlInput> u, double duration,
                           const ModelParams& p, double max_dt) {
  const int N = static_cast<int>(u.size());
  const double h = duration / N;
  const int sub = substeps_for(h, max_dt);
  const double hs = h / sub;
  AugmentedState x = x0;
  for (int k = 0; k < N; ++k)
    for (int m = 0; m < sub; ++m) x = integrate_interval(x, u[k], hs, p);
  return x;
}

std::array<double, kNx> terminal_error(const AugmentedState& end, const AugmentedState& target) {
  auto e = end.to_array();
  const auto t = target.to_array();
  for (int i = 0; i < kNx; ++i) e[i] -= t[i];
  e[2] = normalize_angle(e[2]);
  return e;
}

double inf_norm7(const std::array<double, kNx>& e) {
  double m = 0.0;
  for (double x : e) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

Trajectory rollout(const AugmentedState& x0, std::span<const ControlInput> u, double duration, const ModelParams& p,
                   double t0, double max_dt) {
  Trajectory out;
  const int N = static_cast<int>(u.size());
  if (N == 0) {
    out.samples.push_back({t0, x0, {}});
    return out;
  }
  const double h = duration / N;
  const int sub = substeps_for(h, max_dt);
  const double hs = h / sub;
  AugmentedState x = x0;
  out.samples.reserve(static_cast<std::size_t>(N) * sub + 1);
  for (int k = 0; k < N; ++k) {
    for (int m = 0; m < sub; ++m) {
      out.samples.push_back({t0 + (k * sub + m) * hs, x, u[k]});
      x = integrate_interval(x, u[k], hs, p);
    }
  }
  out.samples.push_back({t0 + duration, x, {}});
  return out;
}

double shoot_to_target(const AugmentedState& x0, std::vector<ControlInput>& u, double duration,
                       const AugmentedState& target, const ModelParams& p, int max_iter, double tol) {
  const int N = static_cast<int>(u.size());
  const int nv = N * kNu;
  auto err = terminal_error(rollout_end(x0, u, duration, p, 0.1), target);
  double norm = inf_norm7(err);
  for (int it = 0; it < max_iter && norm > tol; ++it) {
    Eigen::Matrix<double, kNx, Eigen::Dynamic> J(kNx, nv);
    for (int v = 0; v < nv; ++v) {
      std::vector<ControlInput> up = u;
      double& slot = (v % 2 == 0) ? up[v / 2].u_omega : up[v / 2].u_a;
      const double step = 1e-6 * std::max(1.0, std::abs(slot));
      slot += step;
      const auto ep = terminal_error(rollout_end(x0, up, duration, p, 0.1), target);
      for (int i = 0; i < kNx; ++i) J(i, v) = (ep[i] - err[i]) / step;
    }
    Eigen::Matrix<double, kNx, 1> e;
    for (int i = 0; i < kNx; ++i) e(i) = err[i];
    Eigen::Matrix<double, kNx, kNx> JJt = J * J.transpose();
    JJt.diagonal().array() += 1e-12;
    const Eigen::VectorXd delta = -J.transpose() * JJt.ldlt().solve(e);
    double step = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 20; ++ls) {
      std::vector<ControlInput> trial = u;
      for (int k = 0; k < N; ++k) {
        trial[k].u_omega = std::clamp(u[k].u_omega + step * delta(2 * k), -p.u_omega_max, p.u_omega_max);
        trial[k].u_a = std::clamp(u[k].u_a + step * delta(2 * k + 1), -p.u_a_max, p.u_a_max);
      }
      const auto et = terminal_error(rollout_end(x0, trial, duration, p, 0.1), target);
      const double nt = inf_norm7(et);
      if (nt < norm) {
        u = std::move(trial);
        err = et;
        norm = nt;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return norm;
}

}  // namespace simarr

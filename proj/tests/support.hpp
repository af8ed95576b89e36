#pragma once

// Shared fixtures and oracles for the unit and acceptance tests.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "simarr/improve.hpp"
#include "simarr/nadmm.hpp"
#include "simarr/pipeline.hpp"

namespace simarr::testing {

/// The desk lattice, generated once per process.
inline const PrimitiveSet& desk_set() {
  static const PrimitiveSet set = generate_primitives(ModelParams{}, LatticeSpec::desk_default(), 0);
  return set;
}

/// Two agents driving towards each other on lanes two rows apart. Agent 0
/// travels further, so agent 1 is padded at its start.
inline MampProblem passing_problem() {
  MampProblem prob;
  prob.workspace.width = 12;
  prob.workspace.height = 8;
  prob.workspace.rebuild_index();
  prob.prims = &desk_set();
  prob.starts = {{{1, 3}, 0, 0}, {{9, 5}, 4, 0}};
  prob.goals = {{{8, 3}, 0, 0}, {{4, 5}, 4, 0}};
  return prob;
}

inline const ContinuousPlan& passing_plan() {
  static const ContinuousPlan plan = to_continuous(solve_simultaneous(passing_problem()), desk_set(), ModelParams{});
  return plan;
}

/// Window [0, 4 s] of the passing plan.
inline WindowProblem passing_window(int knots = 20) {
  const ContinuousPlan& plan = passing_plan();
  return window_problem(plan, snap_window(plan, 0.0, 4.0), passing_problem().workspace, ModelParams{}, knots);
}

/// Agent i minimises 1/2 |A_i x - b_i|^2 over its copy of x. The local
/// augmented Lagrangian is quadratic, so each solve is one linear system.
class LeastSquaresAgent final : public ConsensusAgent {
 public:
  LeastSquaresAgent(Eigen::MatrixXd A, Eigen::VectorXd b) : A_(std::move(A)), b_(std::move(b)) {}

  std::size_t dim() const override { return static_cast<std::size_t>(A_.cols()); }
  std::vector<double> initial_estimate() const override { return std::vector<double>(dim(), 0.0); }
  Result solve(std::span<const double> xi, std::span<const double> z, double beta) override {
    const Eigen::Index n = A_.cols();
    const Eigen::Map<const Eigen::VectorXd> x(xi.data(), n), zz(z.data(), n);
    const Eigen::MatrixXd H = A_.transpose() * A_ + beta * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd sol = H.ldlt().solve(A_.transpose() * b_ - zz + beta * x);
    Result r;
    r.xi_tilde.assign(sol.data(), sol.data() + n);
    r.objective = 0.5 * (A_ * sol - b_).squaredNorm();
    r.iterations = 1;
    return r;
  }

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

/// Three random well-conditioned agents in R^4.
inline std::vector<LeastSquaresAgent> least_squares_agents(std::uint64_t seed, int K = 3, int n = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<LeastSquaresAgent> out;
  for (int i = 0; i < K; ++i) {
    Eigen::MatrixXd A(n + 2, n);
    Eigen::VectorXd b(n + 2);
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      for (Eigen::Index c = 0; c < A.cols(); ++c) A(r, c) = g(rng);
      b(r) = g(rng);
    }
    out.emplace_back(A, b);
  }
  return out;
}

/// argmin_x sum_i 1/2 |A_i x - b_i|^2 from the stacked normal equations.
inline Eigen::VectorXd least_squares_optimum(const std::vector<LeastSquaresAgent>& agents) {
  const Eigen::Index n = agents.front().A().cols();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (const auto& a : agents) {
    H += a.A().transpose() * a.A();
    g += a.A().transpose() * a.b();
  }
  return H.ldlt().solve(g);
}

/// Central-difference gradient of f at z with step h.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> z, double h = 1e-6) {
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    z[i] = zi + h;
    const double fp = f(z);
    z[i] = zi - h;
    const double fm = f(z);
    z[i] = zi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b|_2 / |b|_2 (absolute when b vanishes).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Point strictly inside [lb, ub] near z: a random perturbation of size
/// `scale` clipped away from the bounds, so that central differences never
/// step outside the box.
inline std::vector<double> jitter(std::span<const double> z, std::span<const double> lb, std::span<const double> ub,
                                  double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> out(z.begin(), z.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += u(rng);
    const double margin = 1e-4;
    if (ub[i] - lb[i] < 2.0 * margin) {
      out[i] = 0.5 * (lb[i] + ub[i]);
      continue;
    }
    if (std::isfinite(lb[i])) out[i] = std::max(out[i], lb[i] + margin);
    if (std::isfinite(ub[i])) out[i] = std::min(out[i], ub[i] - margin);
  }
  return out;
}

}  // namespace simarr::testing

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace simarr {

/// Smooth NLP with box bounds, equalities c(z) = 0 and inequalities g(z) <= 0.
/// Constraint derivatives are exposed as vector-Jacobian products.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual std::size_t num_vars() const = 0;
  virtual std::size_t num_eq() const = 0;
  virtual std::size_t num_ineq() const = 0;
  virtual void bounds(std::span<double> lb, std::span<double> ub) const = 0;

  /// Objective value; fills `grad` when it is non-empty.
  virtual double objective(std::span<const double> z, std::span<double> grad) const = 0;
  virtual void constraints(std::span<const double> z, std::span<double> c_eq, std::span<double> c_in) const = 0;
  /// grad += J_eq^T w_eq + J_in^T w_in
  virtual void constraint_vjp(std::span<const double> z, std::span<const double> w_eq,
                              std::span<const double> w_in, std::span<double> grad) const = 0;
};

struct SolverOptions {
  double tol = 1e-6;
  int max_outer = 50;
  int max_inner = 200;
  double rho_init = 10.0;
  double rho_max = 1e9;
  int lbfgs_memory = 12;
};

struct LocalSolution {
  std::vector<double> z;
  double objective = 0.0;
  double max_violation = 0.0;
  double stationarity = 0.0;
  bool converged = false;
  int iterations = 0;        // inner iterations, summed
  int outer_iterations = 0;
  // Augmented-Lagrangian merit at the end of each outer iteration, evaluated
  // with that iteration's multipliers and penalty.
  std::vector<double> merit_history;
  // Per outer iteration: merit at the start and end of the inner solve.
  std::vector<std::pair<double, double>> inner_merit;
};

double max_violation(const NlpProblem& nlp, std::span<const double> z);

/// Augmented-Lagrangian outer loop with a projected L-BFGS inner minimiser.
/// The warm point is clipped into the box. Never throws on non-convergence:
/// `converged` is false and the best point found is returned.
LocalSolution solve_local(const NlpProblem& nlp, std::span<const double> warm, const SolverOptions& opts = {});

/// Projected-gradient infinity norm of a scalar function at z within [lb, ub].
double projected_gradient_norm(std::span<const double> z, std::span<const double> g, std::span<const double> lb,
                               std::span<const double> ub);

}  // namespace simarr

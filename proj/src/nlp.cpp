#include "simarr/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace simarr {

namespace {

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct AlState {
  std::vector<double> lambda;  // equality multipliers
  std::vector<double> mu;      // inequality multipliers (>= 0)
  double rho = 10.0;
};

// Scratch buffers for one augmented-Lagrangian evaluation.
class AlFunction {
 public:
  AlFunction(const NlpProblem& nlp, const AlState& st)
      : nlp_(nlp), st_(st), ceq_(nlp.num_eq()), cin_(nlp.num_ineq()), weq_(nlp.num_eq()), win_(nlp.num_ineq()) {}

  double operator()(std::span<const double> z, std::span<double> grad) {
    const double f = nlp_.objective(z, grad);
    nlp_.constraints(z, ceq_, cin_);
    double val = f;
    const double rho = st_.rho;
    for (std::size_t i = 0; i < ceq_.size(); ++i) {
      val += st_.lambda[i] * ceq_[i] + 0.5 * rho * ceq_[i] * ceq_[i];
      weq_[i] = st_.lambda[i] + rho * ceq_[i];
    }
    for (std::size_t i = 0; i < cin_.size(); ++i) {
      const double s = std::max(0.0, st_.mu[i] + rho * cin_[i]);
      val += (s * s - st_.mu[i] * st_.mu[i]) / (2.0 * rho);
      win_[i] = s;
    }
    if (!grad.empty()) nlp_.constraint_vjp(z, weq_, win_, grad);
    return val;
  }

 private:
  const NlpProblem& nlp_;
  const AlState& st_;
  std::vector<double> ceq_, cin_, weq_, win_;
};

struct InnerResult {
  double value = 0.0;
  double pg_norm = 0.0;
  int iterations = 0;
  double start_value = 0.0;
};

void project(std::span<double> z, std::span<const double> lb, std::span<const double> ub) {
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::clamp(z[i], lb[i], ub[i]);
}

// Projected L-BFGS on a box. Monotone in the objective.
template <class Fn>
InnerResult minimize_box(Fn& fn, std::vector<double>& z, std::span<const double> lb, std::span<const double> ub,
                         double tol, int max_iter, int memory) {
  const std::size_t n = z.size();
  std::vector<double> g(n), g_new(n), z_new(n), d(n), q(n);
  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho_hist;

  InnerResult res;
  double f = fn(z, g);
  res.start_value = f;
  for (int it = 0; it < max_iter; ++it) {
    const double pg = projected_gradient_norm(z, g, lb, ub);
    res.pg_norm = pg;
    if (pg <= tol) break;

    // Free-variable mask: bound-active components with outward gradient are frozen.
    std::vector<char> active(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if ((z[i] <= lb[i] && g[i] > 0.0) || (z[i] >= ub[i] && g[i] < 0.0)) active[i] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) q[i] = active[i] ? 0.0 : g[i];
    const std::size_t m = S.size();
    std::vector<double> alpha(m);
    for (std::size_t j = m; j-- > 0;) {
      alpha[j] = rho_hist[j] * dot(S[j], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[j] * Y[j][i];
    }
    if (m > 0) {
      const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
      for (double& x : q) x *= gamma;
    } else {
      const double gn = inf_norm(g);
      const double scale = gn > 1.0 ? 1.0 / gn : 1.0;
      for (double& x : q) x *= scale;
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double beta = rho_hist[j] * dot(Y[j], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += S[j][i] * (alpha[j] - beta);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -q[i];
    if (dot(d, g) >= 0.0) {
      for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -g[i];
      S.clear();
      Y.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t i = 0; i < n; ++i) z_new[i] = z[i] + step * d[i];
      project(z_new, lb, ub);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (z_new[i] - z[i]);
      f_new = fn(z_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * decrease && decrease < 0.0) {
        accepted = true;
        break;
      }
      if (decrease >= 0.0) break;
      step *= 0.5;
    }
    res.iterations = it + 1;
    if (!accepted) {
      if (!S.empty()) {
        S.clear();
        Y.clear();
        rho_hist.clear();
        continue;
      }
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = z_new[i] - z[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y)) && sy > 0.0) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > memory) {
        S.pop_front();
        Y.pop_front();
        rho_hist.pop_front();
      }
    }
    z.swap(z_new);
    g.swap(g_new);
    f = f_new;
  }
  res.value = f;
  res.pg_norm = projected_gradient_norm(z, g, lb, ub);
  return res;
}

}  // namespace

double projected_gradient_norm(std::span<const double> z, std::span<const double> g, std::span<const double> lb,
                               std::span<const double> ub) {
  double m = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = std::clamp(z[i] - g[i], lb[i], ub[i]) - z[i];
    m = std::max(m, std::abs(p));
  }
  return m;
}

double max_violation(const NlpProblem& nlp, std::span<const double> z) {
  std::vector<double> ceq(nlp.num_eq()), cin(nlp.num_ineq());
  nlp.constraints(z, ceq, cin);
  double v = 0.0;
  for (double c : ceq) v = std::max(v, std::abs(c));
  for (double c : cin) v = std::max(v, c);
  return v;
}

LocalSolution solve_local(const NlpProblem& nlp, std::span<const double> warm, const SolverOptions& opts) {
  const std::size_t n = nlp.num_vars();
  std::vector<double> lb(n), ub(n);
  nlp.bounds(lb, ub);
  std::vector<double> z(warm.begin(), warm.end());
  z.resize(n, 0.0);
  project(z, lb, ub);

  AlState st;
  st.lambda.assign(nlp.num_eq(), 0.0);
  st.mu.assign(nlp.num_ineq(), 0.0);
  st.rho = opts.rho_init;

  LocalSolution best;
  bool have_feasible = false;
  double best_violation = std::numeric_limits<double>::infinity();

  std::vector<double> ceq(nlp.num_eq()), cin(nlp.num_ineq()), grad(n);
  double prev_violation = max_violation(nlp, z);
  double inner_tol = std::max(opts.tol, 1e-2);
  LocalSolution out;

  auto consider = [&](const std::vector<double>& zc, double viol, double stat, double obj) {
    const bool feasible = viol <= opts.tol;
    if (feasible) {
      if (!have_feasible || obj < best.objective) {
        best.z = zc;
        best.objective = obj;
        best.max_violation = viol;
        best.stationarity = stat;
        have_feasible = true;
      }
    } else if (!have_feasible && viol < best_violation) {
      best_violation = viol;
      best.z = zc;
      best.objective = obj;
      best.max_violation = viol;
      best.stationarity = stat;
    }
  };
  {
    std::vector<double> dummy;
    consider(z, prev_violation, std::numeric_limits<double>::infinity(), nlp.objective(z, dummy));
  }

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    AlFunction fn(nlp, st);
    InnerResult inner = minimize_box(fn, z, lb, ub, inner_tol, opts.max_inner, opts.lbfgs_memory);
    out.iterations += inner.iterations;
    out.outer_iterations = outer + 1;
    out.inner_merit.push_back({inner.start_value, inner.value});
    out.merit_history.push_back(inner.value);

    nlp.constraints(z, ceq, cin);
    double viol = 0.0;
    for (std::size_t i = 0; i < ceq.size(); ++i) {
      viol = std::max(viol, std::abs(ceq[i]));
      st.lambda[i] += st.rho * ceq[i];
    }
    for (std::size_t i = 0; i < cin.size(); ++i) {
      viol = std::max(viol, cin[i]);
      st.mu[i] = std::max(0.0, st.mu[i] + st.rho * cin[i]);
    }
    // Stationarity of the ordinary Lagrangian with the updated multipliers.
    std::fill(grad.begin(), grad.end(), 0.0);
    const double obj = nlp.objective(z, grad);
    nlp.constraint_vjp(z, st.lambda, st.mu, grad);
    const double stat = projected_gradient_norm(z, grad, lb, ub);
    consider(z, viol, stat, obj);

    if (viol <= opts.tol && stat <= opts.tol) {
      out.converged = true;
      best.z = z;
      best.objective = obj;
      best.max_violation = viol;
      best.stationarity = stat;
      break;
    }
    if (viol > opts.tol && viol > 0.25 * prev_violation) st.rho = std::min(st.rho * 10.0, opts.rho_max);
    prev_violation = viol;
    inner_tol = std::max(opts.tol, inner_tol * 0.1);
  }

  best.converged = out.converged;
  best.iterations = out.iterations;
  best.outer_iterations = out.outer_iterations;
  best.merit_history = std::move(out.merit_history);
  best.inner_merit = std::move(out.inner_merit);
  return best;
}

}  // namespace simarr

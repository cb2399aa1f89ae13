#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "otinform/io.hpp"
#include "otinform/matrix.hpp"
#include "otinform/measure.hpp"

namespace otinform {

/// Dual potential pair for the entropic OT problem. At convergence the plan
/// mu_i nu_j exp((f_i + g_j - C_ij) / epsilon) has marginal violation <= tol.
/// The gauge <g, nu> = 0 pins the additive constant.
struct Potentials {
  std::vector<double> f;
  std::vector<double> g;
  double epsilon = 1.0;
  bool converged = false;
  int iterations = 0;
  double tol = 1e-9;
  double marginal_error = 0.0;
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 10000;
  // Halve epsilon from max(C) down to the target, warm-starting each stage.
  // Plain Sinkhorn stalls when epsilon is far below the cost scale.
  bool eps_scaling = false;
  // When set, receives the dual objective after every full iteration of the
  // final (target-epsilon) solve; nondecreasing by block coordinate ascent.
  std::vector<double>* dual_trace = nullptr;
};

namespace detail {

/// One fixed-epsilon solve with warm-started potentials. Each iteration is a
/// row update, a column update, and a marginal check that doubles as the next
/// row update. Column sums are exact after every column update, so only the
/// row violation is monitored.
inline void sinkhorn_fixed_eps(const std::vector<double>& mu_w, const std::vector<double>& nu_w,
                               const Matrix& c, double epsilon, double tol, int max_iter,
                               std::vector<double>& f, std::vector<double>& g, bool& converged,
                               int& iterations, double& marginal_error,
                               std::vector<double>* dual_trace) {
  const int n = c.rows(), m = c.cols();
  const double inv_eps = 1.0 / epsilon;

  Matrix cdiv(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) cdiv(i, j) = c(i, j) * inv_eps;
  const Matrix cdiv_t = transpose(cdiv);

  std::vector<double> log_mu(n), log_nu(m);
  for (int i = 0; i < n; ++i) log_mu[i] = mu_w[i] > 0.0 ? std::log(mu_w[i]) : -std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) log_nu[j] = nu_w[j] > 0.0 ? std::log(nu_w[j]) : -std::numeric_limits<double>::infinity();

  std::vector<double> a(m), b(n), row_lse(n);

  const auto compute_row_lse = [&]() {
    for (int j = 0; j < m; ++j) a[j] = log_nu[j] + g[j] * inv_eps;
    parallel_rows(n, [&](int r0, int r1) {
      for (int i = r0; i < r1; ++i) {
        const double* ci = cdiv.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j) mx = std::max(mx, a[j] - ci[j]);
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += std::exp(a[j] - ci[j] - mx);
        row_lse[i] = mx + std::log(s);
      }
    });
  };

  const auto column_update = [&]() {
    for (int i = 0; i < n; ++i) b[i] = log_mu[i] + f[i] * inv_eps;
    parallel_rows(m, [&](int c0, int c1) {
      for (int j = c0; j < c1; ++j) {
        const double* cj = cdiv_t.row(j);
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) mx = std::max(mx, b[i] - cj[i]);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::exp(b[i] - cj[i] - mx);
        g[j] = -epsilon * (mx + std::log(s));
      }
    });
  };

  converged = false;
  marginal_error = std::numeric_limits<double>::infinity();
  compute_row_lse();
  for (int i = 0; i < n; ++i) f[i] = -epsilon * row_lse[i];

  for (int it = 1; it <= max_iter; ++it) {
    column_update();
    compute_row_lse();

    double err = 0.0;
    for (int i = 0; i < n; ++i)
      err = std::max(err, mu_w[i] * std::abs(std::exp(f[i] * inv_eps + row_lse[i]) - 1.0));
    if (!std::isfinite(err)) throw std::runtime_error("sinkhorn: non-finite marginal error");

    if (dual_trace != nullptr) {
      double dual = 0.0;
      for (int i = 0; i < n; ++i) dual += mu_w[i] * f[i];
      for (int j = 0; j < m; ++j) dual += nu_w[j] * g[j];
      dual_trace->push_back(dual);
    }

    iterations += 1;
    marginal_error = err;
    if (err <= tol) {
      converged = true;
      break;
    }
    for (int i = 0; i < n; ++i) f[i] = -epsilon * row_lse[i];
  }
}

}  // namespace detail

/// Log-domain Sinkhorn iterations for W_{c,eps}(mu, nu). Non-convergence
/// within max_iter is reported through the `converged` flag, not an error.
inline Potentials sinkhorn_potentials(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const Matrix& c, double epsilon,
                                      const SinkhornOptions& opts = {}) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn_potentials: epsilon must be > 0");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("sinkhorn_potentials: tol must be > 0");
  if (c.rows() != mu.size() || c.cols() != nu.size())
    throw std::invalid_argument("sinkhorn_potentials: cost shape does not match measures");
  if (!c.all_finite()) throw std::invalid_argument("sinkhorn_potentials: cost matrix has non-finite entries");

  Potentials pot;
  pot.epsilon = epsilon;
  pot.tol = opts.tol;
  pot.f.assign(mu.size(), 0.0);
  pot.g.assign(nu.size(), 0.0);

  const double c_max = c.max_value();
  if (opts.eps_scaling && epsilon < c_max) {
    std::vector<double> stages;
    for (double e = c_max; e > epsilon; e *= 0.5) stages.push_back(e);
    stages.push_back(epsilon);
    const double stage_tol = std::max(opts.tol, 1e-6);
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const bool last = (s + 1 == stages.size());
      detail::sinkhorn_fixed_eps(mu.weights, nu.weights, c, stages[s],
                                 last ? opts.tol : stage_tol, opts.max_iter, pot.f, pot.g,
                                 pot.converged, pot.iterations, pot.marginal_error,
                                 last ? opts.dual_trace : nullptr);
    }
  } else {
    detail::sinkhorn_fixed_eps(mu.weights, nu.weights, c, epsilon, opts.tol, opts.max_iter, pot.f,
                               pot.g, pot.converged, pot.iterations, pot.marginal_error,
                               opts.dual_trace);
  }

  // Gauge fix <g, nu> = 0; shifting g by -k and f by +k leaves the plan as is.
  double k = 0.0;
  for (int j = 0; j < nu.size(); ++j) k += nu.weights[j] * pot.g[j];
  for (double& gj : pot.g) gj -= k;
  for (double& fi : pot.f) fi += k;
  return pot;
}

inline Potentials sinkhorn_potentials(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const Matrix& c, double epsilon, double tol, int max_iter) {
  SinkhornOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return sinkhorn_potentials(mu, nu, c, epsilon, opts);
}

/// Dual objective <f,mu> + <g,nu> + eps (1 - total plan mass). The correction
/// term vanishes at convergence and the value equals the primal W_{c,eps}.
inline double entropic_ot_value(const Potentials& pot, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, const Matrix& c) {
  const int n = mu.size(), m = nu.size();
  if (static_cast<int>(pot.f.size()) != n || static_cast<int>(pot.g.size()) != m ||
      c.rows() != n || c.cols() != m)
    throw std::invalid_argument("entropic_ot_value: shape mismatch");
  const double inv_eps = 1.0 / pot.epsilon;
  double value = 0.0;
  for (int i = 0; i < n; ++i) value += mu.weights[i] * pot.f[i];
  for (int j = 0; j < m; ++j) value += nu.weights[j] * pot.g[j];
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* ci = c.row(i);
    double row = 0.0;
    for (int j = 0; j < m; ++j)
      row += nu.weights[j] * std::exp((pot.f[i] + pot.g[j] - ci[j]) * inv_eps);
    mass += mu.weights[i] * row;
  }
  return value + pot.epsilon * (1.0 - mass);
}

/// Nonnegative coupling with prescribed marginals.
struct TransportPlan {
  Matrix gamma;
  DiscreteMeasure mu_ref;
  DiscreteMeasure nu_ref;

  double max_marginal_violation() const {
    const int n = gamma.rows(), m = gamma.cols();
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < m; ++j) row += gamma(i, j);
      err = std::max(err, std::abs(row - mu_ref.weights[i]));
    }
    for (int j = 0; j < m; ++j) {
      double col = 0.0;
      for (int i = 0; i < n; ++i) col += gamma(i, j);
      err = std::max(err, std::abs(col - nu_ref.weights[j]));
    }
    return err;
  }

  void validate() const {
    if (gamma.rows() != mu_ref.size() || gamma.cols() != nu_ref.size())
      throw std::invalid_argument("TransportPlan: shape mismatch");
    double mass = 0.0;
    for (int i = 0; i < gamma.rows(); ++i)
      for (int j = 0; j < gamma.cols(); ++j) {
        if (!(gamma(i, j) >= 0.0)) throw std::invalid_argument("TransportPlan: negative entry");
        mass += gamma(i, j);
      }
    if (std::abs(mass - 1.0) > 1e-9) throw std::invalid_argument("TransportPlan: total mass off by more than 1e-9");
    if (max_marginal_violation() > 1e-6)
      throw std::invalid_argument("TransportPlan: marginal violation above 1e-6");
  }
};

/// gamma_ij = mu_i nu_j exp((f_i + g_j - C_ij)/eps). Errors out if the
/// potentials are stale (marginal violation beyond 10x the solve tolerance).
inline TransportPlan recover_plan(const Potentials& pot, const DiscreteMeasure& mu,
                                  const DiscreteMeasure& nu, const Matrix& c) {
  const int n = mu.size(), m = nu.size();
  if (static_cast<int>(pot.f.size()) != n || static_cast<int>(pot.g.size()) != m ||
      c.rows() != n || c.cols() != m)
    throw std::invalid_argument("recover_plan: shape mismatch");
  const double inv_eps = 1.0 / pot.epsilon;
  Matrix gamma(n, m);
  parallel_rows(n, [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      const double* ci = c.row(i);
      double* gi = gamma.row(i);
      for (int j = 0; j < m; ++j)
        gi[j] = mu.weights[i] * nu.weights[j] * std::exp((pot.f[i] + pot.g[j] - ci[j]) * inv_eps);
    }
  });
  TransportPlan plan{std::move(gamma), mu, nu};
  const double violation = plan.max_marginal_violation();
  if (violation > 10.0 * pot.tol)
    throw std::runtime_error("recover_plan: stale potentials, marginal violation " +
                             format_double(violation));
  return plan;
}

/// (c,eps)-transform: -eps log sum_j nu_j exp((g_j - c_j)/eps), the soft
/// pointwise minimum of c(.,y) - g(y) over the atoms of nu.
inline double c_eps_transform(std::span<const double> g, std::span<const double> c_row,
                              std::span<const double> nu_weights, double epsilon) {
  if (g.size() != c_row.size() || g.size() != nu_weights.size())
    throw std::invalid_argument("c_eps_transform: length mismatch");
  if (!(epsilon > 0.0)) throw std::invalid_argument("c_eps_transform: epsilon must be > 0");
  const double inv_eps = 1.0 / epsilon;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (nu_weights[j] <= 0.0) continue;
    mx = std::max(mx, std::log(nu_weights[j]) + (g[j] - c_row[j]) * inv_eps);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (nu_weights[j] <= 0.0) continue;
    s += std::exp(std::log(nu_weights[j]) + (g[j] - c_row[j]) * inv_eps - mx);
  }
  return -epsilon * (mx + std::log(s));
}

struct DivergenceResult {
  double value = 0.0;
  bool converged = false;
  double w_mu_nu = 0.0;
  double w_mu_mu = 0.0;
  double w_nu_nu = 0.0;
};

/// S_{c,eps}(mu,nu) = W(mu,nu) - W(mu,mu)/2 - W(nu,nu)/2.
inline DivergenceResult sinkhorn_divergence(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                            const GroundCost& cost, double epsilon,
                                            const SinkhornOptions& opts = {}) {
  const Matrix c_mn = cost_matrix(cost, mu.points, nu.points);
  const Matrix c_mm = cost_matrix(cost, mu.points, mu.points);
  const Matrix c_nn = cost_matrix(cost, nu.points, nu.points);
  const Potentials p_mn = sinkhorn_potentials(mu, nu, c_mn, epsilon, opts);
  const Potentials p_mm = sinkhorn_potentials(mu, mu, c_mm, epsilon, opts);
  const Potentials p_nn = sinkhorn_potentials(nu, nu, c_nn, epsilon, opts);
  DivergenceResult r;
  r.w_mu_nu = entropic_ot_value(p_mn, mu, nu, c_mn);
  r.w_mu_mu = entropic_ot_value(p_mm, mu, mu, c_mm);
  r.w_nu_nu = entropic_ot_value(p_nn, nu, nu, c_nn);
  r.value = r.w_mu_nu - 0.5 * r.w_mu_mu - 0.5 * r.w_nu_nu;
  r.converged = p_mn.converged && p_mm.converged && p_nn.converged;
  return r;
}

inline DivergenceResult sinkhorn_divergence(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                            const GroundCost& cost, double epsilon, double tol,
                                            int max_iter) {
  SinkhornOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return sinkhorn_divergence(mu, nu, cost, epsilon, opts);
}

struct BruteForceResult {
  double value = 0.0;
  std::vector<int> permutation;  // lexicographically smallest optimal matching
};

/// Exact W_c for uniform-marginal instances with n = m <= 8, by enumerating
/// all permutation couplings (the Birkhoff vertices for uniform marginals).
inline BruteForceResult brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                       const Matrix& c) {
  const int n = mu.size();
  if (nu.size() != n) throw std::invalid_argument("brute_force_ot: marginals must have equal size");
  if (n > 8) throw std::invalid_argument("brute_force_ot: instance too large (n > 8)");
  for (double w : mu.weights)
    if (std::abs(w - 1.0 / n) > 1e-12) throw std::invalid_argument("brute_force_ot: mu not uniform");
  for (double w : nu.weights)
    if (std::abs(w - 1.0 / n) > 1e-12) throw std::invalid_argument("brute_force_ot: nu not uniform");
  if (c.rows() != n || c.cols() != n) throw std::invalid_argument("brute_force_ot: cost shape mismatch");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BruteForceResult best;
  best.value = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += c(i, perm[i]);
    total /= n;
    if (total < best.value) {  // strict: ties keep the lexicographically first
      best.value = total;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// CSV `i,j,mass` for entries above 1e-12.
inline std::string plan_to_csv(const TransportPlan& plan) {
  std::string out = "i,j,mass\n";
  for (int i = 0; i < plan.gamma.rows(); ++i)
    for (int j = 0; j < plan.gamma.cols(); ++j)
      if (plan.gamma(i, j) > 1e-12) {
        out += format_int(i);
        out += ',';
        out += format_int(j);
        out += ',';
        out += format_double(plan.gamma(i, j));
        out += '\n';
      }
  return out;
}

/// Sidecar JSON header for a serialized plan.
inline std::string plan_sidecar_json(const TransportPlan& plan, double epsilon, double value) {
  std::string out = "{\"epsilon\":";
  out += format_double(epsilon);
  out += ",\"m\":";
  out += format_int(plan.gamma.cols());
  out += ",\"n\":";
  out += format_int(plan.gamma.rows());
  out += ",\"value\":";
  out += format_double(value);
  out += "}\n";
  return out;
}

}  // namespace otinform

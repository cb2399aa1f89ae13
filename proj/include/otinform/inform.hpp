#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "otinform/io.hpp"
#include "otinform/matrix.hpp"
#include "otinform/measure.hpp"
#include "otinform/sinkhorn.hpp"

namespace otinform {

/// Marginal of a plan onto (z1-group, y-atom): kappa[g, j] is the mass of
/// pi_{(z1,y)#} gamma on that cell. Row sums match the z1-group masses,
/// column sums match the nu weights.
struct MarginalPlan {
  Matrix kappa;               // n1 x m
  std::vector<int> group_of;  // length n, values in [0, n1)
};

/// kappa[g, j] = sum of gamma[i, j] over atoms i in group g.
inline MarginalPlan marginalize_plan(const TransportPlan& plan, const std::vector<int>& group_of) {
  const int n = plan.gamma.rows(), m = plan.gamma.cols();
  if (static_cast<int>(group_of.size()) != n)
    throw std::invalid_argument("marginalize_plan: group map does not cover all source atoms");
  int n1 = 0;
  for (int g : group_of) {
    if (g < 0) throw std::invalid_argument("marginalize_plan: negative group index");
    n1 = std::max(n1, g + 1);
  }
  Matrix kappa(n1, m);
  for (int i = 0; i < n; ++i) {
    const double* gi = plan.gamma.row(i);
    double* kg = kappa.row(group_of[i]);
    for (int j = 0; j < m; ++j) kg[j] += gi[j];
  }
  return MarginalPlan{std::move(kappa), group_of};
}

/// KL(kappa || zeta1 (x) nu) with the 0 log 0 := 0 convention. Mass on a
/// zero-reference cell yields +infinity.
inline double marginal_kl(const MarginalPlan& marg, const std::vector<double>& zeta1_masses,
                          const std::vector<double>& nu_weights) {
  const int n1 = marg.kappa.rows(), m = marg.kappa.cols();
  if (static_cast<int>(zeta1_masses.size()) != n1 || static_cast<int>(nu_weights.size()) != m)
    throw std::invalid_argument("marginal_kl: reference mass shape mismatch");
  double kl = 0.0;
  for (int g = 0; g < n1; ++g)
    for (int j = 0; j < m; ++j) {
      const double k = marg.kappa(g, j);
      if (k <= 0.0) continue;
      const double ref = zeta1_masses[g] * nu_weights[j];
      if (ref <= 0.0) return std::numeric_limits<double>::infinity();
      kl += k * std::log(k / ref);
    }
  return kl;
}

/// Shannon entropy -sum kappa log kappa, 0 log 0 := 0.
inline double plan_entropy(const MarginalPlan& marg) {
  double h = 0.0;
  for (int g = 0; g < marg.kappa.rows(); ++g)
    for (int j = 0; j < marg.kappa.cols(); ++j) {
      const double k = marg.kappa(g, j);
      if (k > 0.0) h -= k * std::log(k);
    }
  return h;
}

/// Equal-width bucketing of the first coordinate into n_groups groups; the
/// marginalization axis used for continuous latent supports.
inline std::vector<int> group_by_first_coordinate(const DiscreteMeasure& zeta, int n_groups) {
  if (n_groups < 1) throw std::invalid_argument("group_by_first_coordinate: need n_groups >= 1");
  double lo = zeta.points(0, 0), hi = zeta.points(0, 0);
  for (int i = 1; i < zeta.size(); ++i) {
    lo = std::min(lo, zeta.points(i, 0));
    hi = std::max(hi, zeta.points(i, 0));
  }
  const double width = hi - lo;
  std::vector<int> group(zeta.size(), 0);
  if (width <= 0.0) return group;
  for (int i = 0; i < zeta.size(); ++i) {
    const int g = static_cast<int>((zeta.points(i, 0) - lo) / width * n_groups);
    group[i] = std::min(g, n_groups - 1);
  }
  return group;
}

/// Group masses induced by zeta and a group map.
inline std::vector<double> group_masses(const DiscreteMeasure& zeta, const std::vector<int>& group_of) {
  int n1 = 0;
  for (int g : group_of) n1 = std::max(n1, g + 1);
  std::vector<double> mass(n1, 0.0);
  for (int i = 0; i < zeta.size(); ++i) mass[group_of[i]] += zeta.weights[i];
  return mass;
}

struct DcTraceRow {
  int outer_iter = 0;
  double objective = 0.0;
  double marginal_kl = 0.0;
  double entropy = 0.0;
};

struct DcResult {
  TransportPlan plan;
  std::vector<DcTraceRow> trace;
  std::vector<std::string> warnings;
  bool inner_converged = true;
  int outer_iterations = 0;
};

struct DcOptions {
  int outer_iters = 30;
  double tol = 1e-9;          // stop when |delta objective| falls below this
  SinkhornOptions inner = {};  // inner Sinkhorn solver settings
};

namespace detail {

/// F(gamma) = <C, gamma> + eps KL(gamma || zeta (x) nu) - lambda KL(kappa || zeta1 (x) nu).
inline double dc_objective(const TransportPlan& plan, const Matrix& c, double epsilon,
                           double lambda, const std::vector<int>& group_of,
                           const std::vector<double>& zeta1_masses) {
  double cost_term = 0.0, kl_term = 0.0;
  for (int i = 0; i < plan.gamma.rows(); ++i)
    for (int j = 0; j < plan.gamma.cols(); ++j) {
      const double gij = plan.gamma(i, j);
      if (gij <= 0.0) continue;
      cost_term += c(i, j) * gij;
      kl_term += gij * std::log(gij / (plan.mu_ref.weights[i] * plan.nu_ref.weights[j]));
    }
  const MarginalPlan marg = marginalize_plan(plan, group_of);
  const double mkl = marginal_kl(marg, zeta1_masses, plan.nu_ref.weights);
  return cost_term + epsilon * kl_term - lambda * mkl;
}

}  // namespace detail

/// DC iteration for the informative plan objective. The concave marginal-KL
/// term is linearized at the current plan; each step solves an entropic OT
/// problem with the perturbed cost C - lambda log r_t and the true objective
/// is recorded, nonincreasing up to the inner solver tolerance.
inline DcResult dc_informative_plan(const DiscreteMeasure& zeta, const DiscreteMeasure& nu,
                                    const Matrix& c, const std::vector<int>& group_of,
                                    double epsilon, double lambda, const DcOptions& opts = {}) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("dc_informative_plan: epsilon must be > 0");
  if (lambda < 0.0) throw std::invalid_argument("dc_informative_plan: lambda must be >= 0");
  const std::vector<double> zeta1 = group_masses(zeta, group_of);

  DcResult result{
      TransportPlan{Matrix(zeta.size(), nu.size()), zeta, nu}, {}, {}, true, 0};
  if (lambda >= epsilon)
    result.warnings.push_back("lambda >= epsilon: concave part may dominate the objective");

  // Warm start at the lambda = 0 Sinkhorn plan.
  Potentials pot = sinkhorn_potentials(zeta, nu, c, epsilon, opts.inner);
  result.inner_converged = pot.converged;
  result.plan = recover_plan(pot, zeta, nu, c);

  const auto record = [&](int outer) {
    DcTraceRow row;
    row.outer_iter = outer;
    row.objective = detail::dc_objective(result.plan, c, epsilon, lambda, group_of, zeta1);
    const MarginalPlan marg = marginalize_plan(result.plan, group_of);
    row.marginal_kl = marginal_kl(marg, zeta1, nu.weights);
    row.entropy = plan_entropy(marg);
    result.trace.push_back(row);
    return row.objective;
  };

  double prev_objective = record(0);
  if (lambda == 0.0) {
    result.outer_iterations = 1;
    return result;  // the perturbation vanishes; the warm start is the answer
  }

  Matrix perturbed(zeta.size(), nu.size());
  for (int outer = 1; outer <= opts.outer_iters; ++outer) {
    const MarginalPlan marg = marginalize_plan(result.plan, group_of);
    for (int i = 0; i < zeta.size(); ++i) {
      const int g = group_of[i];
      for (int j = 0; j < nu.size(); ++j) {
        const double ref = zeta1[g] * nu.weights[j];
        const double ratio = std::max(marg.kappa(g, j) / ref, 1e-300);
        perturbed(i, j) = c(i, j) - lambda * std::log(ratio);
      }
    }
    pot = sinkhorn_potentials(zeta, nu, perturbed, epsilon, opts.inner);
    if (!pot.converged) {
      result.inner_converged = false;
      result.warnings.push_back("inner Sinkhorn solve did not converge at outer step " +
                                format_int(outer));
    }
    result.plan = recover_plan(pot, zeta, nu, perturbed);
    result.outer_iterations = outer;
    const double objective = record(outer);
    if (std::abs(objective - prev_objective) <= opts.tol) break;
    prev_objective = objective;
  }
  return result;
}

/// CSV `outer_iter,objective,marginal_kl,entropy`.
inline std::string dc_trace_to_csv(const std::vector<DcTraceRow>& trace) {
  std::string out = "outer_iter,objective,marginal_kl,entropy\n";
  for (const auto& row : trace) {
    out += format_int(row.outer_iter);
    out += ',';
    out += format_double(row.objective);
    out += ',';
    out += format_double(row.marginal_kl);
    out += ',';
    out += format_double(row.entropy);
    out += '\n';
  }
  return out;
}

}  // namespace otinform

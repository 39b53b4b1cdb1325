#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "minimax_cate/closed_form.hpp"
#include "minimax_cate/core.hpp"

namespace minimax_cate {

struct QpSettings {
  std::size_t max_sweeps = 100000;
  double tol_w = 1e-12;    // max coordinate change per sweep
  double tol_kkt = 1e-10;  // projected-gradient residual target
};

namespace detail {

// Gradient of the box objective
//   f(w) = w' (D + C + B^2 J) w - 2 B^2 s 1'w + B^2 s^2.
inline double qp_gradient(const Problem& problem, const WeightVector& w,
                          double sum_w, double s_total, std::size_t g) {
  const double B2 = problem.B * problem.B;
  double cross = 0.0;
  for (std::size_t h = 0; h < w.size(); ++h)
    if (h != g) cross += problem.covariance(g, h) * w[h];
  return 2.0 * (problem.variances[g] * w[g] + cross + B2 * (sum_w - s_total));
}

}  // namespace detail

// Projected-gradient stationarity residual over the box [0, p]:
// |grad| at interior points, max(0, grad) at the upper bound, max(0, -grad)
// at zero. Zero at a box-constrained minimizer.
inline double kkt_residual(const Problem& problem, const WeightVector& w) {
  const std::size_t G = problem.size();
  detail::check_length(G, w.size(), "weights");
  for (std::size_t g = 0; g < G; ++g)
    if (w[g] < 0.0 || w[g] > problem.p[g])
      throw Error("qp.OutOfBox", "weights must satisfy 0 <= w_g <= p_g");

  const double s_total = problem.total_share();
  const double sum_w = std::accumulate(w.begin(), w.end(), 0.0);
  double residual = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    if (problem.p[g] == 0.0) continue;  // pinned coordinate
    const double grad = detail::qp_gradient(problem, w, sum_w, s_total, g);
    double viol;
    if (w[g] == 0.0)
      viol = std::max(0.0, -grad);
    else if (w[g] == problem.p[g])
      viol = std::max(0.0, grad);
    else
      viol = std::abs(grad);
    residual = std::max(residual, viol);
  }
  return residual;
}

// Cyclic exact coordinate descent for the correlated minimax problem:
// minimize the worst-case MSE over the box 0 <= w <= p. Each coordinate
// update solves its scalar quadratic exactly and clamps to the box.
inline Solution solve_qp(const Problem& problem, const QpSettings& settings = {}) {
  const std::size_t G = problem.size();
  if (problem.covariances) {
    for (const auto& row : *problem.covariances)
      for (double c : row)
        if (c < 0.0)
          throw Error("qp.NegativeCovarianceUnsupported",
                      "minimax solving requires nonnegative covariances");
  }

  Solution out;
  out.permutation.resize(G);
  std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});

  if (problem.infinite_B()) {
    out.w = problem.p;
    out.active_set = ActiveSet{};
    out.mse = worst_case_mse(problem, out.w);
    out.multipliers.assign(G, 0.0);
    return out;
  }

  const double B2 = problem.B * problem.B;
  const double s_total = problem.total_share();

  WeightVector w(G);
  for (std::size_t g = 0; g < G; ++g) w[g] = 0.5 * problem.p[g];
  double sum_w = std::accumulate(w.begin(), w.end(), 0.0);

  double residual = kkt_residual(problem, w);
  std::size_t sweep = 0;
  bool converged = residual <= settings.tol_kkt;
  while (!converged && sweep < settings.max_sweeps) {
    ++sweep;
    double max_change = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      const double a = problem.variances[g] + B2;
      double cross = 0.0;
      for (std::size_t h = 0; h < G; ++h)
        if (h != g) cross += (problem.covariance(g, h) + B2) * w[h];
      const double b = cross - B2 * s_total;
      const double updated = std::clamp(-b / a, 0.0, problem.p[g]);
      max_change = std::max(max_change, std::abs(updated - w[g]));
      sum_w += updated - w[g];
      w[g] = updated;
    }
    residual = kkt_residual(problem, w);
    if (residual <= settings.tol_kkt) {
      converged = true;
      break;
    }
    if (max_change <= settings.tol_w) break;  // stalled below resolution
  }

  // CD identifies the active face but can crawl along the near-singular
  // all-ones direction when B^2 dominates the variances. One exact solve of
  // the stationarity system on the free set finishes the job.
  if (!converged) {
    Eigen::MatrixXd M(G, G);
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < G; ++h)
        M(g, h) = B2 + (g == h ? problem.variances[g] : problem.covariance(g, h));
    for (std::size_t pass = 0; pass < 2 * G + 2 && !converged; ++pass) {
      std::vector<std::size_t> free_idx;
      for (std::size_t g = 0; g < G; ++g)
        if (w[g] > 0.0 && w[g] < problem.p[g]) free_idx.push_back(g);
      if (free_idx.empty()) break;
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd Mff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        double fixed = 0.0;
        for (std::size_t g = 0; g < G; ++g)
          if (w[g] == problem.p[g]) fixed += M(free_idx[a], g) * w[g];
        rhs(a) = B2 * s_total - fixed;
        for (Eigen::Index b = 0; b < nf; ++b) Mff(a, b) = M(free_idx[a], free_idx[b]);
      }
      Eigen::VectorXd wf = Mff.ldlt().solve(rhs);
      if (!wf.allFinite()) break;
      bool clamped = false;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const std::size_t g = free_idx[a];
        const double candidate = std::clamp(wf(a), 0.0, problem.p[g]);
        clamped = clamped || candidate != wf(a);
        w[g] = candidate;
      }
      residual = kkt_residual(problem, w);
      converged = residual <= settings.tol_kkt;
      if (!clamped) break;  // free-set solve is exact; no further progress
    }
    sum_w = std::accumulate(w.begin(), w.end(), 0.0);
  }

  out.w = w;
  out.converged = converged || residual <= settings.tol_kkt;
  out.sweeps = sweep;
  out.kkt_residual = residual;
  out.mse = worst_case_mse(problem, w);

  ActiveSet active;
  std::vector<double> mu(G, 0.0);
  sum_w = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    if (w[g] == 0.0) active.at_zero.push_back(g);
    if (w[g] == problem.p[g]) {
      active.at_upper.push_back(g);
      // mu_g = -grad/2 at an active upper bound (zero when clamped inactive)
      mu[g] = std::max(0.0, -0.5 * detail::qp_gradient(problem, w, sum_w, s_total, g));
    }
  }
  out.active_set = std::move(active);
  out.multipliers = std::move(mu);
  return out;
}

}  // namespace minimax_cate

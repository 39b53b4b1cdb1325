#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "minimax_cate/core.hpp"

namespace minimax_cate {

// Result of a minimax solve. Weights and multipliers are in the original
// (unsorted) group order; h_star and permutation refer to the p_g*v_g sort.
// QP solves fill active_set instead of h_star.
struct ActiveSet {
  std::vector<std::size_t> at_zero;
  std::vector<std::size_t> at_upper;
};

struct Solution {
  WeightVector w;
  std::optional<std::size_t> h_star;             // 0-based index in sorted order
  std::vector<std::size_t> permutation;          // sorted position -> original index
  std::optional<ActiveSet> active_set;
  MseDecomposition mse;
  double kkt_residual = 0.0;
  std::vector<double> multipliers;
  bool converged = true;
  std::size_t sweeps = 0;  // QP only
};

// Stable permutation ordering groups by p_g * v_g ascending.
// perm[k] = original index of the group in sorted position k.
inline std::vector<std::size_t> sort_groups(const Problem& problem) {
  std::vector<std::size_t> perm(problem.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return problem.p[a] * problem.variances[a] < problem.p[b] * problem.variances[b];
  });
  return perm;
}

namespace detail {

// Suffix sums over the sorted order, accumulated from the last group down.
struct SuffixSums {
  std::vector<double> inv_v;  // inv_v[h] = sum_{g >= h} 1 / v_g
  std::vector<double> p;      // p[h]     = sum_{g >= h} p_g
};

inline SuffixSums suffix_sums(const std::vector<double>& p, const std::vector<double>& v) {
  const std::size_t G = p.size();
  SuffixSums s;
  s.inv_v.assign(G, 0.0);
  s.p.assign(G, 0.0);
  double acc_iv = 0.0, acc_p = 0.0;
  for (std::size_t g = G; g-- > 0;) {
    acc_iv += 1.0 / v[g];
    acc_p += p[g];
    s.inv_v[g] = acc_iv;
    s.p[g] = acc_p;
  }
  return s;
}

inline std::vector<double> apply_perm(const std::vector<double>& x,
                                      const std::vector<std::size_t>& perm) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[k] = x[perm[k]];
  return out;
}

}  // namespace detail

// Threshold index (0-based, sorted order):
//   min { g : S_p(g) / (1/B^2 + S_{1/v}(g)) <= p_g v_g }.
// The inequality always holds at g = G-1, so the scan terminates.
inline std::size_t g_bar(const Problem& problem) {
  const std::size_t G = problem.size();
  const auto s = detail::suffix_sums(problem.p, problem.variances);
  const double inv_B2 = 1.0 / (problem.B * problem.B);
  for (std::size_t g = 0; g + 1 < G; ++g) {
    if (s.p[g] / (inv_B2 + s.inv_v[g]) <= problem.p[g] * problem.variances[g]) return g;
  }
  return G - 1;
}

// Candidate weight vector w_h (sorted order): w_g = p_g below h, and the
// common shrinkage level divided by v_g from h on. For infinite B the 1/B^2
// term drops out and the tail weights renormalize to the tail share.
inline WeightVector candidate_weights(const Problem& problem, std::size_t h) {
  const std::size_t G = problem.size();
  if (h >= G) throw Error("closed_form.IndexOutOfRange", "candidate index out of range");
  const auto s = detail::suffix_sums(problem.p, problem.variances);
  const double inv_B2 = problem.infinite_B() ? 0.0 : 1.0 / (problem.B * problem.B);
  const double level = s.p[h] / (inv_B2 + s.inv_v[h]);
  WeightVector w(G);
  for (std::size_t g = 0; g < h; ++g) w[g] = problem.p[g];
  for (std::size_t g = h; g < G; ++g) w[g] = level / problem.variances[g];
  return w;
}

// Checks that {g : S_p(g) / S_{1/v}(g) <= p_g v_g} (no 1/B^2 term) is an
// upper interval of the sorted indices. Property-test hook only.
inline bool scan_gbar_check(const Problem& problem) {
  const std::size_t G = problem.size();
  const auto s = detail::suffix_sums(problem.p, problem.variances);
  bool seen = false;
  for (std::size_t g = 0; g < G; ++g) {
    const bool holds = s.p[g] / s.inv_v[g] <= problem.p[g] * problem.variances[g];
    if (seen && !holds) return false;
    seen = seen || holds;
  }
  return true;
}

// Minimax weights for uncorrelated problems: enumerate the candidates
// w_h for h in {g_bar, ..., G-1}, keep the worst-case-MSE minimizer (ties to
// the smallest h), and certify the KKT system from the solve.
inline Solution solve_minimax(const Problem& problem) {
  if (problem.has_covariances())
    throw Error("closed_form.CovariancesUnsupported",
                "closed-form solver requires an uncorrelated problem; use the QP solver");
  const std::size_t G = problem.size();
  const auto perm = sort_groups(problem);

  Problem sorted = problem;
  sorted.p = detail::apply_perm(problem.p, perm);
  sorted.variances = detail::apply_perm(problem.variances, perm);

  Solution out;
  out.permutation = perm;

  if (problem.infinite_B()) {
    // Corollary limit: the minimax weights converge to p.
    out.w = problem.p;
    out.h_star = G;  // no group is shrunk
    out.mse = worst_case_mse(problem, out.w);
    out.multipliers.assign(G, 0.0);
    out.kkt_residual = 0.0;
    return out;
  }
  if (!(problem.B > 0.0))
    throw Error("closed_form.InvalidB", "B must be strictly positive");

  const std::size_t gb = g_bar(sorted);
  std::size_t best_h = gb;
  WeightVector best_w;
  MseDecomposition best_mse;
  for (std::size_t h = gb; h < G; ++h) {
    WeightVector w = candidate_weights(sorted, h);
    MseDecomposition m = worst_case_mse(sorted, w);
    if (h == gb || m.total < best_mse.total) {
      best_h = h;
      best_w = std::move(w);
      best_mse = m;
    }
  }

  // Multipliers and stationarity residual from the KKT system
  //   w_g v_g - B^2 (s - sum w) + mu_g = 0,  mu_g >= 0,  mu_g (w_g - p_g) = 0.
  const double s_total = sorted.total_share();
  const double sum_w = std::accumulate(best_w.begin(), best_w.end(), 0.0);
  const double shrink = problem.B * problem.B * (s_total - sum_w);
  std::vector<double> mu_sorted(G);
  double residual = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    mu_sorted[g] = std::max(0.0, shrink - sorted.p[g] * sorted.variances[g]);
    const double stat = best_w[g] * sorted.variances[g] - shrink + mu_sorted[g];
    const double slack = mu_sorted[g] * (best_w[g] - sorted.p[g]);
    residual = std::max(residual, std::max(std::abs(stat), std::abs(slack)));
  }

  out.h_star = best_h;
  out.w.assign(G, 0.0);
  out.multipliers.assign(G, 0.0);
  for (std::size_t k = 0; k < G; ++k) {
    out.w[perm[k]] = best_w[k];
    out.multipliers[perm[k]] = mu_sorted[k];
  }
  out.mse = worst_case_mse(problem, out.w);
  out.kkt_residual = residual;
  return out;
}

}  // namespace minimax_cate

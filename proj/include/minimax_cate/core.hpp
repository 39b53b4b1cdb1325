#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "minimax_cate/error.hpp"

namespace minimax_cate {

enum class Scale { kSigmaRelative, kAbsolute };

inline double infinite_bound() { return std::numeric_limits<double>::infinity(); }

// Weighting problem: estimand weights p, per-group variance profile, optional
// covariance profile, and the CATE bound B. In sigma-relative scale the
// variances and covariances are multiples of sigma^2 and B is in sigma units.
struct Problem {
  std::vector<double> p;
  std::vector<double> variances;
  Scale scale = Scale::kSigmaRelative;
  std::optional<std::vector<std::vector<double>>> covariances;
  double B = 1.0;  // may be +inf (Corollary-limit marker)
  std::optional<double> sigma;

  std::size_t size() const { return p.size(); }
  bool has_covariances() const { return covariances.has_value(); }
  bool infinite_B() const { return std::isinf(B); }

  double covariance(std::size_t g, std::size_t h) const {
    if (!covariances) return 0.0;
    return (*covariances)[g][h];
  }

  double total_share() const {
    double s = 0.0;
    for (double pg : p) s += pg;
    return s;
  }
};

struct MseDecomposition {
  double variance_term = 0.0;
  double bias_sq_term = 0.0;
  double total = 0.0;
  Scale scale = Scale::kSigmaRelative;
  // Filled for sigma-relative problems when sigma is known.
  std::optional<double> total_absolute;
};

using WeightVector = std::vector<double>;

namespace detail {

inline void check_length(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw Error("core.LengthMismatch",
                std::string(what) + ": expected " + std::to_string(expected) +
                    " entries, got " + std::to_string(got));
}

}  // namespace detail

// Checks the shape constraints: nonnegative shares with positive total,
// strictly positive variances, symmetric nonnegative zero-diagonal
// covariances, diag(v)+C positive semidefinite, B > 0.
inline Problem validate_problem(Problem raw) {
  const std::size_t G = raw.p.size();
  if (G == 0) throw Error("core.LengthMismatch", "empty problem");
  detail::check_length(G, raw.variances.size(), "variances");

  double share_sum = 0.0;
  for (double pg : raw.p) {
    if (!(pg >= 0.0)) throw Error("core.NegativeShare", "p entries must be >= 0");
    share_sum += pg;
  }
  if (!(share_sum > 0.0)) throw Error("core.NegativeShare", "sum of p must be > 0");

  for (double vg : raw.variances)
    if (!(vg > 0.0) || !std::isfinite(vg))
      throw Error("core.NonPositiveVariance", "variance entries must be > 0");

  if (!(raw.B > 0.0)) throw Error("core.NonPositiveB", "B must be > 0");

  if (raw.sigma && !(*raw.sigma > 0.0))
    throw Error("core.NonPositiveVariance", "sigma must be > 0");

  if (raw.covariances) {
    const auto& C = *raw.covariances;
    detail::check_length(G, C.size(), "covariance rows");
    for (std::size_t g = 0; g < G; ++g) {
      detail::check_length(G, C[g].size(), "covariance row length");
      if (C[g][g] != 0.0)
        throw Error("core.AsymmetricCovariance", "covariance diagonal must be zero");
      for (std::size_t h = 0; h < G; ++h) {
        if (!(C[g][h] >= 0.0))
          throw Error("core.NegativeCovariance", "covariance entries must be >= 0");
        if (C[g][h] != C[h][g])
          throw Error("core.AsymmetricCovariance", "covariance matrix must be symmetric");
      }
    }
    Eigen::MatrixXd M(G, G);
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < G; ++h)
        M(g, h) = (g == h) ? raw.variances[g] : C[g][h];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw Error("core.NotPSD", "diag(v) + C is not positive semidefinite");
  }
  return raw;
}

// Sharp worst-case MSE of the linear combination w:
//   variance term  sum_g w_g^2 var_g + sum_{g'!=g} w_g w_g' cov_{g,g'}
//   bias term      B^2 (sum_g |w_g - p_g|)^2
inline MseDecomposition worst_case_mse(const Problem& problem, const WeightVector& w) {
  const std::size_t G = problem.size();
  detail::check_length(G, w.size(), "weights");

  double variance = 0.0;
  double abs_dev = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    variance += w[g] * w[g] * problem.variances[g];
    abs_dev += std::abs(w[g] - problem.p[g]);
  }
  if (problem.covariances) {
    const auto& C = *problem.covariances;
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < G; ++h)
        if (h != g) variance += w[g] * w[h] * C[g][h];
  }

  MseDecomposition out;
  out.scale = problem.scale;
  out.variance_term = variance;
  if (problem.infinite_B())
    out.bias_sq_term = (abs_dev > 0.0) ? std::numeric_limits<double>::infinity() : 0.0;
  else
    out.bias_sq_term = problem.B * problem.B * abs_dev * abs_dev;
  out.total = out.variance_term + out.bias_sq_term;
  if (problem.scale == Scale::kSigmaRelative && problem.sigma)
    out.total_absolute = out.total * (*problem.sigma) * (*problem.sigma);
  return out;
}

// CATE profile attaining the worst-case bound at w: |tau_g| equals the bound,
// sign +1 where w_g >= p_g and -1 otherwise (ties take +).
inline std::vector<double> adversarial_cates(const Problem& problem, const WeightVector& w) {
  const std::size_t G = problem.size();
  detail::check_length(G, w.size(), "weights");
  double bound = problem.B;
  if (problem.scale == Scale::kSigmaRelative && problem.sigma) bound *= *problem.sigma;
  std::vector<double> tau(G);
  for (std::size_t g = 0; g < G; ++g)
    tau[g] = (w[g] >= problem.p[g]) ? bound : -bound;
  return tau;
}

inline double estimate(const WeightVector& w, const std::vector<double>& tau_hats) {
  detail::check_length(w.size(), tau_hats.size(), "tau_hats");
  double acc = 0.0;
  for (std::size_t g = 0; g < w.size(); ++g) acc += w[g] * tau_hats[g];
  return acc;
}

}  // namespace minimax_cate

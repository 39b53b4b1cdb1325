#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "minimax_cate/core.hpp"
#include "minimax_cate/designs.hpp"

namespace minimax_cate {

struct TauRule {
  enum class Kind { kZero, kExplicit, kAdversarial };
  Kind kind = Kind::kZero;
  std::vector<double> values;  // explicit
  WeightVector w_ref;          // adversarial: weights the profile is worst for
};

struct NamedEstimator {
  std::string name;
  WeightVector w;
};

struct McConfig {
  std::uint64_t reps = 10000;
  std::uint64_t seed = 0;
  double sigma = 1.0;
  double B = 1.0;  // CATE bound, sigma units; drives the adversarial rule
  TauRule tau_rule;
  std::vector<NamedEstimator> estimators;
  unsigned threads = 1;  // 0 = hardware concurrency
};

struct EstimatorStats {
  std::string name;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double mc_se_mse = 0.0;
};

struct McReport {
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  double sigma = 1.0;
  std::vector<double> tau;  // CATE profile used (absolute units)
  double tau_target = 0.0;  // sum_g p_g tau_g
  std::vector<EstimatorStats> estimators;
  // DID only: empirical covariance of the cell estimators.
  std::optional<std::vector<std::vector<double>>> empirical_cov;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d4b26d9835ce67ULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, replication); scheduling-invariant.
inline std::mt19937_64 rep_rng(std::uint64_t seed, std::uint64_t rep) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ rep));
}

inline void validate_config(const McConfig& config, std::size_t G) {
  if (config.reps < 1) throw Error("simulate.InvalidConfig", "reps must be >= 1");
  if (!(config.sigma > 0.0)) throw Error("simulate.InvalidConfig", "sigma must be > 0");
  for (std::size_t a = 0; a < config.estimators.size(); ++a) {
    check_length(G, config.estimators[a].w.size(), "estimator weights");
    for (std::size_t b = a + 1; b < config.estimators.size(); ++b)
      if (config.estimators[a].name == config.estimators[b].name)
        throw Error("simulate.InvalidConfig",
                    "estimator names must be distinct: " + config.estimators[a].name);
  }
}

inline std::vector<double> resolve_tau(const McConfig& config, const Problem& problem) {
  switch (config.tau_rule.kind) {
    case TauRule::Kind::kZero:
      return std::vector<double>(problem.size(), 0.0);
    case TauRule::Kind::kExplicit: {
      check_length(problem.size(), config.tau_rule.values.size(), "tau values");
      return config.tau_rule.values;
    }
    case TauRule::Kind::kAdversarial:
      check_length(problem.size(), config.tau_rule.w_ref.size(), "adversarial w_ref");
      return adversarial_cates(problem, config.tau_rule.w_ref);
  }
  throw Error("simulate.InvalidConfig", "unknown tau rule");
}

// Runs body(rep) over all replications, split across threads by contiguous
// index ranges. Results land in per-rep buffers, so the reduction order is
// fixed no matter how many threads run.
template <typename Body>
inline void for_each_rep(std::uint64_t reps, unsigned threads, Body body) {
  unsigned n = threads == 0 ? std::thread::hardware_concurrency() : threads;
  if (n <= 1 || reps < 2) {
    for (std::uint64_t r = 0; r < reps; ++r) body(r);
    return;
  }
  std::vector<std::thread> pool;
  const std::uint64_t chunk = (reps + n - 1) / n;
  for (unsigned t = 0; t < n; ++t) {
    const std::uint64_t lo = t * chunk;
    const std::uint64_t hi = std::min(reps, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([=] {
      for (std::uint64_t r = lo; r < hi; ++r) body(r);
    });
  }
  for (auto& th : pool) th.join();
}

// Fixed-order reduction of the per-rep estimate buffer into moment stats.
inline std::vector<EstimatorStats> reduce_estimates(const McConfig& config,
                                                    const std::vector<double>& buffer,
                                                    double tau_target) {
  const std::size_t E = config.estimators.size();
  std::vector<EstimatorStats> stats(E);
  for (std::size_t e = 0; e < E; ++e) {
    double sum = 0.0;
    for (std::uint64_t r = 0; r < config.reps; ++r) sum += buffer[r * E + e];
    const double mean = sum / static_cast<double>(config.reps);
    double ss = 0.0, se = 0.0, se2 = 0.0;
    for (std::uint64_t r = 0; r < config.reps; ++r) {
      const double x = buffer[r * E + e];
      ss += (x - mean) * (x - mean);
      const double sq = (x - tau_target) * (x - tau_target);
      se += sq;
      se2 += sq * sq;
    }
    const double n = static_cast<double>(config.reps);
    auto& s = stats[e];
    s.name = config.estimators[e].name;
    s.mean = mean;
    s.bias = mean - tau_target;
    s.variance = ss / n;
    s.mse = se / n;
    const double var_sq_err = se2 / n - s.mse * s.mse;
    s.mc_se_mse = std::sqrt(std::max(0.0, var_sq_err) / n);
  }
  return stats;
}

}  // namespace detail

// Draws stratified experiments under the homoscedastic model: control
// outcomes N(0, sigma^2), treated outcomes shifted by the stratum CATE, so
// V(tau_hat_g) = sigma^2 (1/n0 + 1/n1) exactly.
inline McReport simulate_rct(const RctDesign& design, const McConfig& config) {
  Problem problem = rct_to_problem(design, config.B);
  problem.sigma = config.sigma;
  detail::validate_config(config, problem.size());
  const std::vector<double> tau = detail::resolve_tau(config, problem);
  const std::size_t G = problem.size();
  const std::size_t E = config.estimators.size();

  double tau_target = 0.0;
  for (std::size_t g = 0; g < G; ++g) tau_target += problem.p[g] * tau[g];

  std::vector<double> buffer(config.reps * E);
  detail::for_each_rep(config.reps, config.threads, [&](std::uint64_t r) {
    auto rng = detail::rep_rng(config.seed, r);
    std::normal_distribution<double> noise(0.0, config.sigma);
    std::vector<double> tau_hat(G);
    for (std::size_t g = 0; g < G; ++g) {
      const auto& s = design.strata[g];
      double treated = 0.0, control = 0.0;
      for (int i = 0; i < s.n1; ++i) treated += tau[g] + noise(rng);
      for (int i = 0; i < s.n0; ++i) control += noise(rng);
      tau_hat[g] = treated / s.n1 - control / s.n0;
    }
    for (std::size_t e = 0; e < E; ++e)
      buffer[r * E + e] = estimate(config.estimators[e].w, tau_hat);
  });

  McReport report;
  report.reps = config.reps;
  report.seed = config.seed;
  report.sigma = config.sigma;
  report.tau = tau;
  report.tau_target = tau_target;
  report.estimators = detail::reduce_estimates(config, buffer, tau_target);
  return report;
}

// Draws the untreated outcome grid i.i.d. N(0, sigma^2), shifts treated
// cells by their CATE, and evaluates all cell estimators through the linear
// representation. Also accumulates the empirical covariance of the cell
// estimators for covariance-model validation.
inline McReport simulate_did(const DidDesign& design, const McConfig& config) {
  validate_did(design);
  const auto rows = did_linear_representation(design);
  const auto cells = cell_index(design);
  const std::size_t G = cells.size();
  detail::validate_config(config, G);

  // Only p, B and sigma matter for the tau rule; skip the covariance build
  // so designs with negative exact covariances still simulate.
  Problem problem;
  problem.scale = Scale::kSigmaRelative;
  problem.p.assign(G, 1.0 / static_cast<double>(G));
  problem.variances.assign(G, 1.0);
  problem.B = config.B;
  problem.sigma = config.sigma;
  const std::vector<double> tau = detail::resolve_tau(config, problem);
  const std::size_t E = config.estimators.size();
  const std::size_t grid = design.units.size() * static_cast<std::size_t>(design.T);

  double tau_target = 0.0;
  for (std::size_t g = 0; g < G; ++g) tau_target += problem.p[g] * tau[g];

  std::vector<double> buffer(config.reps * E);
  std::vector<double> tau_hat_buffer(config.reps * G);
  detail::for_each_rep(config.reps, config.threads, [&](std::uint64_t r) {
    auto rng = detail::rep_rng(config.seed, r);
    std::normal_distribution<double> noise(0.0, config.sigma);
    std::vector<double> outcomes(grid);
    for (double& y : outcomes) y = noise(rng);
    for (std::size_t g = 0; g < G; ++g)
      outcomes[cells[g].unit * design.T + (cells[g].period - 1)] += tau[g];
    std::vector<double> tau_hat(G);
    for (std::size_t g = 0; g < G; ++g) {
      double acc = 0.0;
      for (std::size_t k = 0; k < grid; ++k) acc += rows[g][k] * outcomes[k];
      tau_hat[g] = acc;
      tau_hat_buffer[r * G + g] = acc;
    }
    for (std::size_t e = 0; e < E; ++e)
      buffer[r * E + e] = estimate(config.estimators[e].w, tau_hat);
  });

  McReport report;
  report.reps = config.reps;
  report.seed = config.seed;
  report.sigma = config.sigma;
  report.tau = tau;
  report.tau_target = tau_target;
  report.estimators = detail::reduce_estimates(config, buffer, tau_target);

  std::vector<double> mean(G, 0.0);
  for (std::uint64_t r = 0; r < config.reps; ++r)
    for (std::size_t g = 0; g < G; ++g) mean[g] += tau_hat_buffer[r * G + g];
  for (double& m : mean) m /= static_cast<double>(config.reps);
  std::vector<std::vector<double>> cov(G, std::vector<double>(G, 0.0));
  for (std::uint64_t r = 0; r < config.reps; ++r)
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < G; ++h)
        cov[g][h] += (tau_hat_buffer[r * G + g] - mean[g]) *
                     (tau_hat_buffer[r * G + h] - mean[h]);
  for (auto& row : cov)
    for (double& c : row) c /= static_cast<double>(config.reps);
  report.empirical_cov = std::move(cov);
  return report;
}

// One simulated dataset; checks that the strata-fixed-effects OLS treatment
// coefficient equals the precision-weighted combination of the stratum
// difference-in-means estimates.
inline bool ols_fe_equivalence(const RctDesign& design, std::uint64_t seed) {
  validate_rct(design);
  const std::size_t G = design.strata.size();
  auto rng = detail::rep_rng(seed, 0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::size_t n = 0;
  for (const auto& s : design.strata) n += s.n0 + s.n1;

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), G + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<double> tau_hat(G);
  Eigen::Index row = 0;
  for (std::size_t g = 0; g < G; ++g) {
    const auto& s = design.strata[g];
    double treated = 0.0, control = 0.0;
    for (int i = 0; i < s.n1 + s.n0; ++i) {
      const bool is_treated = i < s.n1;
      const double outcome = noise(rng) + (is_treated ? 0.5 * (g + 1) : 0.0);
      X(row, 0) = 1.0;
      X(row, 1) = is_treated ? 1.0 : 0.0;
      if (g > 0) X(row, 1 + g) = 1.0;
      y(row) = outcome;
      if (is_treated)
        treated += outcome;
      else
        control += outcome;
      ++row;
    }
    tau_hat[g] = treated / s.n1 - control / s.n0;
  }

  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  const double fe_coef = beta(1);
  const double combined = estimate(fe_weights(design), tau_hat);
  return std::abs(fe_coef - combined) <= 1e-8 * std::max(1.0, std::abs(fe_coef));
}

}  // namespace minimax_cate

#pragma once

#include <random>
#include <vector>

#include <minimax_cate/core.hpp>

namespace test_helpers {

// Random uncorrelated sigma-relative problem: p uniform on the simplex,
// v in [0.1, 10].
inline minimax_cate::Problem random_problem(std::mt19937_64& rng, int G, double B) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(G), v(G);
  double total = 0.0;
  for (auto& x : p) {
    x = -std::log(u(rng));
    total += x;
  }
  for (auto& x : p) x /= total;
  for (auto& x : v) x = 0.1 + 9.9 * u(rng);
  minimax_cate::Problem problem;
  problem.p = p;
  problem.variances = v;
  problem.B = B;
  return minimax_cate::validate_problem(problem);
}

inline minimax_cate::WeightVector random_box_point(std::mt19937_64& rng,
                                                   const minimax_cate::Problem& problem) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  minimax_cate::WeightVector w(problem.size());
  for (std::size_t g = 0; g < w.size(); ++g) w[g] = u(rng) * problem.p[g];
  return w;
}

}  // namespace test_helpers

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "minimax_cate/core.hpp"

namespace minimax_cate {

struct GridSpec {
  double resolution = 1e-3;
  bool refine = false;  // one coordinate polish pass from the best grid point
};

// Exhaustive lattice minimization of the worst-case MSE over the box
// prod [0, p_g]. Test/verification tool; cost is (p_g / resolution)^G.
inline std::pair<WeightVector, double> grid_search(const Problem& problem,
                                                   const GridSpec& spec) {
  const std::size_t G = problem.size();
  if (G > 5) throw Error("oracle.TooManyGroups", "grid search is limited to G <= 5");
  double min_positive_p = std::numeric_limits<double>::infinity();
  for (double pg : problem.p)
    if (pg > 0.0) min_positive_p = std::min(min_positive_p, pg);
  if (!(spec.resolution > 0.0) || spec.resolution > min_positive_p / 2.0)
    throw Error("oracle.ResolutionTooCoarse",
                "resolution must be positive and <= min positive p_g / 2");

  // Axis lattices: multiples of the resolution, with the endpoint p_g always
  // included (the w_g = p_g face carries the unshrunk groups).
  std::vector<std::vector<double>> axes(G);
  for (std::size_t g = 0; g < G; ++g) {
    const double pg = problem.p[g];
    const auto steps = static_cast<std::size_t>(std::floor(pg / spec.resolution));
    axes[g].reserve(steps + 2);
    for (std::size_t k = 0; k <= steps; ++k) axes[g].push_back(k * spec.resolution);
    if (axes[g].back() < pg) axes[g].push_back(pg);
  }

  const double B2 = problem.B * problem.B;
  const double s_total = problem.total_share();

  WeightVector current(G, 0.0), best(G, 0.0);
  double best_obj = std::numeric_limits<double>::infinity();

  // Depth-first lexicographic walk carrying the prefix variance and weight
  // sum; strict improvement keeps the lexicographically smallest argmin.
  auto walk = [&](auto&& self, std::size_t g, double var_prefix, double sum_prefix) -> void {
    if (g == G) {
      const double slack = s_total - sum_prefix;
      const double obj = var_prefix + B2 * slack * slack;
      if (obj < best_obj) {
        best_obj = obj;
        best = current;
      }
      return;
    }
    for (double wg : axes[g]) {
      current[g] = wg;
      double cross = 0.0;
      for (std::size_t h = 0; h < g; ++h) cross += problem.covariance(g, h) * current[h];
      const double var_here =
          var_prefix + wg * wg * problem.variances[g] + 2.0 * wg * cross;
      self(self, g + 1, var_here, sum_prefix + wg);
    }
  };
  walk(walk, 0, 0.0, 0.0);

  if (spec.refine) {
    for (std::size_t g = 0; g < G; ++g) {
      double cross = 0.0;
      for (std::size_t h = 0; h < G; ++h)
        if (h != g) cross += (problem.covariance(g, h) + B2) * best[h];
      const double a = problem.variances[g] + B2;
      best[g] = std::clamp((B2 * s_total - cross) / a, 0.0, problem.p[g]);
    }
    best_obj = worst_case_mse(problem, best).total;
  }

  return {best, best_obj};
}

}  // namespace minimax_cate

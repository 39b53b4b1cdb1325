#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "minimax_cate/core.hpp"

namespace minimax_cate {

// Stratified randomized experiment: per-stratum control/treated counts.
struct Stratum {
  int n0 = 0;  // controls
  int n1 = 0;  // treated
};

struct RctDesign {
  std::vector<Stratum> strata;
};

inline void validate_rct(const RctDesign& design) {
  if (design.strata.empty())
    throw Error("designs.EmptyStratum", "design needs at least one stratum");
  for (const auto& s : design.strata)
    if (s.n0 < 1 || s.n1 < 1)
      throw Error("designs.EmptyStratum", "every stratum needs n0 >= 1 and n1 >= 1");
}

// p_g = stratum share of the sample, v_g = 1/n0 + 1/n1 (sigma-relative).
inline Problem rct_to_problem(const RctDesign& design, double B) {
  validate_rct(design);
  Problem problem;
  problem.scale = Scale::kSigmaRelative;
  problem.B = B;
  double n_total = 0.0;
  for (const auto& s : design.strata) n_total += s.n0 + s.n1;
  for (const auto& s : design.strata) {
    problem.p.push_back((s.n0 + s.n1) / n_total);
    problem.variances.push_back(1.0 / s.n0 + 1.0 / s.n1);
  }
  return validate_problem(problem);
}

// Population-share weights: the unbiased aggregation.
inline WeightVector psm_weights(const RctDesign& design) {
  validate_rct(design);
  WeightVector w;
  double n_total = 0.0;
  for (const auto& s : design.strata) n_total += s.n0 + s.n1;
  for (const auto& s : design.strata) w.push_back((s.n0 + s.n1) / n_total);
  return w;
}

// Precision-proportional weights replicating the strata-fixed-effects OLS
// treatment coefficient: w_g proportional to (1/n0 + 1/n1)^{-1}.
inline WeightVector fe_weights(const RctDesign& design) {
  validate_rct(design);
  WeightVector w;
  double total = 0.0;
  for (const auto& s : design.strata) {
    const double precision = 1.0 / (1.0 / s.n0 + 1.0 / s.n1);
    w.push_back(precision);
    total += precision;
  }
  for (double& x : w) x /= total;
  return w;
}

// Staggered-adoption DID panel. t_first is the first treated period (1-based,
// in {2..T}) or kNever. Groups are treated (unit, period) cells.
inline constexpr int kNever = -1;

enum class ControlRule { kNeverTreated, kNotYetTreated };
enum class CovarianceMode { kLinearRepresentation, kPaperVerbatim };

struct DidUnit {
  std::string id;
  int t_first = kNever;
};

struct DidDesign {
  int T = 0;
  std::vector<DidUnit> units;
  ControlRule control_rule = ControlRule::kNeverTreated;
  CovarianceMode covariance_mode = CovarianceMode::kLinearRepresentation;
};

struct Cell {
  std::size_t unit;  // index into design.units
  int period;        // 1-based
};

// Treated cells in unit-major then period order; fixes the group order g.
inline std::vector<Cell> cell_index(const DidDesign& design) {
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < design.units.size(); ++i) {
    const int tf = design.units[i].t_first;
    if (tf == kNever) continue;
    for (int t = tf; t <= design.T; ++t) cells.push_back({i, t});
  }
  return cells;
}

namespace detail {

inline std::vector<std::size_t> control_set(const DidDesign& design, int period) {
  std::vector<std::size_t> controls;
  for (std::size_t j = 0; j < design.units.size(); ++j) {
    const int tf = design.units[j].t_first;
    if (design.control_rule == ControlRule::kNeverTreated) {
      if (tf == kNever) controls.push_back(j);
    } else {
      if (tf == kNever || period < tf) controls.push_back(j);
    }
  }
  return controls;
}

}  // namespace detail

inline void validate_did(const DidDesign& design) {
  if (design.T < 2) throw Error("designs.EmptyControlSet", "panel needs at least 2 periods");
  for (const auto& u : design.units)
    if (u.t_first != kNever && (u.t_first < 2 || u.t_first > design.T))
      throw Error("designs.EmptyControlSet",
                  "t_first must lie in {2..T} so the baseline period exists");
  const auto cells = cell_index(design);
  if (cells.empty())
    throw Error("designs.EmptyControlSet", "design has no treated cell");
  for (const auto& cell : cells)
    if (detail::control_set(design, cell.period).empty())
      throw Error("designs.EmptyControlSet",
                  "no control unit at period " + std::to_string(cell.period));
  // C_{t+1} subset of C_t; holds for both rules, checked anyway.
  for (int t = 2; t < design.T; ++t) {
    const auto now = detail::control_set(design, t);
    const auto next = detail::control_set(design, t + 1);
    for (std::size_t j : next)
      if (std::find(now.begin(), now.end(), j) == now.end())
        throw Error("designs.NonNestedControls", "control sets are not nested over time");
  }
}

// Coefficients of each cell estimator tau_hat_{i,t} on the (unit, period)
// outcome grid, row-major grid index = unit * T + (period - 1):
//   +1 at (i,t), -1 at (i, t_i - 1), and -/+ 1/N_{C_t} over the controls.
inline std::vector<std::vector<double>> did_linear_representation(const DidDesign& design) {
  validate_did(design);
  const auto cells = cell_index(design);
  const std::size_t grid = design.units.size() * static_cast<std::size_t>(design.T);
  std::vector<std::vector<double>> rows(cells.size(), std::vector<double>(grid, 0.0));
  auto at = [&](std::size_t unit, int period) { return unit * design.T + (period - 1); };
  for (std::size_t g = 0; g < cells.size(); ++g) {
    const auto& cell = cells[g];
    const int baseline = design.units[cell.unit].t_first - 1;
    const auto controls = detail::control_set(design, cell.period);
    const double share = 1.0 / static_cast<double>(controls.size());
    rows[g][at(cell.unit, cell.period)] += 1.0;
    rows[g][at(cell.unit, baseline)] -= 1.0;
    for (std::size_t j : controls) {
      rows[g][at(j, cell.period)] -= share;
      rows[g][at(j, baseline)] += share;
    }
  }
  return rows;
}

// Variance/covariance profile of the cell estimators, in sigma^2 units.
// Linear-representation mode takes Gram products of coefficient rows (exact
// under independent homoscedastic untreated outcomes); paper-verbatim mode
// applies the displayed closed forms, which agree whenever N_{C_t} is
// constant over time.
inline Problem did_to_problem(const DidDesign& design, double B,
                              const std::optional<WeightVector>& p_override = std::nullopt) {
  validate_did(design);
  const auto cells = cell_index(design);
  const std::size_t G = cells.size();

  Problem problem;
  problem.scale = Scale::kSigmaRelative;
  problem.B = B;
  if (p_override) {
    detail::check_length(G, p_override->size(), "p_override");
    problem.p = *p_override;
  } else {
    problem.p.assign(G, 1.0 / static_cast<double>(G));
  }

  std::vector<std::vector<double>> cov(G, std::vector<double>(G, 0.0));
  problem.variances.assign(G, 0.0);

  if (design.covariance_mode == CovarianceMode::kLinearRepresentation) {
    const auto rows = did_linear_representation(design);
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t h = g; h < G; ++h) {
        double dot = 0.0;
        for (std::size_t k = 0; k < rows[g].size(); ++k) dot += rows[g][k] * rows[h][k];
        if (h == g)
          problem.variances[g] = dot;
        else
          cov[g][h] = cov[h][g] = dot;
      }
    }
  } else {
    for (std::size_t g = 0; g < G; ++g) {
      const auto& a = cells[g];
      const double nc_a = static_cast<double>(detail::control_set(design, a.period).size());
      problem.variances[g] = 2.0 * (1.0 + 1.0 / nc_a);
      for (std::size_t h = g + 1; h < G; ++h) {
        const auto& b = cells[h];
        const bool same_unit = a.unit == b.unit;
        const bool same_cohort =
            design.units[a.unit].t_first == design.units[b.unit].t_first;
        const int t_late = std::max(a.period, b.period);
        const double nc = static_cast<double>(detail::control_set(design, t_late).size());
        double c;
        if (same_unit)
          c = 1.0 + 1.0 / nc;
        else if (a.period == b.period)
          c = (1.0 / nc) * (1.0 + (same_cohort ? 1.0 : 0.0));
        else
          c = (1.0 / nc) * (same_cohort ? 1.0 : 0.0);
        cov[g][h] = cov[h][g] = c;
      }
    }
  }
  problem.covariances = std::move(cov);
  return validate_problem(problem);
}

}  // namespace minimax_cate

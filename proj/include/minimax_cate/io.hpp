#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "minimax_cate/closed_form.hpp"
#include "minimax_cate/core.hpp"
#include "minimax_cate/designs.hpp"
#include "minimax_cate/simulate.hpp"

namespace minimax_cate {

using nlohmann::json;

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                           const char* what) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok)
      throw Error("io.ParseError",
                  std::string("unknown field \"") + key + "\" in " + what);
  }
}

inline const json& require(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end())
    throw Error("io.ParseError", std::string("missing field \"") + key + "\" in " + what);
  return *it;
}

}  // namespace detail

// ---- Problem ----------------------------------------------------------

inline json problem_to_json(const Problem& problem) {
  json j;
  j["p"] = problem.p;
  j["variances"] = {
      {"scale", problem.scale == Scale::kSigmaRelative ? "sigma" : "absolute"},
      {"values", problem.variances}};
  if (problem.covariances) j["covariances"] = *problem.covariances;
  if (problem.infinite_B())
    j["B"] = "inf";
  else
    j["B"] = problem.B;
  if (problem.sigma) j["sigma"] = *problem.sigma;
  return j;
}

inline Problem problem_from_json(const json& j) {
  detail::reject_unknown(j, {"p", "variances", "covariances", "B", "sigma"}, "problem");
  Problem problem;
  problem.p = detail::require(j, "p", "problem").get<std::vector<double>>();
  const json& variances = detail::require(j, "variances", "problem");
  detail::reject_unknown(variances, {"scale", "values"}, "variances");
  const std::string scale = detail::require(variances, "scale", "variances");
  if (scale == "sigma")
    problem.scale = Scale::kSigmaRelative;
  else if (scale == "absolute")
    problem.scale = Scale::kAbsolute;
  else
    throw Error("io.ParseError", "variances.scale must be \"sigma\" or \"absolute\"");
  problem.variances =
      detail::require(variances, "values", "variances").get<std::vector<double>>();
  if (j.contains("covariances"))
    problem.covariances = j["covariances"].get<std::vector<std::vector<double>>>();
  const json& b = detail::require(j, "B", "problem");
  if (b.is_string()) {
    if (b.get<std::string>() != "inf")
      throw Error("io.ParseError", "B must be a number or \"inf\"");
    problem.B = infinite_bound();
  } else {
    problem.B = b.get<double>();
  }
  if (j.contains("sigma")) problem.sigma = j["sigma"].get<double>();
  return validate_problem(problem);
}

// ---- Solution ---------------------------------------------------------

inline json mse_to_json(const MseDecomposition& mse) {
  json j;
  j["variance"] = mse.variance_term;
  j["bias_sq"] = mse.bias_sq_term;
  j["total"] = mse.total;
  j["scale"] = mse.scale == Scale::kSigmaRelative ? "sigma" : "absolute";
  if (mse.total_absolute) j["total_absolute"] = *mse.total_absolute;
  return j;
}

inline json solution_to_json(const Solution& solution) {
  json j;
  j["w"] = solution.w;
  if (solution.active_set) {
    j["active_set"] = {{"at_zero", solution.active_set->at_zero},
                       {"at_upper", solution.active_set->at_upper}};
  } else if (solution.h_star) {
    j["h_star"] = *solution.h_star;
  }
  j["mse"] = mse_to_json(solution.mse);
  j["kkt_residual"] = solution.kkt_residual;
  j["multipliers"] = solution.multipliers;
  if (!solution.converged) j["converged"] = false;
  return j;
}

// ---- Designs ----------------------------------------------------------

inline json rct_to_json(const RctDesign& design) {
  json strata = json::array();
  for (const auto& s : design.strata) strata.push_back({{"n0", s.n0}, {"n1", s.n1}});
  return json{{"strata", strata}};
}

inline RctDesign rct_from_json(const json& j) {
  detail::reject_unknown(j, {"strata"}, "rct design");
  RctDesign design;
  for (const auto& s : detail::require(j, "strata", "rct design")) {
    detail::reject_unknown(s, {"n0", "n1"}, "stratum");
    design.strata.push_back({detail::require(s, "n0", "stratum").get<int>(),
                             detail::require(s, "n1", "stratum").get<int>()});
  }
  validate_rct(design);
  return design;
}

inline json did_to_json(const DidDesign& design) {
  json units = json::array();
  for (const auto& u : design.units) {
    json ju{{"id", u.id}};
    if (u.t_first == kNever)
      ju["t_first"] = "never";
    else
      ju["t_first"] = u.t_first;
    units.push_back(ju);
  }
  return json{
      {"T", design.T},
      {"units", units},
      {"control_rule",
       design.control_rule == ControlRule::kNeverTreated ? "never" : "notyet"},
      {"covariance_mode",
       design.covariance_mode == CovarianceMode::kLinearRepresentation ? "linear"
                                                                       : "paper"}};
}

inline DidDesign did_from_json(const json& j) {
  detail::reject_unknown(j, {"T", "units", "control_rule", "covariance_mode"},
                         "did design");
  DidDesign design;
  design.T = detail::require(j, "T", "did design").get<int>();
  for (const auto& u : detail::require(j, "units", "did design")) {
    detail::reject_unknown(u, {"id", "t_first"}, "unit");
    DidUnit unit;
    unit.id = detail::require(u, "id", "unit").is_string()
                  ? u["id"].get<std::string>()
                  : u["id"].dump();
    const json& tf = detail::require(u, "t_first", "unit");
    if (tf.is_string()) {
      if (tf.get<std::string>() != "never")
        throw Error("io.ParseError", "t_first must be an integer or \"never\"");
      unit.t_first = kNever;
    } else {
      unit.t_first = tf.get<int>();
    }
    design.units.push_back(std::move(unit));
  }
  const std::string rule = detail::require(j, "control_rule", "did design");
  if (rule == "never")
    design.control_rule = ControlRule::kNeverTreated;
  else if (rule == "notyet")
    design.control_rule = ControlRule::kNotYetTreated;
  else
    throw Error("io.ParseError", "control_rule must be \"never\" or \"notyet\"");
  if (j.contains("covariance_mode")) {
    const std::string mode = j["covariance_mode"];
    if (mode == "linear")
      design.covariance_mode = CovarianceMode::kLinearRepresentation;
    else if (mode == "paper")
      design.covariance_mode = CovarianceMode::kPaperVerbatim;
    else
      throw Error("io.ParseError", "covariance_mode must be \"linear\" or \"paper\"");
  }
  validate_did(design);
  return design;
}

// Panel CSV with columns unit,period,treated (optional header). Infers
// t_first per unit and checks that treatment is absorbing.
inline DidDesign did_from_panel_csv(std::istream& in, ControlRule rule,
                                    CovarianceMode mode) {
  struct Row {
    std::string unit;
    int period;
    int treated;
  };
  std::vector<Row> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string unit, period_s, treated_s;
    if (!std::getline(ss, unit, ',') || !std::getline(ss, period_s, ',') ||
        !std::getline(ss, treated_s))
      throw Error("io.ParseError", "panel CSV rows need unit,period,treated");
    if (first && (period_s == "period" || unit == "unit")) {
      first = false;
      continue;  // header
    }
    first = false;
    try {
      rows.push_back({unit, std::stoi(period_s), std::stoi(treated_s)});
    } catch (const std::exception&) {
      throw Error("io.ParseError", "panel CSV: period and treated must be integers");
    }
  }
  if (rows.empty()) throw Error("io.ParseError", "panel CSV is empty");

  DidDesign design;
  design.control_rule = rule;
  design.covariance_mode = mode;
  std::vector<std::string> order;
  std::vector<std::vector<std::pair<int, int>>> per_unit;  // (period, treated)
  for (const auto& row : rows) {
    std::size_t idx = 0;
    for (; idx < order.size(); ++idx)
      if (order[idx] == row.unit) break;
    if (idx == order.size()) {
      order.push_back(row.unit);
      per_unit.emplace_back();
    }
    per_unit[idx].emplace_back(row.period, row.treated);
    design.T = std::max(design.T, row.period);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& obs = per_unit[i];
    std::sort(obs.begin(), obs.end());
    if (static_cast<int>(obs.size()) != design.T)
      throw Error("io.ParseError", "panel CSV: unit " + order[i] +
                                       " does not cover every period 1..T");
    int t_first = kNever;
    for (const auto& [period, treated] : obs) {
      if (treated != 0 && treated != 1)
        throw Error("io.ParseError", "panel CSV: treated must be 0 or 1");
      if (treated == 1 && t_first == kNever) t_first = period;
      if (treated == 0 && t_first != kNever)
        throw Error("io.ParseError",
                    "panel CSV: treatment must be absorbing (unit " + order[i] + ")");
    }
    design.units.push_back({order[i], t_first});
  }
  validate_did(design);
  return design;
}

// ---- Monte-Carlo config / report --------------------------------------

inline McConfig mc_config_from_json(const json& j) {
  detail::reject_unknown(
      j, {"reps", "seed", "sigma", "B", "tau_rule", "estimators", "threads"},
      "mc config");
  McConfig config;
  config.reps = detail::require(j, "reps", "mc config").get<std::uint64_t>();
  config.seed = detail::require(j, "seed", "mc config").get<std::uint64_t>();
  config.sigma = detail::require(j, "sigma", "mc config").get<double>();
  if (j.contains("B")) config.B = j["B"].get<double>();
  if (j.contains("threads")) config.threads = j["threads"].get<unsigned>();
  const json& rule = detail::require(j, "tau_rule", "mc config");
  detail::reject_unknown(rule, {"kind", "values", "w_ref"}, "tau_rule");
  const std::string kind = detail::require(rule, "kind", "tau_rule");
  if (kind == "zero") {
    config.tau_rule.kind = TauRule::Kind::kZero;
  } else if (kind == "explicit") {
    config.tau_rule.kind = TauRule::Kind::kExplicit;
    config.tau_rule.values =
        detail::require(rule, "values", "tau_rule").get<std::vector<double>>();
  } else if (kind == "adversarial") {
    config.tau_rule.kind = TauRule::Kind::kAdversarial;
    config.tau_rule.w_ref =
        detail::require(rule, "w_ref", "tau_rule").get<std::vector<double>>();
  } else {
    throw Error("io.ParseError", "tau_rule.kind must be zero, explicit or adversarial");
  }
  for (const auto& e : detail::require(j, "estimators", "mc config")) {
    detail::reject_unknown(e, {"name", "w"}, "estimator");
    config.estimators.push_back(
        {detail::require(e, "name", "estimator").get<std::string>(),
         detail::require(e, "w", "estimator").get<std::vector<double>>()});
  }
  return config;
}

inline json mc_report_to_json(const McReport& report) {
  json estimators = json::array();
  for (const auto& e : report.estimators)
    estimators.push_back({{"name", e.name},
                          {"mean", e.mean},
                          {"bias", e.bias},
                          {"variance", e.variance},
                          {"mse", e.mse},
                          {"mc_se_mse", e.mc_se_mse}});
  json j{{"reps", report.reps},
         {"seed", report.seed},
         {"sigma", report.sigma},
         {"tau", report.tau},
         {"tau_target", report.tau_target},
         {"estimators", estimators}};
  if (report.empirical_cov) j["empirical_cov"] = *report.empirical_cov;
  return j;
}

inline std::string mc_report_to_csv(const McReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "name,bias,variance,mse,mc_se_mse,reps,seed\n";
  for (const auto& e : report.estimators)
    out << e.name << ',' << e.bias << ',' << e.variance << ',' << e.mse << ','
        << e.mc_se_mse << ',' << report.reps << ',' << report.seed << '\n';
  return out.str();
}

}  // namespace minimax_cate

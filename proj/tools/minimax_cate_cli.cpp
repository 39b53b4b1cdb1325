#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <minimax_cate/minimax_cate.hpp>

namespace {

using namespace minimax_cate;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io.ParseError", "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("io.ParseError", path + ": " + e.what());
  }
  return j;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error("io.ParseError", "cannot write " + out_path);
  out << text << '\n';
}

unsigned thread_cap(unsigned requested) {
  unsigned resolved = requested;
  if (const char* env = std::getenv("MINIMAX_CATE_THREADS")) {
    const unsigned cap = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    if (cap >= 1) resolved = resolved == 0 ? cap : std::min(resolved, cap);
  }
  return resolved == 0 ? 1 : resolved;
}

void print_summary(const Solution& solution) {
  const double sum_w =
      std::accumulate(solution.w.begin(), solution.w.end(), 0.0);
  std::cout << "minimax weights:";
  if (solution.h_star)
    std::cout << " h*=" << *solution.h_star;
  else if (solution.active_set)
    std::cout << " active(0/p)=" << solution.active_set->at_zero.size() << "/"
              << solution.active_set->at_upper.size();
  std::cout << " sum(w)=" << sum_w << " worst-case MSE=" << solution.mse.total
            << (solution.mse.scale == Scale::kSigmaRelative ? " (x sigma^2)" : "")
            << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Minimax-MSE weighting of group treatment-effect estimators"};
  app.require_subcommand(1);

  std::string input, config_path, out_path, panel_path;
  std::string format = "json", control_rule = "never", covariance_mode = "linear";
  double B = 1.0;
  bool force_qp = false, refine = false;
  double resolution = 1e-3;
  std::optional<std::uint64_t> seed_override, reps_override;

  auto* solve = app.add_subcommand("solve", "minimax weights for a problem file");
  solve->add_option("input", input, "problem JSON")->required();
  solve->add_option("-o,--output", out_path, "output path (default stdout)");
  solve->add_flag("--force-qp", force_qp, "use the QP solver even without covariances");

  auto* solve_qp_cmd = app.add_subcommand("solve-qp", "box-QP solve of a problem file");
  solve_qp_cmd->add_option("input", input)->required();
  solve_qp_cmd->add_option("-o,--output", out_path);

  auto* design_rct = app.add_subcommand("design-rct", "problem from stratified RCT counts");
  design_rct->add_option("input", input, "rct design JSON")->required();
  design_rct->add_option("--B", B, "CATE bound (sigma units)")->required();
  design_rct->add_option("-o,--output", out_path);

  auto* design_did = app.add_subcommand("design-did", "problem from staggered DID panel");
  design_did->add_option("input", input, "did design JSON");
  design_did->add_option("--panel", panel_path, "panel CSV (unit,period,treated)");
  design_did->add_option("--B", B, "CATE bound (sigma units)")->required();
  design_did->add_option("--control-rule", control_rule, "never|notyet (panel input)");
  design_did->add_option("--covariance-mode", covariance_mode, "linear|paper (panel input)");
  design_did->add_option("-o,--output", out_path);

  auto* sim_rct = app.add_subcommand("simulate-rct", "Monte-Carlo study on an RCT design");
  sim_rct->add_option("design", input)->required();
  sim_rct->add_option("config", config_path)->required();
  sim_rct->add_option("-o,--output", out_path);
  sim_rct->add_option("--format", format, "json|csv");
  sim_rct->add_option("--seed", seed_override);
  sim_rct->add_option("--reps", reps_override);

  auto* sim_did = app.add_subcommand("simulate-did", "Monte-Carlo study on a DID design");
  sim_did->add_option("design", input)->required();
  sim_did->add_option("config", config_path)->required();
  sim_did->add_option("-o,--output", out_path);
  sim_did->add_option("--format", format, "json|csv");
  sim_did->add_option("--seed", seed_override);
  sim_did->add_option("--reps", reps_override);

  auto* oracle_cmd = app.add_subcommand("oracle", "grid-search verification of a problem");
  oracle_cmd->add_option("input", input)->required();
  oracle_cmd->add_option("--resolution", resolution);
  oracle_cmd->add_flag("--refine", refine);
  oracle_cmd->add_option("-o,--output", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2
  }

  if (solve->parsed() || solve_qp_cmd->parsed()) {
    const Problem problem = problem_from_json(load_json(input));
    const bool use_qp = solve_qp_cmd->parsed() || force_qp || problem.has_covariances();
    const Solution solution = use_qp ? minimax_cate::solve_qp(problem)
                                     : solve_minimax(problem);
    print_summary(solution);
    emit(out_path, solution_to_json(solution).dump(2));
  } else if (design_rct->parsed()) {
    const Problem problem = rct_to_problem(rct_from_json(load_json(input)), B);
    std::cout << "rct problem: G=" << problem.size() << " B=" << problem.B << '\n';
    emit(out_path, problem_to_json(problem).dump(2));
  } else if (design_did->parsed()) {
    DidDesign design;
    if (!panel_path.empty()) {
      std::ifstream in(panel_path);
      if (!in) throw Error("io.ParseError", "cannot read " + panel_path);
      const auto rule = control_rule == "notyet" ? ControlRule::kNotYetTreated
                                                 : ControlRule::kNeverTreated;
      const auto mode = covariance_mode == "paper"
                            ? CovarianceMode::kPaperVerbatim
                            : CovarianceMode::kLinearRepresentation;
      design = did_from_panel_csv(in, rule, mode);
    } else if (!input.empty()) {
      design = did_from_json(load_json(input));
    } else {
      throw Error("io.ParseError", "design-did needs a design JSON or --panel CSV");
    }
    const Problem problem = did_to_problem(design, B);
    std::cout << "did problem: G=" << problem.size() << " B=" << problem.B << '\n';
    emit(out_path, problem_to_json(problem).dump(2));
  } else if (sim_rct->parsed() || sim_did->parsed()) {
    McConfig config = mc_config_from_json(load_json(config_path));
    if (seed_override) config.seed = *seed_override;
    if (reps_override) config.reps = *reps_override;
    config.threads = thread_cap(config.threads);
    McReport report;
    if (sim_rct->parsed())
      report = simulate_rct(rct_from_json(load_json(input)), config);
    else
      report = simulate_did(did_from_json(load_json(input)), config);
    for (const auto& e : report.estimators)
      std::cout << e.name << ": bias=" << e.bias << " var=" << e.variance
                << " mse=" << e.mse << " (+-" << e.mc_se_mse << ")\n";
    if (format == "csv")
      emit(out_path, mc_report_to_csv(report));
    else
      emit(out_path, mc_report_to_json(report).dump(2));
  } else if (oracle_cmd->parsed()) {
    const Problem problem = problem_from_json(load_json(input));
    const auto [w, objective] = grid_search(problem, {resolution, refine});
    std::cout << "grid optimum: objective=" << objective << '\n';
    json j{{"w", w}, {"mse", mse_to_json(worst_case_mse(problem, w))}};
    emit(out_path, j.dump(2));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    json report{{"error", {{"code", e.code()}, {"message", e.what()}}}};
    std::cerr << report.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    json report{{"error", {{"code", "cli.Unexpected"}, {"message", e.what()}}}};
    std::cerr << report.dump() << '\n';
    return 1;
  }
}

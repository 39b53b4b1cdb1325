#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include <minimax_cate/closed_form.hpp>
#include <minimax_cate/oracle.hpp>

#include "test_helpers.hpp"

using namespace minimax_cate;

namespace {

Problem make(std::vector<double> p, std::vector<double> v, double B) {
  Problem problem;
  problem.p = std::move(p);
  problem.variances = std::move(v);
  problem.B = B;
  return validate_problem(problem);
}

}  // namespace

TEST_CASE("scalar grid minimum sits at 1/2") {
  const auto [w, obj] = grid_search(make({1.0}, {1.0}, 1.0), {1e-3, false});
  CHECK(w[0] == Catch::Approx(0.5).margin(1e-3));
  CHECK(obj == Catch::Approx(0.5).margin(1e-5));
}

TEST_CASE("two-group grid matches the closed form") {
  const auto [w, obj] = grid_search(make({0.5, 0.5}, {1.0, 1.0}, 1.0), {1e-3, false});
  CHECK(w[0] == Catch::Approx(1.0 / 3).margin(1e-3));
  CHECK(obj == Catch::Approx(1.0 / 3).margin(1e-5));
}

TEST_CASE("the grid never beats the true optimum") {
  std::mt19937_64 rng(83);
  for (int it = 0; it < 20; ++it) {
    auto problem = test_helpers::random_problem(rng, 1 + it % 3, 1.0);
    while (*std::min_element(problem.p.begin(), problem.p.end()) < 2.5e-3)
      problem = test_helpers::random_problem(rng, 1 + it % 3, 1.0);
    const auto sol = solve_minimax(problem);
    const auto [w, obj] = grid_search(problem, {1e-3, false});
    CHECK(obj >= sol.mse.total - 1e-12);
  }
}

TEST_CASE("the gap shrinks as the resolution halves") {
  std::mt19937_64 rng(89);
  for (int it = 0; it < 10; ++it) {
    auto problem = test_helpers::random_problem(rng, 2, 1.0);
    while (*std::min_element(problem.p.begin(), problem.p.end()) < 0.05)
      problem = test_helpers::random_problem(rng, 2, 1.0);
    const double truth = solve_minimax(problem).mse.total;
    const auto [w1, coarse] = grid_search(problem, {8e-3, false});
    const auto [w2, fine] = grid_search(problem, {4e-3, false});
    CHECK(fine <= coarse + 1e-15);
    CHECK(fine - truth <= (coarse - truth) + 1e-15);
  }
}

TEST_CASE("refinement polishes the grid point") {
  auto problem = make({0.5, 0.5}, {1.0, 1.0}, 1.0);
  const auto [w_raw, raw] = grid_search(problem, {1e-2, false});
  const auto [w_ref, refined] = grid_search(problem, {1e-2, true});
  CHECK(refined <= raw + 1e-15);
}

TEST_CASE("guards: group count and resolution") {
  Problem big;
  big.p.assign(6, 1.0 / 6);
  big.variances.assign(6, 1.0);
  big.B = 1.0;
  CHECK_THROWS_MATCHES(grid_search(validate_problem(big), {1e-3, false}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == "oracle.TooManyGroups";
                       }));
  CHECK_THROWS_MATCHES(grid_search(make({0.5, 0.5}, {1.0, 1.0}, 1.0), {0.4, false}),
                       Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == "oracle.ResolutionTooCoarse";
                       }));
}

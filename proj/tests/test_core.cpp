#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include <minimax_cate/core.hpp>

#include "test_helpers.hpp"

using namespace minimax_cate;

TEST_CASE("validate_problem accepts well-formed input") {
  Problem raw;
  raw.p = {0.5, 0.5};
  raw.variances = {1.0, 1.0};
  raw.B = 1.0;
  CHECK_NOTHROW(validate_problem(raw));
}

TEST_CASE("validate_problem rejects non-positive variance") {
  Problem raw;
  raw.p = {0.5, 0.5};
  raw.variances = {1.0, -1.0};
  raw.B = 1.0;
  CHECK_THROWS_MATCHES(validate_problem(raw), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == "core.NonPositiveVariance";
                       }));
}

TEST_CASE("validate_problem rejects an indefinite variance-covariance matrix") {
  // diag(1,1) + [[0,2],[2,0]] has eigenvalues -1 and 3.
  Problem raw;
  raw.p = {0.5, 0.5};
  raw.variances = {1.0, 1.0};
  raw.covariances = {{{0.0, 2.0}, {2.0, 0.0}}};
  raw.B = 1.0;
  CHECK_THROWS_MATCHES(validate_problem(raw), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == "core.NotPSD";
                       }));
}

TEST_CASE("validate_problem error catalog") {
  auto code_of = [](Problem raw) -> std::string {
    try {
      validate_problem(raw);
    } catch (const Error& e) {
      return e.code();
    }
    return "";
  };
  Problem base;
  base.p = {0.5, 0.5};
  base.variances = {1.0, 1.0};
  base.B = 1.0;

  Problem bad = base;
  bad.p = {0.5, -0.5};
  CHECK(code_of(bad) == "core.NegativeShare");

  bad = base;
  bad.B = 0.0;
  CHECK(code_of(bad) == "core.NonPositiveB");

  bad = base;
  bad.variances = {1.0};
  CHECK(code_of(bad) == "core.LengthMismatch");

  bad = base;
  bad.covariances = {{{0.0, -0.1}, {-0.1, 0.0}}};
  CHECK(code_of(bad) == "core.NegativeCovariance");

  bad = base;
  bad.covariances = {{{0.0, 0.1}, {0.2, 0.0}}};
  CHECK(code_of(bad) == "core.AsymmetricCovariance");
}

TEST_CASE("worst_case_mse at w = p has no bias term") {
  Problem problem;
  problem.p = {0.5, 0.5};
  problem.variances = {1.0, 1.0};
  problem.B = 1.0;
  problem = validate_problem(problem);
  const auto mse = worst_case_mse(problem, {0.5, 0.5});
  CHECK(mse.variance_term == Catch::Approx(0.5));
  CHECK(mse.bias_sq_term == 0.0);
  CHECK(mse.total == Catch::Approx(0.5));
}

TEST_CASE("worst_case_mse with a covariance term") {
  Problem problem;
  problem.p = {0.5, 0.5};
  problem.variances = {1.0, 1.0};
  problem.covariances = {{{0.0, 0.5}, {0.5, 0.0}}};
  problem.B = 1.0;
  problem = validate_problem(problem);
  const auto mse = worst_case_mse(problem, {0.25, 0.25});
  CHECK(mse.variance_term == Catch::Approx(0.1875));
  CHECK(mse.bias_sq_term == Catch::Approx(0.25));
  CHECK(mse.total == Catch::Approx(0.4375));
}

TEST_CASE("worst_case_mse zero-weight case") {
  Problem problem;
  problem.p = {1.0};
  problem.variances = {2.0};
  problem.B = 3.0;
  problem = validate_problem(problem);
  const auto mse = worst_case_mse(problem, {0.0});
  CHECK(mse.variance_term == 0.0);
  CHECK(mse.bias_sq_term == Catch::Approx(9.0));
  CHECK(mse.total == Catch::Approx(9.0));
}

TEST_CASE("adversarial_cates sign rule") {
  Problem problem;
  problem.p = {0.5, 0.5};
  problem.variances = {1.0, 1.0};
  problem.B = 1.0;
  problem.sigma = 1.0;
  problem = validate_problem(problem);
  const auto tau = adversarial_cates(problem, {0.3, 0.6});
  CHECK(tau[0] == -1.0);
  CHECK(tau[1] == 1.0);
}

TEST_CASE("adversarial_cates ties take the positive sign") {
  Problem problem;
  problem.p = {0.25, 0.75};
  problem.variances = {1.0, 1.0};
  problem.B = 2.0;
  problem.sigma = 1.0;
  problem = validate_problem(problem);
  const auto tau = adversarial_cates(problem, problem.p);
  CHECK(tau == std::vector<double>{2.0, 2.0});
}

TEST_CASE("adversarial_cates scales with sigma") {
  Problem problem;
  problem.p = {0.5, 0.5};
  problem.variances = {1.0, 1.0};
  problem.B = 1.0;
  problem.sigma = 3.0;
  problem = validate_problem(problem);
  const auto tau = adversarial_cates(problem, {0.0, 0.0});
  CHECK(tau == std::vector<double>{-3.0, -3.0});
}

TEST_CASE("estimate is the dot product") {
  CHECK(estimate({0.5, 0.5}, {2.0, 4.0}) == Catch::Approx(3.0));
  CHECK(estimate({1.0, 0.0}, {7.0, -3.0}) == Catch::Approx(7.0));
  CHECK(estimate({0.0, 0.0, 0.0}, {5.0, 6.0, 7.0}) == 0.0);
  CHECK_THROWS_AS(estimate({1.0}, {1.0, 2.0}), Error);
}

TEST_CASE("exact MSE never exceeds the bound; equality at the adversarial point") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    auto problem = test_helpers::random_problem(rng, 1 + it % 4, 1.0);
    auto w = test_helpers::random_box_point(rng, problem);
    // random admissible CATE profile (sigma units, |tau| <= B)
    std::vector<double> tau(problem.size());
    for (auto& t : tau) t = problem.B * u(rng);
    double bias = 0.0;
    for (std::size_t g = 0; g < w.size(); ++g) bias += (w[g] - problem.p[g]) * tau[g];
    double variance = 0.0;
    for (std::size_t g = 0; g < w.size(); ++g)
      variance += w[g] * w[g] * problem.variances[g];
    const double exact = variance + bias * bias;
    const auto bound = worst_case_mse(problem, w);
    CHECK(exact <= bound.total + 1e-12);

    problem.sigma = 1.0;
    const auto adversarial = adversarial_cates(problem, w);
    double worst_bias = 0.0;
    for (std::size_t g = 0; g < w.size(); ++g)
      worst_bias += (w[g] - problem.p[g]) * adversarial[g];
    CHECK(variance + worst_bias * worst_bias ==
          Catch::Approx(bound.total).margin(1e-12));
  }
}

TEST_CASE("worst_case_mse is permutation invariant") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 100; ++it) {
    const int G = 2 + it % 3;
    auto problem = test_helpers::random_problem(rng, G, 2.0);
    auto w = test_helpers::random_box_point(rng, problem);
    std::vector<std::size_t> perm(G);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Problem shuffled = problem;
    WeightVector w2(G);
    for (int g = 0; g < G; ++g) {
      shuffled.p[g] = problem.p[perm[g]];
      shuffled.variances[g] = problem.variances[perm[g]];
      w2[g] = w[perm[g]];
    }
    CHECK(worst_case_mse(shuffled, w2).total ==
          Catch::Approx(worst_case_mse(problem, w).total).epsilon(1e-12));
  }
}

TEST_CASE("sigma-relative decomposition ignores sigma; absolute total scales by sigma^2") {
  std::mt19937_64 rng(13);
  auto problem = test_helpers::random_problem(rng, 3, 1.5);
  auto w = test_helpers::random_box_point(rng, problem);
  const auto base = worst_case_mse(problem, w);
  problem.sigma = 2.5;
  const auto scaled = worst_case_mse(problem, w);
  CHECK(scaled.total == base.total);
  REQUIRE(scaled.total_absolute.has_value());
  CHECK(*scaled.total_absolute == Catch::Approx(base.total * 2.5 * 2.5));
}

TEST_CASE("bias term vanishes exactly iff w = p") {
  std::mt19937_64 rng(17);
  for (int it = 0; it < 100; ++it) {
    auto problem = test_helpers::random_problem(rng, 1 + it % 4, 1.0);
    CHECK(worst_case_mse(problem, problem.p).bias_sq_term == 0.0);
    auto w = problem.p;
    w[it % w.size()] *= 0.9;
    CHECK(worst_case_mse(problem, w).bias_sq_term > 0.0);
  }
}

TEST_CASE("decomposition identity total = variance + bias_sq") {
  std::mt19937_64 rng(19);
  for (int it = 0; it < 500; ++it) {
    auto problem = test_helpers::random_problem(rng, 1 + it % 5, 0.5 + it % 3);
    auto w = test_helpers::random_box_point(rng, problem);
    const auto mse = worst_case_mse(problem, w);
    CHECK(mse.total == mse.variance_term + mse.bias_sq_term);
  }
}

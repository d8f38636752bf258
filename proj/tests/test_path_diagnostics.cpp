#include <cmath>

#include <doctest.h>

#include "robcv/error.hpp"
#include "robcv/path_diagnostics.hpp"

using namespace robcv;

TEST_CASE("total variation") {
  CHECK(total_variation({1, 3, 2}) == 3);
  CHECK(total_variation({}) == 0);
  CHECK(total_variation({5}) == 0);
  CHECK(total_variation({1, NAN, 4, INFINITY, 2}) == 5);
}

TEST_CASE("discontinuity detection") {
  std::vector<double> lambdas, trace;
  for (int t = 0; t < 40; ++t) {
    lambdas.push_back(40 - t);
    trace.push_back(0.01 * t + (t >= 25 ? 5.0 : 0.0));
  }
  const auto jumps = detect_discontinuities(lambdas, trace);
  REQUIRE(jumps.size() == 1);
  CHECK(jumps[0].index == 24);
  CHECK(jumps[0].jump == doctest::Approx(5.01));
  CHECK(jumps[0].lambda_before == 16);
  CHECK(detect_discontinuities(lambdas, std::vector<double>(40, 1.0)).empty());
  CHECK_THROWS_AS(detect_discontinuities(lambdas, {1, 2}), Error);
}

TEST_CASE("linear grid") {
  const auto g = UnivariateScenario::linear_grid(0.006, 0.0001, 60);
  CHECK(g.size() == 60);
  CHECK(g.front() == 0.006);
  CHECK(g.back() == doctest::Approx(0.0001));
  for (std::size_t t = 1; t < g.size(); ++t) CHECK(g[t - 1] - g[t] == doctest::Approx(0.0059 / 59));
}

TEST_CASE("enumeration finds both basins") {
  const UnivariateScenario s = UnivariateScenario::with_rho(RhoKind::kBisquare);
  const Dataset data = generate_univariate(s);
  CHECK(s.contaminated_count() == 30);
  for (double lambda : {0.005, 0.001}) {
    const auto minima = enumerate_univariate_minima(s, data, lambda);
    int near_bad = 0, near_good = 0;
    for (const auto& m : minima) {
      near_bad += std::abs(m.location - expected_bad_branch(s, lambda)) < 5 * bad_branch_se(s, lambda);
      near_good += std::abs(m.location - expected_good_branch(s, lambda)) < 5 * good_branch_se(s, lambda);
      // Stationarity of the smooth part up to the penalty.
      if (m.location != 0) {
        const double h = 1e-7;
        const double left = univariate_objective(data, s.rho, lambda, m.location - h);
        const double right = univariate_objective(data, s.rho, lambda, m.location + h);
        CHECK(m.objective <= left + 1e-12);
        CHECK(m.objective <= right + 1e-12);
      }
    }
    CHECK(near_bad == 1);
    CHECK(near_good == 1);
  }
  // Refining the grid does not move the minima.
  const auto coarse = enumerate_univariate_minima(s, data, 0.003);
  const auto fine = enumerate_univariate_minima(s, data, 0.003, EnumerationOptions{40000, 1e-8});
  REQUIRE(coarse.size() == fine.size());
  for (std::size_t k = 0; k < coarse.size(); ++k) CHECK(std::abs(coarse[k].location - fine[k].location) < 1e-6);
}

TEST_CASE("a single population has a single minimum") {
  UnivariateScenario s = UnivariateScenario::with_rho(RhoKind::kBisquare);
  s.b = 0;
  const Dataset data = generate_univariate(s);
  // Without a penalty the M-estimate is the only minimum.
  const auto unpenalized = enumerate_univariate_minima(s, data, 0.0);
  REQUIRE(unpenalized.size() == 1);
  CHECK(unpenalized[0].location == doctest::Approx(s.beta_star).epsilon(1e-3));
  // With a penalty, zero is also a local minimum: every residual 100 x_i sits
  // on the flat part of rho. Away from zero the minimum stays unique.
  for (double lambda : {0.005, 0.0001}) {
    const auto minima = enumerate_univariate_minima(s, data, lambda);
    REQUIRE(minima.size() == 2);
    CHECK(minima[0].location == 0);
    CHECK(minima[1].location == doctest::Approx(expected_good_branch(s, lambda)).epsilon(1e-3));
  }
}

TEST_CASE("the global path jumps while each branch is smooth") {
  for (RhoKind kind : {RhoKind::kBisquare, RhoKind::kLqq}) {
    CAPTURE(to_string(kind));
    const UnivariateScenario s = UnivariateScenario::with_rho(kind);
    PathDemoOptions options;
    options.enumerate = kind == RhoKind::kBisquare;
    const PathReport report = run_path_demo(s, options);
    REQUIRE(report.branches.size() == 2);
    CHECK(report.global_jumps.size() == 1);
    if (!report.global_jumps.empty()) {
      CHECK(std::abs(report.global_jumps[0].jump) > 80);
      CHECK(std::abs(report.global_jumps[0].jump) < 110);
    }
    CHECK(report.branch_jumps[0].empty());
    CHECK(report.branch_jumps[1].empty());
    CHECK(report.branch_deviation_se[0] <= 3);
    CHECK(report.branch_deviation_se[1] <= 3);
    if (options.enumerate) {
      // The path optimizer finds the enumerated global minimum.
      for (std::size_t t = 0; t < s.lambdas.size(); ++t) {
        CHECK(std::abs(report.global_trace[t] - report.enumerated_global[t]) < 1e-3);
      }
    }
  }
}

TEST_CASE("no jump without contamination") {
  UnivariateScenario s = UnivariateScenario::with_rho(RhoKind::kBisquare);
  s.b = 0;
  PathDemoOptions options;
  options.enumerate = false;
  SUBCASE("below the lambda at which zero stops being global") {
    s.lambdas = UnivariateScenario::linear_grid(0.003, 0.0001, 60);
    CHECK(run_path_demo(s, options).global_jumps.empty());
  }
  SUBCASE("the only jump on the default grid leaves the zero solution") {
    const PathReport report = run_path_demo(s, options);
    REQUIRE(report.global_jumps.size() == 1);
    CHECK(report.global_trace[report.global_jumps[0].index] == 0);
    for (std::size_t t = report.global_jumps[0].index + 1; t < s.lambdas.size(); ++t) {
      CHECK(report.global_trace[t] == doctest::Approx(expected_good_branch(s, s.lambdas[t])).epsilon(1e-3));
    }
  }
}

TEST_CASE("scenario validation") {
  UnivariateScenario s;
  s.b = 0.6;
  CHECK_THROWS_AS(generate_univariate(s), Error);
  s = UnivariateScenario{};
  s.lambdas = {0.1, 0.2};
  CHECK_THROWS_AS(s.validate(), Error);
}

#include <cmath>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "robcv/error.hpp"
#include "robcv/path_diagnostics.hpp"
#include "robcv/pense.hpp"
#include "robcv/simulation.hpp"

using namespace robcv;

namespace {

Dataset contaminated(int n, int p, std::uint64_t seed, double fraction = 0.2) {
  const auto d = oracle::gaussian(n, p, seed);
  Dataset data{d.x, d.y};
  const int bad = static_cast<int>(fraction * n);
  for (int i = 0; i < bad; ++i) data.y[i] += 25.0;
  return data;
}

LossSpec square_loss() { return LossSpec::m_loss(RhoFunction::square(), 1.0); }

}  // namespace

TEST_CASE("objective is recomputed from its parts") {
  const Dataset data = contaminated(60, 5, 3);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  const PenaltySpec penalty{0.3, 0.5, {}};
  const LocalMinimum m = local_optimize(data, loss, penalty, Coefficients{0, Eigen::VectorXd::Zero(5)});
  const Eigen::VectorXd r = data.y - predict(data.x, m.coef);
  MScaleSpec spec;
  spec.delta = 0.4;
  const double scale = m_scale(r, loss.rho, spec);
  CHECK(m.scale == doctest::Approx(scale).epsilon(1e-8));
  CHECK(m.objective == doctest::Approx(0.5 * m.scale * m.scale + penalty.evaluate(m.coef.beta)).epsilon(1e-12));
  CHECK(m.objective == doctest::Approx(0.5 * scale * scale + penalty.evaluate(m.coef.beta)).epsilon(1e-7));
  CHECK(within_zero_weight_cap(m, loss));
}

TEST_CASE("m-loss objective") {
  const Dataset data = contaminated(40, 3, 4);
  const LossSpec loss = LossSpec::m_loss(calibrate_cutoff(RhoKind::kBisquare, 0.5), 2.0);
  const PenaltySpec penalty{0.1, 1.0, {}};
  Coefficients c{0.5, Eigen::VectorXd::Constant(3, 0.3)};
  const Eigen::VectorXd r = data.y - predict(data.x, c);
  double acc = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) acc += loss.rho.rho(r[i] / 2.0);
  CHECK(evaluate_objective(data, loss, penalty, c).objective ==
        doctest::Approx(4.0 / 40 * acc + penalty.evaluate(c.beta)).epsilon(1e-12));
}

TEST_CASE("local minima are fixed points") {
  const Dataset data = contaminated(80, 6, 8);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.25);
  const PenaltySpec penalty{0.2, 0.75, {}};
  const LocalMinimum first = local_optimize(data, loss, penalty, Coefficients{0, Eigen::VectorXd::Zero(6)});
  const LocalMinimum again = local_optimize(data, loss, penalty, first.coef);
  CHECK(again.iterations <= 1);
  CHECK(relative_distance(first.coef, again.coef) < 1e-6);
  CHECK(again.objective <= first.objective + 1e-12);
}

TEST_CASE("square loss reduces to the unit-weight elastic net") {
  const auto d = oracle::gaussian(50, 6, 12);
  const Dataset data{d.x, d.y};
  const PenaltySpec penalty{0.1, 1.0, {}};
  const LocalMinimum m = local_optimize(data, square_loss(), penalty, Coefficients{0, Eigen::VectorXd::Zero(6)});
  double b0 = 0;
  const Eigen::VectorXd reference = oracle::lasso(d.x, d.y, 0.1, &b0);
  CHECK((m.coef.beta - reference).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(m.coef.intercept == doctest::Approx(b0).epsilon(1e-6));
}

TEST_CASE("outer iterations never increase the objective") {
  const Dataset data = contaminated(60, 8, 21, 0.3);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kLqq, 0.4);
  const PenaltySpec penalty{0.05, 0.5, {}};
  OptimizerOptions one_step;
  one_step.max_iterations = 1;
  Coefficients current{0, Eigen::VectorXd::Zero(8)};
  double prev = evaluate_objective(data, loss, penalty, current).objective;
  for (int it = 0; it < 40; ++it) {
    const LocalMinimum m = local_optimize(data, loss, penalty, current, one_step);
    CHECK(m.objective <= prev + 1e-12 * (1 + std::abs(prev)));
    prev = m.objective;
    current = m.coef;
  }
}

TEST_CASE("univariate minima follow their basins") {
  const UnivariateScenario scenario = UnivariateScenario::with_rho(RhoKind::kBisquare);
  const Dataset data = generate_univariate(scenario);
  const LossSpec loss = LossSpec::m_loss(scenario.rho, 1.0);
  OptimizerOptions options;
  options.intercept = false;
  const double lambda = 0.002;
  const PenaltySpec penalty{lambda, 1.0, {}};
  const LocalMinimum good = local_optimize(data, loss, penalty, Coefficients{0, Eigen::VectorXd::Constant(1, 100.0)}, options);
  const LocalMinimum bad = local_optimize(data, loss, penalty, Coefficients{0, Eigen::VectorXd::Constant(1, 0.5)}, options);
  CHECK(std::abs(good.coef.beta[0] - expected_good_branch(scenario, lambda)) < 3 * good_branch_se(scenario, lambda));
  CHECK(std::abs(bad.coef.beta[0] - expected_bad_branch(scenario, lambda)) < 3 * bad_branch_se(scenario, lambda));
}

TEST_CASE("starting points") {
  const Dataset data = contaminated(60, 5, 2);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  const PenaltySpec penalty{0.1, 0.5, {}};
  SUBCASE("base starts only") {
    const auto starts = generate_starts(data, loss, penalty, 0, 1);
    REQUIRE(starts.size() == 2);
    CHECK(starts[0].coef.beta.isZero(0));
  }
  SUBCASE("deterministic per seed") {
    const auto a = generate_starts(data, loss, penalty, 8, 42);
    const auto b = generate_starts(data, loss, penalty, 8, 42);
    const auto c = generate_starts(data, loss, penalty, 8, 43);
    REQUIRE(a.size() == 10);
    bool differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].coef.beta == b[k].coef.beta);
      CHECK(a[k].coef.intercept == b[k].coef.intercept);
      differs = differs || a[k].coef.beta != c[k].coef.beta;
    }
    CHECK(differs);
  }
  SUBCASE("some subset start lands near least squares on clean data") {
    const auto d = oracle::gaussian(100, 10, 17);
    const Dataset clean{d.x, d.y};
    Eigen::MatrixXd design(100, 11);
    design << Eigen::VectorXd::Ones(100), d.x;
    const Eigen::VectorXd ls = design.colPivHouseholderQr().solve(d.y);
    const auto starts = generate_starts(clean, loss, PenaltySpec{1e-4, 0.5, {}}, 50, 9);
    double closest = 1e300;
    for (const auto& s : starts) closest = std::min(closest, (s.coef.beta - ls.tail(10)).norm());
    CHECK(closest < 1.0);
  }
}

TEST_CASE("convex path matches the lasso oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = oracle::gaussian(50, 10, seed);
    const Dataset data{d.x, d.y};
    PenaltyFamily family;
    family.alpha = 1.0;
    const auto grid = default_lambda_grid(data, square_loss(), family, 10, 1e-2);
    PipelineOptions options;
    options.path.max_minima = 5;
    const MinimaRegistry registry = fit_path(data, square_loss(), family, grid, options, seed);
    for (std::size_t t = 0; t < grid.size(); ++t) {
      REQUIRE(registry.minima[t].size() == 1);
      const Eigen::VectorXd reference = oracle::lasso(d.x, d.y, grid[t]);
      CHECK((registry.minima[t][0].coef.beta - reference).lpNorm<Eigen::Infinity>() < 1e-6);
    }
    // The first grid point is the smallest lambda with an all-zero solution.
    CAPTURE(registry.minima[0][0].coef.beta.transpose());
    CHECK(registry.minima[0][0].coef.beta.isZero(0));
  }
}

TEST_CASE("registry ordering, distinctness and stationarity") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Dataset data = contaminated(50, 8, 40 + seed, 0.3);
    const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
    PenaltyFamily family;
    family.alpha = 0.5;
    const auto grid = default_lambda_grid(data, loss, family, 8, 1e-2);
    PipelineOptions options;
    options.path.max_minima = 10;
    const MinimaRegistry registry = fit_path(data, loss, family, grid, options, seed);
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const auto& minima = registry.minima[t];
      REQUIRE(!minima.empty());
      CHECK(minima.size() <= 10);
      for (std::size_t a = 0; a < minima.size(); ++a) {
        CHECK(within_zero_weight_cap(minima[a], loss));
        if (a > 0) CHECK(minima[a - 1].objective <= minima[a].objective);
        for (std::size_t b = a + 1; b < minima.size(); ++b) {
          CHECK(relative_distance(minima[a].coef, minima[b].coef) > registry.dedup_tol);
        }
      }
      const LocalMinimum again = local_optimize(data, loss, family.at(grid[t]), minima[0].coef);
      CHECK(relative_distance(minima[0].coef, again.coef) < registry.dedup_tol);
    }
  }
}

TEST_CASE("backward sweep keeps registry invariants and never loses the best minimum") {
  const Dataset data = contaminated(50, 8, 91, 0.3);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  PenaltyFamily family;
  family.alpha = 0.5;
  const auto grid = default_lambda_grid(data, loss, family, 8, 1e-2);
  PipelineOptions options;
  options.path.max_minima = 10;
  const MinimaRegistry forward = fit_path(data, loss, family, grid, options, 5);
  options.path.backward_sweep = true;
  const MinimaRegistry both = fit_path(data, loss, family, grid, options, 5);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const auto& minima = both.minima[t];
    REQUIRE(!minima.empty());
    CHECK(minima.size() <= 10);
    CHECK(minima[0].objective <= forward.minima[t][0].objective + 1e-12);
    for (std::size_t a = 0; a < minima.size(); ++a) {
      if (a > 0) CHECK(minima[a - 1].objective <= minima[a].objective);
      for (std::size_t b = a + 1; b < minima.size(); ++b) {
        CHECK(relative_distance(minima[a].coef, minima[b].coef) > both.dedup_tol);
      }
    }
  }
}

TEST_CASE("adjacent grid points keep nearby minima") {
  const Dataset data = contaminated(60, 6, 77, 0.2);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  PenaltyFamily family;
  family.alpha = 0.5;
  const double top = robust_lambda_max(data, loss, family);
  std::vector<double> grid;
  for (int t = 0; t < 15; ++t) grid.push_back(0.3 * top * std::pow(0.96, t));
  PipelineOptions options;
  options.path.max_minima = 5;
  const MinimaRegistry registry = fit_path(data, loss, family, grid, options, 3);
  for (std::size_t t = 0; t + 1 < grid.size(); ++t) {
    for (const auto& m : registry.minima[t]) {
      double nearest = 1e300;
      for (const auto& next : registry.minima[t + 1]) nearest = std::min(nearest, (m.coef.beta - next.coef.beta).norm());
      CHECK(nearest <= 0.5 * m.coef.beta.norm() + 1e-12);
    }
  }
}

TEST_CASE("dedup keeps the lower objective") {
  LocalMinimum a, b, c;
  a.coef = Coefficients{0, Eigen::VectorXd::Constant(2, 1.0)};
  a.objective = 2;
  b.coef = Coefficients{0, Eigen::VectorXd::Constant(2, 1.0 + 1e-7)};
  b.objective = 1;
  c.coef = Coefficients{0, Eigen::VectorXd::Constant(2, 3.0)};
  c.objective = 5;
  const auto kept = dedup_minima({a, b, c}, 10, 1e-4);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].objective == 1);
  CHECK(kept[1].objective == 5);
  CHECK(dedup_minima({a, b, c}, 1, 1e-4).size() == 1);
}

TEST_CASE("adaptive loadings") {
  LocalMinimum pilot;
  pilot.coef.beta = Eigen::VectorXd::Constant(4, 0.7);
  Eigen::VectorXd l = adaptive_loadings(pilot, 1.0);
  CHECK(l.maxCoeff() == doctest::Approx(l.minCoeff()));
  pilot.coef.beta << 0.1, 2.0, 0.0, -0.5;
  l = adaptive_loadings(pilot, 1.0);
  CHECK(l[1] < l[3]);
  CHECK(l[3] < l[0]);
  CHECK(l[0] < l[2]);
  CHECK(l.allFinite());
  pilot.coef.beta.setZero();
  l = adaptive_loadings(pilot, 2.0);
  CHECK(l.maxCoeff() == l.minCoeff());
  CHECK(l[0] == doctest::Approx(1e12));
  CHECK_THROWS_AS(adaptive_loadings(pilot, 0.0), Error);
}

TEST_CASE("high breakdown under gross response outliers") {
  const auto d = oracle::gaussian(100, 10, 31);
  Dataset clean{d.x, d.y};
  Dataset dirty = clean;
  for (int i = 0; i < 39; ++i) dirty.y[i] = 1e6;
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  PenaltyFamily family;
  family.alpha = 0.5;
  PipelineOptions options;
  options.path.max_minima = 5;
  const std::vector<double> grid{0.05};
  const double clean_norm = fit_path(clean, loss, family, grid, options, 1).minima[0][0].coef.beta.norm();
  const double dirty_norm = fit_path(dirty, loss, family, grid, options, 1).minima[0][0].coef.beta.norm();
  CHECK(dirty_norm / clean_norm < 10);
  CHECK(dirty_norm / clean_norm > 0.1);
  Eigen::MatrixXd design(100, 11);
  design << Eigen::VectorXd::Ones(100), d.x;
  const double ls_clean = design.colPivHouseholderQr().solve(clean.y).tail(10).norm();
  const double ls_dirty = design.colPivHouseholderQr().solve(dirty.y).tail(10).norm();
  CHECK(ls_dirty / ls_clean > 100);
}

TEST_CASE("path input validation") {
  const Dataset data = contaminated(30, 3, 1);
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  PenaltyFamily family;
  const auto starts = generate_starts(data, loss, family.at(0.1), 2, 1);
  CHECK_THROWS_AS(compute_path(data, loss, family, {}, starts), Error);
  CHECK_THROWS_AS(compute_path(data, loss, family, {0.1, 0.2}, starts), Error);
  PathOptions zero;
  zero.max_minima = 0;
  CHECK_THROWS_AS(compute_path(data, loss, family, {0.2, 0.1}, starts, zero), Error);
  CHECK_THROWS_AS(local_optimize(data, loss, family.at(0.1), Coefficients{0, Eigen::VectorXd::Zero(2)}), Error);
}

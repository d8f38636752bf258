#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "oracles.hpp"
#include "robcv/cross_validation.hpp"
#include "robcv/error.hpp"
#include "robcv/path_diagnostics.hpp"

using namespace robcv;

namespace {

double textbook_pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

// Convex configuration in which every weight is one.
struct ConvexSetup {
  Dataset data;
  LossSpec loss = LossSpec::m_loss(RhoFunction::square(), 1.0);
  PenaltyFamily family;
  std::vector<double> grid;
  CvOptions options;
};

ConvexSetup convex_setup(std::uint64_t seed) {
  ConvexSetup s;
  const auto d = oracle::gaussian(50, 10, seed);
  s.data = Dataset{d.x, d.y};
  s.family.alpha = 1.0;
  s.grid = default_lambda_grid(s.data, s.loss, s.family, 8, 1e-2);
  s.options.folds = 5;
  s.options.replications = 2;
  s.options.seed = seed;
  s.options.metric = Metric::kRmspe;
  s.options.pipeline.n_subsets = 3;
  s.options.pipeline.path.max_minima = 1;
  s.options.pipeline.path.optimizer.en.tolerance = 1e-13;
  s.options.pipeline.path.optimizer.rel_tolerance = 1e-14;
  return s;
}

}  // namespace

TEST_CASE("fold plans partition the observations") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(2, 300);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = size(rng);
    const int k = std::uniform_int_distribution<int>(2, n)(rng);
    const std::uint64_t seed = rng();
    const FoldPlan plan = make_folds(n, k, seed);
    REQUIRE(plan.assignment.size() == static_cast<std::size_t>(n));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int f : plan.assignment) {
      REQUIRE(f >= 0);
      REQUIRE(f < k);
      ++counts[static_cast<std::size_t>(f)];
    }
    for (int c : counts) {
      CHECK((c == n / k || c == (n + k - 1) / k));
    }
    const FoldPlan again = make_folds(n, k, seed);
    CHECK(plan.assignment == again.assignment);
    const auto test = plan.test_rows(0), train = plan.train_rows(0);
    CHECK(test.size() + train.size() == static_cast<std::size_t>(n));
  }
  const FoldPlan loo = make_folds(10, 10, 3);
  CHECK(std::set<int>(loo.assignment.begin(), loo.assignment.end()).size() == 10);
  const FoldPlan seven = make_folds(100, 7, 3);
  for (int k = 0; k < 7; ++k) {
    const auto size7 = seven.test_rows(k).size();
    CHECK((size7 == 14 || size7 == 15));
  }
  CHECK_THROWS_AS(make_folds(5, 6, 1), Error);
}

TEST_CASE("prediction error metrics") {
  Eigen::VectorXd e(2);
  e << 3, 4;
  CHECK(metric_rmspe(e) == doctest::Approx(std::sqrt(12.5)));
  Eigen::VectorXd f(3);
  f << -3, 1, 2;
  CHECK(metric_mape(f) == 2);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
  CHECK(metric_tau(ones, 3.0) == doctest::Approx(1.0));
  CHECK(metric_tau(Eigen::VectorXd::Zero(4), 3.0) == 0);
  CHECK_THROWS_AS(metric_rmspe(Eigen::VectorXd()), Error);

  std::mt19937_64 rng(4);
  std::cauchy_distribution<double> cauchy;
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd g(31);
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = cauchy(rng);
    CHECK(metric_tau(g, std::numeric_limits<double>::infinity()) == doctest::Approx(metric_rmspe(g)).epsilon(1e-12));
    double prev = 0;
    for (double c : {0.5, 1.0, 2.0, 3.0, 5.0, 50.0}) {
      const double v = metric_tau(g, c);
      CHECK(v >= prev);
      prev = v;
    }
    // Direct formula.
    const double mape = metric_mape(g);
    double acc = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) acc += std::pow(std::min(3.0, std::abs(g[i]) / mape), 2);
    CHECK(metric_tau(g, 3.0) == doctest::Approx(mape * std::sqrt(acc / 31)).epsilon(1e-12));
  }
}

TEST_CASE("weight similarity") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(0, 2);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = unif(rng);
      b[i] = unif(rng);
    }
    CHECK(weight_similarity(a, a) == doctest::Approx(1.0));
    CHECK(weight_similarity(a, 3.5 * a.array() + 2.0) == doctest::Approx(1.0));
    const double s = weight_similarity(a, b);
    CHECK(std::abs(s - textbook_pearson(a, b)) < 1e-12);
    CHECK(s == doctest::Approx(weight_similarity(b, a)).epsilon(1e-15));
    CHECK(std::abs(s) <= 1.0);
    CHECK(weight_similarity(0.1 * a.array() + 7.0, 4.0 * b.array()) == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK_THROWS_AS(weight_similarity(Eigen::VectorXd::Ones(5), Eigen::VectorXd::LinSpaced(5, 0, 1)), Error);
}

TEST_CASE("surrogate matching") {
  Eigen::VectorXd w(6), w2(6), neg(6), noise(6);
  w << 1, 0.8, 0, 1.2, 0.5, 1.5;
  w2 << 1.1, 0.7, 0.1, 1.2, 0.4, 1.5;
  neg = -w;
  noise << 0.3, 1.1, 0.9, 0.2, 1.4, 0.1;
  SUBCASE("identity on identical minima") {
    const auto m = match_surrogates({w, noise}, {w, noise});
    CHECK(m.index == std::vector<int>{0, 1});
    CHECK(m.similarity[0] == doctest::Approx(1.0));
    CHECK(m.similarity[1] == doctest::Approx(1.0));
  }
  SUBCASE("brute force argmax over three candidates") {
    const std::vector<Eigen::VectorXd> fold{noise, neg, w2};
    const auto m = match_surrogates({w}, fold);
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (textbook_pearson(w, fold[static_cast<std::size_t>(k)]) > textbook_pearson(w, fold[static_cast<std::size_t>(best)])) best = k;
    }
    CHECK(m.index[0] == best);
    CHECK(m.index[0] == 2);
  }
  SUBCASE("duplicates are allowed") {
    const auto m = match_surrogates({w, w2}, {w, neg});
    CHECK(m.index == std::vector<int>{0, 0});
  }
  SUBCASE("ties go to the lower objective") {
    const auto m = match_surrogates({w}, {w2, w2});
    CHECK(m.index[0] == 0);
  }
  SUBCASE("constant weights fall back to the best fold minimum") {
    const auto m = match_surrogates({Eigen::VectorXd::Ones(6)}, {w, w2});
    CHECK(m.fallback[0]);
    CHECK(m.index[0] == 0);
  }
}

TEST_CASE("weighted rmspe") {
  Eigen::VectorXd e(4);
  e << 1, -2, 0.5, 3;
  CHECK(weighted_rmspe(Eigen::VectorXd::Ones(4), e) == doctest::Approx(metric_rmspe(e)).epsilon(1e-12));
  CHECK(weighted_rmspe(Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(4)) == 0);
  CHECK(std::isinf(weighted_rmspe(Eigen::VectorXd::Zero(4), e)));
}

TEST_CASE("RIS-CV hand-computed toy instance") {
  // n = 6, K = 2, one full minimum with hand-set weights; every fold has a
  // single minimum, so the surrogate is that minimum.
  Dataset data{Eigen::MatrixXd(6, 1), Eigen::VectorXd(6)};
  data.x << 1, 2, 3, 4, 5, 6;
  data.y << 1.2, 1.9, 3.3, 3.8, 5.4, 5.9;
  MinimaRegistry registry;
  registry.lambdas = {0.5};
  registry.max_minima = 1;
  LocalMinimum m;
  m.coef = Coefficients{0.1, Eigen::VectorXd::Constant(1, 0.9)};
  m.weights.weights.resize(6);
  m.weights.weights << 1.0, 0.5, 1.5, 0.0, 1.0, 2.0;
  m.objective = 1;
  registry.minima = {{m}};
  const LossSpec loss = LossSpec::m_loss(RhoFunction::square(), 1.0);
  PenaltyFamily family;
  family.alpha = 1.0;
  CvOptions options;
  options.folds = 2;
  options.replications = 1;
  options.seed = 9;
  options.parallel = false;
  options.pipeline.path.optimizer.en.tolerance = 1e-13;
  options.pipeline.path.optimizer.rel_tolerance = 1e-15;
  const CvOutcome ris = ris_cv(registry, data, loss, family, options);

  const FoldPlan plan = replication_folds(6, options, 0);
  double num = 0, den = 0;
  for (int k = 0; k < 2; ++k) {
    const auto train = plan.train_rows(k);
    double b0 = 0;
    const Eigen::VectorXd b = oracle::lasso(data.x(train, Eigen::all), data.y(train), 0.5, &b0);
    for (Eigen::Index i : plan.test_rows(k)) {
      const double e = data.y[i] - b0 - data.x(i, 0) * b[0];
      num += m.weights.weights[i] * e * e;
      den += m.weights.weights[i];
    }
  }
  CHECK(ris.cells[0][0].mean == doctest::Approx(std::sqrt(num / den)).epsilon(1e-8));
  CHECK(ris.cells[0][0].sd == 0);
}

TEST_CASE("naive CV reproduces a lasso CV oracle") {
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    ConvexSetup s = convex_setup(seed);
    s.options.replications = 1;
    const MinimaRegistry registry = fit_path(s.data, s.loss, s.family, s.grid, s.options.pipeline, seed);
    const CvOutcome naive = naive_cv(registry, s.data, s.loss, s.family, s.options);
    const FoldPlan plan = replication_folds(s.data.n(), s.options, 0);
    const auto reference = oracle::lasso_cv_rmspe(s.data.x, s.data.y, s.grid, plan.assignment, s.options.folds);
    for (std::size_t t = 0; t < s.grid.size(); ++t) {
      CHECK(std::abs(naive.cells[t][0].mean - reference[t]) < 1e-6);
    }
  }
}

TEST_CASE("RIS-CV and naive CV coincide in the degenerate configuration") {
  ConvexSetup s = convex_setup(3);
  const MinimaRegistry registry = fit_path(s.data, s.loss, s.family, s.grid, s.options.pipeline, 3);
  const CvOutcome naive = naive_cv(registry, s.data, s.loss, s.family, s.options);
  const CvOutcome ris = ris_cv(registry, s.data, s.loss, s.family, s.options);
  for (std::size_t t = 0; t < s.grid.size(); ++t) {
    for (int r = 0; r < s.options.replications; ++r) {
      CHECK(std::abs(ris.values[t][0][static_cast<std::size_t>(r)] - naive.values[t][0][static_cast<std::size_t>(r)]) < 1e-8);
    }
  }
}

TEST_CASE("replication summaries") {
  ConvexSetup s = convex_setup(4);
  s.options.replications = 3;
  const MinimaRegistry registry = fit_path(s.data, s.loss, s.family, s.grid, s.options.pipeline, 4);
  const CvOutcome naive = naive_cv(registry, s.data, s.loss, s.family, s.options);
  const CvOutcome ris = ris_cv(registry, s.data, s.loss, s.family, s.options);
  for (std::size_t t = 0; t < s.grid.size(); ++t) {
    const auto summary = [&](const std::vector<double>& v, double denom_offset) {
      const double mean = (v[0] + v[1] + v[2]) / 3;
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      return std::pair{mean, std::sqrt(ss / (3 - denom_offset))};
    };
    const auto [nm, nsd] = summary(naive.values[t][0], 0);
    CHECK(naive.cells[t][0].mean == doctest::Approx(nm).epsilon(1e-12));
    CHECK(naive.cells[t][0].sd == doctest::Approx(nsd).epsilon(1e-10));
    const auto [rm, rsd] = summary(ris.values[t][0], 1);
    CHECK(ris.cells[t][0].mean == doctest::Approx(rm).epsilon(1e-12));
    CHECK(ris.cells[t][0].sd == doctest::Approx(rsd).epsilon(1e-10));
  }
  CHECK(ris.metric == Metric::kWeightedRmspe);
  CHECK(naive.metric == Metric::kRmspe);
}

TEST_CASE("selection rules") {
  const auto outcome_of = [](std::vector<double> means, std::vector<double> sds) {
    CvOutcome o;
    for (std::size_t t = 0; t < means.size(); ++t) {
      o.lambdas.push_back(static_cast<double>(means.size() - t));
      o.cells.push_back({CvCell{means[t], sds[t], 1}});
      o.selected_q.push_back(0);
    }
    return o;
  };
  SUBCASE("one-se picks the sparsest lambda within one standard error") {
    const CvOutcome o = outcome_of({1.2, 1.05, 1.0}, {0.1, 0.1, 0.1});
    const Selection min = select_lambda(o, SelectionRule::kMin);
    const Selection one = select_lambda(o, SelectionRule::kOneSe);
    CHECK(min.lambda == 1);
    CHECK(one.lambda == 2);
  }
  SUBCASE("single finite entry") {
    const double inf = std::numeric_limits<double>::infinity();
    const CvOutcome o = outcome_of({inf, 3.0, inf}, {inf, 0.5, inf});
    CHECK(select_lambda(o, SelectionRule::kMin).lambda_index == 1);
    CHECK(select_lambda(o, SelectionRule::kOneSe).lambda_index == 1);
  }
  SUBCASE("ties go to the larger lambda") {
    const CvOutcome o = outcome_of({2.0, 1.0, 1.0}, {0, 0, 0});
    CHECK(select_lambda(o, SelectionRule::kMin).lambda_index == 1);
  }
  SUBCASE("one-se never picks a smaller lambda than min") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unif(0, 1);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> m, sd;
      for (int t = 0; t < 12; ++t) {
        m.push_back(unif(rng));
        sd.push_back(0.1 * unif(rng));
      }
      const CvOutcome o = outcome_of(m, sd);
      CHECK(select_lambda(o, SelectionRule::kOneSe).lambda >= select_lambda(o, SelectionRule::kMin).lambda);
    }
  }
  SUBCASE("nothing finite") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(select_lambda(outcome_of({inf, inf}, {inf, inf}), SelectionRule::kMin), Error);
  }
  CHECK(parse_selection_rule("1se") == SelectionRule::kOneSe);
  CHECK_THROWS_AS(parse_selection_rule("best"), Error);
}

TEST_CASE("naive CV of the univariate example is rough") {
  const UnivariateScenario scenario = UnivariateScenario::with_rho(RhoKind::kBisquare);
  const Dataset data = generate_univariate(scenario);
  const LossSpec loss = LossSpec::m_loss(scenario.rho, 1.0);
  PenaltyFamily family;
  family.alpha = 1.0;
  CvOptions options;
  options.folds = 5;
  options.replications = 1;
  options.metric = Metric::kTau;
  options.pipeline.path.optimizer.intercept = false;
  options.pipeline.starts.intercept = false;
  options.pipeline.path.max_minima = 1;
  const MinimaRegistry registry = fit_path(data, loss, family, scenario.lambdas, options.pipeline, 1);
  const CvOutcome naive = naive_cv(registry, data, loss, family, options);
  CHECK(!detect_discontinuities(scenario.lambdas, naive.curve(), 10.0).empty());
}

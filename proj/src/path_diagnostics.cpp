#include "robcv/path_diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "robcv/error.hpp"

namespace robcv {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// d/dbeta of the smooth part: -(1/n) sum psi(y_i - beta x_i) x_i.
double loss_slope(const Dataset& data, const RhoFunction& rho, double beta) {
  double acc = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double x = data.x(i, 0);
    acc += rho.psi(data.y[i] - beta * x) * x;
  }
  return -acc / static_cast<double>(data.n());
}

double derivative(const Dataset& data, const RhoFunction& rho, double lambda, double beta) {
  return loss_slope(data, rho, beta) + lambda * (beta > 0 ? 1.0 : -1.0);
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

double branch_se(double sigma, double m, double lambda, int n) {
  if (m <= 4) return kNaN;
  const double ln = lambda * n;
  return std::sqrt((sigma * sigma + 2 * ln * ln / ((m - 4) * (m - 2))) / (m - 2));
}

}  // namespace

std::vector<double> UnivariateScenario::linear_grid(double from, double to, int count) {
  require(count >= 2 && from > to && to >= 0, "linear grid needs from > to >= 0 and two points");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    grid[static_cast<std::size_t>(t)] = from + (to - from) * t / (count - 1);
  }
  return grid;
}

UnivariateScenario UnivariateScenario::with_rho(RhoKind kind) {
  UnivariateScenario s;
  s.rho = calibrate_cutoff(kind, 0.5);
  return s;
}

int UnivariateScenario::contaminated_count() const {
  return static_cast<int>(std::floor(b * n + 1e-9));
}

void UnivariateScenario::validate() const {
  require(n >= 4, "the scenario needs at least four observations");
  require(b >= 0 && b < 0.5, "b must lie in [0, 0.5)");
  require(sigma_c >= 0 && sigma_star >= 0, "noise levels must be non-negative");
  require(!lambdas.empty(), "the scenario needs a lambda grid");
  for (std::size_t t = 1; t < lambdas.size(); ++t) {
    require(lambdas[t] < lambdas[t - 1], "the lambda grid must be strictly descending");
  }
}

Dataset generate_univariate(const UnivariateScenario& scenario) {
  scenario.validate();
  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> normal;
  const int bad = scenario.contaminated_count();
  Dataset data;
  data.x.resize(scenario.n, 1);
  data.y.resize(scenario.n);
  for (int i = 0; i < scenario.n; ++i) {
    const double x = normal(rng);
    const double noise = normal(rng);
    data.x(i, 0) = x;
    data.y[i] = i < bad ? x * scenario.beta_c + scenario.sigma_c * noise
                        : x * scenario.beta_star + scenario.sigma_star * noise;
  }
  return data;
}

double univariate_objective(const Dataset& data, const RhoFunction& rho, double lambda, double beta) {
  double acc = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) acc += rho.rho(data.y[i] - beta * data.x(i, 0));
  return acc / static_cast<double>(data.n()) + lambda * std::abs(beta);
}

std::vector<UnivariateMinimum> enumerate_univariate_minima(const UnivariateScenario& scenario,
                                                           const Dataset& data, double lambda,
                                                           const EnumerationOptions& options) {
  require(options.grid_points >= 10000, "enumeration needs at least 10^4 grid points");
  const double lo_anchor = std::min(scenario.beta_c, scenario.beta_star);
  const double hi_anchor = std::max(scenario.beta_c, scenario.beta_star);
  const double margin = 0.1 * (hi_anchor - lo_anchor) + 1.0;
  const double lo = lo_anchor - margin, hi = hi_anchor + margin;
  const int points = options.grid_points;
  const double step = (hi - lo) / (points - 1);

  std::vector<UnivariateMinimum> found;
  const auto refine = [&](double a, double b) {
    // Derivative is negative at a and positive at b.
    while (b - a > options.tolerance) {
      const double mid = 0.5 * (a + b);
      (derivative(data, scenario.rho, lambda, mid) < 0 ? a : b) = mid;
    }
    const double loc = 0.5 * (a + b);
    found.push_back({loc, univariate_objective(data, scenario.rho, lambda, loc)});
  };

  double prev_beta = lo;
  double prev_d = derivative(data, scenario.rho, lambda, prev_beta);
  for (int k = 1; k < points; ++k) {
    const double beta = lo + step * k;
    // The kink at zero is handled separately; split the interval there.
    if (prev_beta < 0 && beta > 0) {
      const double left = derivative(data, scenario.rho, lambda, -1e-300);
      if (prev_d < 0 && left > 0) refine(prev_beta, 0);
      prev_beta = 0;
      prev_d = derivative(data, scenario.rho, lambda, 1e-300);
    }
    const double d = derivative(data, scenario.rho, lambda, beta);
    if (prev_d < 0 && d > 0) refine(prev_beta, beta);
    prev_beta = beta;
    prev_d = d;
  }
  if (lo < 0 && hi > 0 && std::abs(loss_slope(data, scenario.rho, 0.0)) <= lambda) {
    found.push_back({0.0, univariate_objective(data, scenario.rho, lambda, 0.0)});
  }
  std::sort(found.begin(), found.end(),
            [](const UnivariateMinimum& a, const UnivariateMinimum& b) { return a.location < b.location; });
  return found;
}

std::vector<Discontinuity> detect_discontinuities(const std::vector<double>& lambdas,
                                                  const std::vector<double>& trace,
                                                  double rel_threshold) {
  require(lambdas.size() == trace.size(), "trace and grid differ in length");
  require(rel_threshold > 0, "the detection threshold must be positive");
  std::vector<double> changes;
  std::vector<std::size_t> where;
  for (std::size_t t = 0; t + 1 < trace.size(); ++t) {
    if (!std::isfinite(trace[t]) || !std::isfinite(trace[t + 1])) continue;
    changes.push_back(std::abs(trace[t + 1] - trace[t]));
    where.push_back(t);
  }
  std::vector<Discontinuity> out;
  if (changes.empty()) return out;
  const double threshold = rel_threshold * median(changes);
  for (std::size_t k = 0; k < changes.size(); ++k) {
    if (changes[k] > threshold) {
      const std::size_t t = where[k];
      out.push_back({t, lambdas[t], lambdas[t + 1], trace[t + 1] - trace[t]});
    }
  }
  return out;
}

double total_variation(const std::vector<double>& trace) {
  double acc = 0;
  std::optional<double> prev;
  for (double v : trace) {
    if (!std::isfinite(v)) continue;
    if (prev) acc += std::abs(v - *prev);
    prev = v;
  }
  return acc;
}

double expected_bad_branch(const UnivariateScenario& s, double lambda) {
  const double m = s.contaminated_count();
  return m > 2 ? s.beta_c - lambda * s.n / (m - 2) : kNaN;
}

double expected_good_branch(const UnivariateScenario& s, double lambda) {
  const double m = s.n - s.contaminated_count();
  return s.beta_star - lambda * s.n / (m - 2);
}

double bad_branch_se(const UnivariateScenario& s, double lambda) {
  return branch_se(s.sigma_c, s.contaminated_count(), lambda, s.n);
}

double good_branch_se(const UnivariateScenario& s, double lambda) {
  return branch_se(s.sigma_star, s.n - s.contaminated_count(), lambda, s.n);
}

std::vector<std::vector<double>> track_branches(const MinimaRegistry& registry, int count) {
  require(count >= 1, "at least one branch is needed");
  const std::size_t q = registry.size();
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(count),
                                          std::vector<double>(q, kNaN));
  const auto slope = [](const LocalMinimum& m) { return m.coef.beta.size() > 0 ? m.coef.beta[0] : 0.0; };
  for (std::size_t t = 0; t < q; ++t) {
    const auto& minima = registry.minima[t];
    if (minima.empty()) continue;
    std::vector<double> values;
    for (const auto& m : minima) values.push_back(slope(m));
    std::vector<bool> used(values.size(), false);
    for (int b = 0; b < count; ++b) {
      auto& trace = traces[static_cast<std::size_t>(b)];
      const double prev = t > 0 ? trace[t - 1] : kNaN;
      std::size_t pick = values.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (used[k] && values.size() >= static_cast<std::size_t>(count)) continue;
        // Without history, branches take the minima in objective order.
        const double dist = std::isfinite(prev) ? std::abs(values[k] - prev) : static_cast<double>(k);
        if (dist < best) {
          best = dist;
          pick = k;
        }
      }
      if (pick == values.size()) continue;
      used[pick] = true;
      trace[t] = values[pick];
    }
  }
  return traces;
}

PathReport run_path_demo(const UnivariateScenario& scenario, const PathDemoOptions& options) {
  scenario.validate();
  const Dataset data = generate_univariate(scenario);
  PathReport report;
  report.lambdas = scenario.lambdas;
  report.contaminated = scenario.contaminated_count();

  if (options.enumerate) {
    for (double lambda : scenario.lambdas) {
      auto minima = enumerate_univariate_minima(scenario, data, lambda, options.enumeration);
      double global = kNaN, best = std::numeric_limits<double>::infinity();
      for (const auto& m : minima) {
        if (m.objective < best) {
          best = m.objective;
          global = m.location;
        }
      }
      report.enumerated.push_back(std::move(minima));
      report.enumerated_global.push_back(global);
    }
  }

  const LossSpec loss = LossSpec::m_loss(scenario.rho, 1.0);
  PenaltyFamily family;
  family.alpha = 1.0;
  PipelineOptions pipeline;
  pipeline.n_subsets = options.n_subsets;
  pipeline.path.optimizer.intercept = false;
  pipeline.path.parallel = false;
  pipeline.path.max_minima = 1;
  const MinimaRegistry single = fit_path(data, loss, family, scenario.lambdas, pipeline, scenario.seed);
  report.global_trace = track_branches(single, 1).front();
  pipeline.path.max_minima = 2;
  const MinimaRegistry pair = fit_path(data, loss, family, scenario.lambdas, pipeline, scenario.seed);
  report.branches = track_branches(pair, 2);

  // Order branches so that [0] is the one nearer beta_c.
  const auto mean_of = [](const std::vector<double>& v) {
    double acc = 0;
    int k = 0;
    for (double x : v) {
      if (std::isfinite(x)) {
        acc += x;
        ++k;
      }
    }
    return k > 0 ? acc / k : kNaN;
  };
  if (report.branches.size() == 2 &&
      std::abs(mean_of(report.branches[0]) - scenario.beta_c) >
          std::abs(mean_of(report.branches[1]) - scenario.beta_c)) {
    std::swap(report.branches[0], report.branches[1]);
  }

  report.global_jumps = detect_discontinuities(scenario.lambdas, report.global_trace, options.rel_threshold);
  for (const auto& branch : report.branches) {
    report.branch_jumps.push_back(detect_discontinuities(scenario.lambdas, branch, options.rel_threshold));
  }
  for (std::size_t b = 0; b < report.branches.size(); ++b) {
    double worst = kNaN;
    for (std::size_t t = 0; t < scenario.lambdas.size(); ++t) {
      const double lambda = scenario.lambdas[t];
      const double expected = b == 0 ? expected_bad_branch(scenario, lambda) : expected_good_branch(scenario, lambda);
      const double se = b == 0 ? bad_branch_se(scenario, lambda) : good_branch_se(scenario, lambda);
      const double v = report.branches[b][t];
      if (!std::isfinite(expected) || !std::isfinite(se) || !std::isfinite(v)) continue;
      const double dev = std::abs(v - expected) / se;
      worst = std::isfinite(worst) ? std::max(worst, dev) : dev;
    }
    report.branch_deviation_se.push_back(worst);
  }
  return report;
}

}  // namespace robcv

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "robcv/pense.hpp"
#include "robcv/robust_loss.hpp"

namespace robcv {

/// Univariate two-population regression without intercept:
///   y_i = x_i beta_c + N(0, sigma_c^2)        for the first b n rows,
///   y_i = x_i beta_star + N(0, sigma_star^2)  otherwise,
/// with x_i ~ N(0, 1), fitted by the lasso-penalized M-loss with unit scale.
struct UnivariateScenario {
  double sigma_c = 0.01;
  double sigma_star = 0.1;
  double beta_c = 0.5;
  double beta_star = 100;
  double b = 0.3;
  int n = 100;
  RhoFunction rho = RhoFunction(RhoKind::kBisquare, 1.5476);
  /// Descending grid; linear spacing keeps adjacent changes comparable.
  std::vector<double> lambdas = linear_grid(0.006, 0.0001, 60);
  std::uint64_t seed = 1;

  static std::vector<double> linear_grid(double from, double to, int count);
  /// Scenario defaults with the cutoff of `kind` calibrated to delta = 0.5.
  static UnivariateScenario with_rho(RhoKind kind);

  int contaminated_count() const;
  void validate() const;
};

Dataset generate_univariate(const UnivariateScenario& scenario);

struct UnivariateMinimum {
  double location = 0;
  double objective = 0;
};

/// (1/n) sum rho(y_i - beta x_i) + lambda |beta|.
double univariate_objective(const Dataset& data, const RhoFunction& rho, double lambda, double beta);

struct EnumerationOptions {
  int grid_points = 20000;
  double tolerance = 1e-8;
};

/// Every local minimum in a window around beta_c and beta_star, located by
/// sign changes of the derivative on a dense grid refined by bisection, plus
/// the kink at zero when the subgradient condition holds there.
std::vector<UnivariateMinimum> enumerate_univariate_minima(const UnivariateScenario& scenario,
                                                           const Dataset& data, double lambda,
                                                           const EnumerationOptions& options = {});

struct Discontinuity {
  /// Jump between grid points index and index + 1.
  std::size_t index = 0;
  double lambda_before = 0;
  double lambda_after = 0;
  double jump = 0;
};

/// Adjacent changes exceeding rel_threshold times the median adjacent change.
/// Pairs involving non-finite values are skipped.
std::vector<Discontinuity> detect_discontinuities(const std::vector<double>& lambdas,
                                                  const std::vector<double>& trace,
                                                  double rel_threshold = 10.0);

/// Sum of absolute adjacent differences after dropping non-finite entries.
double total_variation(const std::vector<double>& trace);

/// Expected minimum locations beta_c - lambda n / (b n - 2) and
/// beta_star - lambda n / ((1 - b) n - 2).
double expected_bad_branch(const UnivariateScenario& scenario, double lambda);
double expected_good_branch(const UnivariateScenario& scenario, double lambda);
/// Standard deviation bounds of the realized branch locations around those values.
double bad_branch_se(const UnivariateScenario& scenario, double lambda);
double good_branch_se(const UnivariateScenario& scenario, double lambda);

/// Follows `count` paths through a registry by nearest-neighbour continuation
/// of the slope of the first coefficient. Returns traces[branch][t].
std::vector<std::vector<double>> track_branches(const MinimaRegistry& registry, int count);

struct PathReport {
  std::vector<double> lambdas;
  /// Enumerated minima per lambda, sorted by location.
  std::vector<std::vector<UnivariateMinimum>> enumerated;
  std::vector<double> enumerated_global;
  /// Best minimum of the path with a single retained minimum.
  std::vector<double> global_trace;
  /// Paths tracked with two retained minima: [0] nearer beta_c, [1] nearer beta_star.
  std::vector<std::vector<double>> branches;
  std::vector<Discontinuity> global_jumps;
  std::vector<std::vector<Discontinuity>> branch_jumps;
  /// max_t |branch - expected| / se for each branch (NaN when undefined).
  std::vector<double> branch_deviation_se;
  int contaminated = 0;
};

struct PathDemoOptions {
  double rel_threshold = 10.0;
  int n_subsets = 10;
  bool enumerate = true;
  EnumerationOptions enumeration;
};

PathReport run_path_demo(const UnivariateScenario& scenario, const PathDemoOptions& options = {});

}  // namespace robcv

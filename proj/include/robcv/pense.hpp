#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "robcv/en_solver.hpp"
#include "robcv/robust_loss.hpp"

namespace robcv {

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
  Dataset rows(const std::vector<Eigen::Index>& index) const;
};

enum class LossKind { kS, kM };

/// S-loss: sigma_M(r)^2 / 2, with sigma_M the M-scale at breakdown point
/// `mscale.delta`. M-loss: (s^2 / n) sum rho(r_i / s) for the fixed scale s,
/// which behaves like (1 / 2n) sum r_i^2 near zero.
struct LossSpec {
  LossKind kind = LossKind::kS;
  RhoFunction rho = RhoFunction(RhoKind::kBisquare, 1.5476);
  MScaleSpec mscale;
  double fixed_scale = 1;

  static LossSpec s_loss(const RhoFunction& rho, double delta);
  static LossSpec m_loss(const RhoFunction& rho, double scale);
  /// S-loss with a cutoff calibrated to `delta` at the normal model.
  static LossSpec calibrated_s_loss(RhoKind kind, double delta);
};

/// Elastic-net penalty with everything fixed except lambda.
struct PenaltyFamily {
  double alpha = 0.5;
  Eigen::VectorXd loadings;

  PenaltySpec at(double lambda) const { return PenaltySpec{lambda, alpha, loadings}; }
};

enum class MinimumOrigin { kCold, kSubsetStart, kWarmFromLambda, kWarmFromFullFit };

const char* to_string(MinimumOrigin origin);

struct LocalMinimum {
  Coefficients coef;
  double objective = 0;
  /// M-scale of the residuals (S-loss) or the fixed scale (M-loss).
  double scale = 0;
  WeightVector weights;
  double lambda = 0;
  MinimumOrigin origin = MinimumOrigin::kCold;
  int iterations = 0;
  bool converged = true;
};

struct StartPoint {
  Coefficients coef;
  MinimumOrigin origin = MinimumOrigin::kCold;
};

struct OptimizerOptions {
  bool intercept = true;
  int max_iterations = 500;
  /// Stop once the objective decreases by less than this times (1 + |objective|)
  /// and the step is below coef_tolerance.
  double rel_tolerance = 1e-9;
  /// Relative coefficient step ||b_new - b|| / (1 + ||b||); kept well below the dedup tolerance.
  double coef_tolerance = 1e-6;
  EnOptions en;
};

struct ObjectiveValue {
  double objective = 0;
  double scale = 0;
  Eigen::VectorXd residuals;
};

/// Loss plus penalty at the given coefficients.
ObjectiveValue evaluate_objective(const Dataset& data, const LossSpec& loss,
                                  const PenaltySpec& penalty, const Coefficients& coef,
                                  double scale_hint = 0);

/// IRWLS from `start` to a local minimum of the penalized robust objective.
LocalMinimum local_optimize(const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
                            const Coefficients& start, const OptimizerOptions& options = {},
                            MinimumOrigin origin = MinimumOrigin::kCold);

struct StartOptions {
  /// Concentration steps applied to every random subset fit.
  int concentration_steps = 3;
  bool intercept = true;
  EnOptions en;
};

/// The zero vector, the unit-weight EN fit, and `n_subsets` fits to random
/// subsets refined by concentration steps.
std::vector<StartPoint> generate_starts(const Dataset& data, const LossSpec& loss,
                                        const PenaltySpec& penalty, int n_subsets,
                                        std::uint64_t seed, const StartOptions& options = {});

/// For every lambda of a descending grid, up to `max_minima` distinct local
/// minima sorted by objective.
struct MinimaRegistry {
  std::vector<double> lambdas;
  std::vector<std::vector<LocalMinimum>> minima;
  int max_minima = 40;
  double dedup_tol = 1e-4;
  int dropped_starts = 0;

  std::size_t size() const { return lambdas.size(); }
};

struct PathOptions {
  int max_minima = 40;
  double dedup_tol = 1e-4;
  /// User starts are injected at grid indices divisible by this stride
  /// (always at the first lambda); 0 injects only at the first lambda.
  int restart_stride = 1;
  /// After the descending sweep, sweep back up the grid warm-starting every
  /// lambda from the minima of the next smaller one.
  bool backward_sweep = false;
  OptimizerOptions optimizer;
  /// Evaluate the starts at one lambda concurrently.
  bool parallel = true;
};

/// ||b_a - b_b|| / (1 + ||b_a||) on the slope coefficients.
double relative_distance(const Coefficients& a, const Coefficients& b);

/// Sorts by objective and keeps the first `max_minima` pairwise distinct entries.
std::vector<LocalMinimum> dedup_minima(std::vector<LocalMinimum> candidates, int max_minima,
                                       double dedup_tol);

/// Runs local_optimize from every start. The serial and OpenMP variants
/// return identical results in start order; failed starts are empty.
std::vector<std::optional<LocalMinimum>> optimize_starts_serial(
    const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
    const std::vector<StartPoint>& starts, const OptimizerOptions& options);
std::vector<std::optional<LocalMinimum>> optimize_starts_parallel(
    const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
    const std::vector<StartPoint>& starts, const OptimizerOptions& options);

MinimaRegistry compute_path(const Dataset& data, const LossSpec& loss,
                            const PenaltyFamily& family, const std::vector<double>& grid,
                            const std::vector<StartPoint>& starts, const PathOptions& options = {});

/// Intercept-only minimizer of the robust loss.
LocalMinimum intercept_only_fit(const Dataset& data, const LossSpec& loss,
                                const OptimizerOptions& options = {});

/// Smallest lambda at which beta = 0 is stationary for the robust objective.
double robust_lambda_max(const Dataset& data, const LossSpec& loss, const PenaltyFamily& family,
                         const OptimizerOptions& options = {});

/// `q` log-spaced values from robust_lambda_max down to min_ratio times it.
std::vector<double> default_lambda_grid(const Dataset& data, const LossSpec& loss,
                                        const PenaltyFamily& family, int q = 50,
                                        double min_ratio = 1e-3,
                                        const OptimizerOptions& options = {});

/// Start generation plus path computation, the from-scratch pipeline used on
/// the full data and inside every naive CV fold.
struct PipelineOptions {
  int n_subsets = 10;
  StartOptions starts;
  PathOptions path;
};

/// Lambda at which the start subsets are fitted: the geometric middle of the grid.
double start_lambda(const std::vector<double>& grid);

MinimaRegistry fit_path(const Dataset& data, const LossSpec& loss, const PenaltyFamily& family,
                        const std::vector<double>& grid, const PipelineOptions& options,
                        std::uint64_t seed);

/// Number of observations with robustness weight exactly zero.
Eigen::Index zero_weight_count(const LocalMinimum& minimum);

/// For an S-loss minimum, at most floor(delta n) observations may carry zero
/// weight; always true for the M-loss.
bool within_zero_weight_cap(const LocalMinimum& minimum, const LossSpec& loss);

/// Adaptive EN loadings (|beta_j| + eps)^(-exponent) from a pilot fit.
Eigen::VectorXd adaptive_loadings(const LocalMinimum& pilot, double exponent);

/// Fitted values b0 + X beta.
Eigen::VectorXd predict(const Eigen::MatrixXd& x, const Coefficients& coef);

}  // namespace robcv

#pragma once

#include <optional>

#include <Eigen/Dense>

namespace robcv {

/// lambda * sum_j loading_j * ((1 - alpha) / 2 * beta_j^2 + alpha * |beta_j|)
struct PenaltySpec {
  double lambda = 0;
  double alpha = 1;
  /// Per-coefficient multipliers of lambda (adaptive EN); empty means all ones.
  Eigen::VectorXd loadings;

  void validate(Eigen::Index p) const;
  double loading(Eigen::Index j) const { return loadings.size() == 0 ? 1.0 : loadings[j]; }
  double evaluate(const Eigen::VectorXd& beta) const;
};

/// Weighted least-squares data for one inner solve. The intercept, when
/// present, is never penalized.
struct WlsProblem {
  const Eigen::MatrixXd& design;
  const Eigen::VectorXd& response;
  const Eigen::VectorXd& obs_weights;
  bool intercept = true;
};

struct Coefficients {
  double intercept = 0;
  Eigen::VectorXd beta;
};

struct EnSolution {
  Coefficients coef;
  int passes = 0;
  bool converged = true;
};

struct EnOptions {
  double tolerance = 1e-8;
  int max_passes = 100000;
  /// After each full sweep, solve the problem restricted to the nonzero
  /// coordinates exactly instead of cycling over them.
  bool active_set_solve = true;
};

/// Coordinate descent for
///   (1 / (2 sum w)) sum_i w_i (y_i - b0 - x_i' beta)^2 + penalty(beta).
/// Non-convergence is reported through `EnSolution::converged`.
EnSolution weighted_en_solve(const WlsProblem& problem, const PenaltySpec& penalty,
                             const std::optional<Coefficients>& warm_start = std::nullopt,
                             const EnOptions& options = {});

/// Smallest lambda at which beta = 0 is stationary for the given weights.
double lambda_max(const WlsProblem& problem, double alpha,
                  const Eigen::VectorXd& loadings = Eigen::VectorXd());

/// Value of the convex objective minimized by weighted_en_solve.
double weighted_en_objective(const WlsProblem& problem, const PenaltySpec& penalty,
                             const Coefficients& coef);

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0;
}

}  // namespace robcv

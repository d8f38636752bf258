#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robcv/pense.hpp"

namespace robcv {

enum class ErrorFamily { kGaussian, kLaplace, kStable15 };

std::string to_string(ErrorFamily family);
ErrorFamily parse_error_family(const std::string& name);

struct SimulationConfig {
  Eigen::Index n = 100;
  Eigen::Index p = 50;
  ErrorFamily error_family = ErrorFamily::kGaussian;
  double snr = 1.0;
  double leverage_fraction = 0.2;
  double leverage_multiplier = 8.0;
  double contamination_fraction = 0.3;
  std::array<double, 3> signal_values{-1.5, -1.0, -0.5};
  double contamination_snr = 10.0;
  double correlation = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulatedDataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd beta_true;
  Eigen::Index sparsity = 0;
  /// Row blocks C_1, C_2, C_3.
  std::array<std::vector<Eigen::Index>, 3> contaminated_rows;
  /// Columns J* and leverage multiplier k_l of each contamination signal.
  std::array<std::vector<Eigen::Index>, 3> contamination_columns;
  std::array<double, 3> contamination_leverage{1, 1, 1};
  std::vector<Eigen::Index> leverage_rows;
  /// Spread of the clean errors: the sd for Gaussian errors, the tau-size otherwise.
  double true_error_scale = 0;
  /// Factor applied to unit-spread draws of the error family.
  double error_multiplier = 0;

  Dataset dataset() const { return Dataset{x, y}; }
};

/// Number of rows in each contamination block.
Eigen::Index contamination_block_size(const SimulationConfig& config);

/// Rows of multivariate t(4) covariates with AR(1) correlation.
Eigen::MatrixXd draw_t4_design(Eigen::Index n, Eigen::Index p, double correlation,
                               std::uint64_t seed);

/// Raw draws of the error family (before SNR calibration).
Eigen::VectorXd draw_errors(ErrorFamily family, Eigen::Index n, std::uint64_t seed);

/// Symmetric alpha-stable draws by the Chambers-Mallows-Stuck transform.
Eigen::VectorXd draw_symmetric_stable(double alpha, Eigen::Index n, std::uint64_t seed);

/// Clean model y = X beta0 + eps with the SNR calibrated on the sample.
SimulatedDataset gen_clean(const SimulationConfig& config);

/// Good leverage points: rows drawn from the non-contaminated ones, with the
/// (p - s) / 2 largest absolute entries among the zero-coefficient columns scaled.
SimulatedDataset apply_leverage(SimulatedDataset ds, const SimulationConfig& config);

/// Replaces the three row blocks by the contamination models.
SimulatedDataset apply_contamination(SimulatedDataset ds, const SimulationConfig& config);

/// gen_clean, then leverage points, then contamination.
SimulatedDataset simulate(const SimulationConfig& config);

/// Inverse of the AR(1) correlation matrix (tridiagonal).
Eigen::MatrixXd ar1_precision(Eigen::Index p, double correlation);

/// Squared Mahalanobis distance of every row under the given precision matrix.
Eigen::VectorXd mahalanobis_sq(const Eigen::MatrixXd& x, const Eigen::MatrixXd& precision);

/// Independent clean draw from the same model, errors scaled like `ds`.
Dataset clean_test_draw(const SimulationConfig& config, const SimulatedDataset& ds,
                        Eigen::Index n_test, std::uint64_t seed);

}  // namespace robcv

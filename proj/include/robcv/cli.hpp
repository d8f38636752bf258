#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robcv/cross_validation.hpp"
#include "robcv/pense.hpp"

namespace robcv::cli {

/// Malformed input files or flags; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// csv

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Numeric CSV with a header row. Errors name the offending line.
Table read_csv(const std::filesystem::path& path);

/// Expects the first column to be the response `y`.
Dataset read_dataset(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// Shortest text that reads back to the same double.
std::string format_number(double value);

// config

struct RunConfig {
  std::string loss = "s";
  std::string rho = "bisquare";
  double delta = 0.4;
  /// Fixed residual scale of the M-loss.
  double scale = 1.0;
  double alpha = 0.5;
  int grid_size = 30;
  double lambda_min_ratio = 1e-3;
  std::vector<double> lambdas;
  int max_minima = 40;
  int folds = 7;
  int replications = 5;
  double c_tau = 3.0;
  std::string metric = "tau";
  std::string rule = "one-se";
  std::string engine = "ris";
  int n_subsets = 10;
  std::uint64_t seed = 1;
  bool adaptive = false;
  double adaptive_exponent = 1.0;
  bool standardize = true;
  bool intercept = true;
  int threads = 1;

  /// Throws InputError with a message naming the offending option.
  void validate() const;
  LossSpec loss_spec() const;
  CvOptions cv_options() const;
  PipelineOptions pipeline_options() const;
};

/// Robust location/scale standardization of the predictors and median
/// centering of the response, with the map back to original units.
struct Standardization {
  Eigen::VectorXd x_center, x_scale;
  double y_center = 0;
  /// Original column index of every kept column.
  std::vector<Eigen::Index> kept;
  std::vector<Eigen::Index> dropped;
  Eigen::Index original_p = 0;
  bool enabled = true;

  /// Without `center` (no intercept) the data are only rescaled.
  static Standardization fit(const Dataset& data, bool enabled, bool center = true);
  Dataset apply(const Dataset& data) const;
  /// Coefficients on the standardized scale to original units, with zeros for
  /// dropped columns.
  Coefficients to_original(const Coefficients& coef) const;
};

/// Entry point of the `robcv` executable.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace robcv::cli

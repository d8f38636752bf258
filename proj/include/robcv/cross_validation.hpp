#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robcv/pense.hpp"

namespace robcv {

/// Random partition of {0..n-1} into K folds whose sizes differ by at most one.
struct FoldPlan {
  Eigen::Index n = 0;
  int folds = 0;
  std::vector<int> assignment;  // fold index in [0, folds) per observation
  std::uint64_t seed = 0;

  std::vector<Eigen::Index> test_rows(int k) const;
  std::vector<Eigen::Index> train_rows(int k) const;
};

FoldPlan make_folds(Eigen::Index n, int folds, std::uint64_t seed);

enum class Metric { kRmspe, kMape, kTau, kWeightedRmspe };

std::string to_string(Metric metric);
Metric parse_metric(const std::string& name);

double metric_rmspe(const Eigen::VectorXd& errors);
double metric_mape(const Eigen::VectorXd& errors);
/// tau-size; c_tau may be +inf, in which case it equals the RMSPE.
double metric_tau(const Eigen::VectorXd& errors, double c_tau = 3.0);
double apply_metric(Metric metric, const Eigen::VectorXd& errors, double c_tau = 3.0);

/// Pearson correlation. Throws kZeroVariance if either vector is constant.
double weight_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SurrogateMatch {
  /// Position j holds the index of the fold minimum matched to full minimum j.
  std::vector<int> index;
  std::vector<double> similarity;
  /// Full minima for which every candidate had zero variance; matched to the
  /// fold minimum with the lowest objective.
  std::vector<bool> fallback;
};

/// Matches every full-data minimum to the most similar fold minimum.
/// `full_weights[j]` and `fold_weights[m]` must be defined on the same rows;
/// fold minima are expected in ascending objective order so that ties favour
/// the lower objective.
SurrogateMatch match_surrogates(const std::vector<Eigen::VectorXd>& full_weights,
                                const std::vector<Eigen::VectorXd>& fold_weights);

/// sqrt(sum_i w_i e_i^2 / sum_i w_i); +inf when all weights vanish.
double weighted_rmspe(const Eigen::VectorXd& weights, const Eigen::VectorXd& errors);

struct CvCell {
  double mean = 0;
  double sd = 0;
  /// Replications with a finite estimate.
  int replications = 0;
};

struct CvOutcome {
  std::string engine;
  Metric metric = Metric::kTau;
  std::vector<double> lambdas;
  /// cells[t][q]: estimate for minimum q at lambda t.
  std::vector<std::vector<CvCell>> cells;
  /// values[t][q][r]: per-replication estimates (+inf when missing).
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<int> selected_q;
  int folds = 0;
  int replications = 0;
  int failed_fold_fits = 0;
  int matching_fallbacks = 0;
  int zero_weight_violations = 0;
  double seconds = 0;

  /// The curve E[t][selected_q[t]].
  std::vector<double> curve() const;
};

struct CvOptions {
  int folds = 7;
  int replications = 5;
  std::uint64_t seed = 1;
  Metric metric = Metric::kTau;
  double c_tau = 3.0;
  /// Run the (replication, fold) tasks concurrently.
  bool parallel = true;
  /// Fold fits: the naive engine runs the full pipeline with one minimum; the
  /// RIS engine uses the path optimizer settings only.
  PipelineOptions pipeline;
};

/// Folds used by replication r; shared by both engines for equal seeds.
FoldPlan replication_folds(Eigen::Index n, const CvOptions& options, int r);

CvOutcome naive_cv(const MinimaRegistry& registry, const Dataset& data, const LossSpec& loss,
                   const PenaltyFamily& family, const CvOptions& options);

CvOutcome ris_cv(const MinimaRegistry& registry, const Dataset& data, const LossSpec& loss,
                 const PenaltyFamily& family, const CvOptions& options);

enum class SelectionRule { kMin, kOneSe };

std::string to_string(SelectionRule rule);
SelectionRule parse_selection_rule(const std::string& name);

struct Selection {
  std::size_t lambda_index = 0;
  int q = 0;
  double lambda = 0;
  double estimate = 0;
  double sd = 0;
};

/// Throws kAllInfinite when no lambda has a finite estimate.
Selection select_lambda(const CvOutcome& outcome, SelectionRule rule);

}  // namespace robcv

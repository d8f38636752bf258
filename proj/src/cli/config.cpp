#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "robcv/cli.hpp"
#include "robcv/error.hpp"

namespace robcv::cli {

namespace {

void check(bool ok, const std::string& message) {
  if (!ok) throw InputError(message);
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

void RunConfig::validate() const {
  check(loss == "s" || loss == "m", "--loss must be 's' or 'm'");
  try {
    const RhoKind kind = parse_rho_kind(rho);
    check(kind != RhoKind::kSquare, "--rho must be bisquare, lqq or hampel");
    parse_metric(metric);
    parse_selection_rule(rule);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  check(engine == "ris" || engine == "naive", "--engine must be 'ris' or 'naive'");
  check(delta > 0 && delta <= 0.5, "--delta must lie in (0, 0.5]");
  check(scale > 0, "--scale must be positive");
  check(alpha > 0 && alpha <= 1, "--alpha must lie in (0, 1]");
  check(grid_size >= 1, "--grid-size must be at least 1");
  check(lambda_min_ratio > 0 && lambda_min_ratio < 1, "--lambda-min-ratio must lie in (0, 1)");
  for (double l : lambdas) check(l > 0 && std::isfinite(l), "--lambdas must be positive");
  check(max_minima >= 1, "--max-minima must be at least 1");
  check(folds >= 2, "--folds must be at least 2");
  check(replications >= 1, "--replications must be at least 1");
  check(c_tau > 0, "--c-tau must be positive");
  check(n_subsets >= 0, "--subsets must be non-negative");
  check(adaptive_exponent > 0, "--adaptive-exponent must be positive");
  check(threads >= 1, "--threads must be at least 1");
  check(metric != "wrmspe" || engine == "ris", "--metric wrmspe is only produced by the ris engine");
}

LossSpec RunConfig::loss_spec() const {
  const RhoFunction calibrated = calibrate_cutoff(parse_rho_kind(rho), delta);
  return loss == "s" ? LossSpec::s_loss(calibrated, delta) : LossSpec::m_loss(calibrated, scale);
}

PipelineOptions RunConfig::pipeline_options() const {
  PipelineOptions options;
  options.n_subsets = n_subsets;
  options.starts.intercept = intercept;
  options.path.max_minima = max_minima;
  options.path.optimizer.intercept = intercept;
  options.path.parallel = false;
  return options;
}

CvOptions RunConfig::cv_options() const {
  CvOptions options;
  options.folds = folds;
  options.replications = replications;
  options.seed = seed;
  options.metric = parse_metric(metric);
  options.c_tau = c_tau;
  options.parallel = threads > 1;
  options.pipeline = pipeline_options();
  return options;
}

Standardization Standardization::fit(const Dataset& data, bool enabled, bool center) {
  Standardization s;
  s.enabled = enabled;
  s.original_p = data.p();
  std::vector<double> xc, xs;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const Eigen::VectorXd col = data.x.col(j);
    if (col.maxCoeff() == col.minCoeff()) {
      s.dropped.push_back(j);
      continue;
    }
    s.kept.push_back(j);
    if (!enabled) {
      xc.push_back(0);
      xs.push_back(1);
      continue;
    }
    const std::vector<double> values(col.data(), col.data() + col.size());
    const double location = center ? median(values) : 0.0;
    std::vector<double> dev;
    for (double v : values) dev.push_back(std::abs(v - location));
    double spread = 1.4826 * median(dev);
    if (!(spread > 0)) {
      // More than half the entries tie at the median; use the mean deviation.
      double sum = 0;
      for (double d : dev) sum += d;
      spread = 1.2533 * sum / static_cast<double>(dev.size());
    }
    xc.push_back(location);
    xs.push_back(spread);
  }
  s.x_center = Eigen::Map<Eigen::VectorXd>(xc.data(), static_cast<Eigen::Index>(xc.size()));
  s.x_scale = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  if (enabled && center) {
    s.y_center = median(std::vector<double>(data.y.data(), data.y.data() + data.y.size()));
  }
  return s;
}

Dataset Standardization::apply(const Dataset& data) const {
  if (data.p() != original_p) {
    throw InputError(fmt::format("expected {} predictors, found {}", original_p, data.p()));
  }
  Dataset out{Eigen::MatrixXd(data.n(), static_cast<Eigen::Index>(kept.size())),
              data.y.array() - y_center};
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    out.x.col(j) = (data.x.col(kept[k]).array() - x_center[j]) / x_scale[j];
  }
  return out;
}

Coefficients Standardization::to_original(const Coefficients& coef) const {
  Coefficients out;
  out.beta = Eigen::VectorXd::Zero(original_p);
  out.intercept = coef.intercept + y_center;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    const double b = coef.beta[j] / x_scale[j];
    out.beta[kept[k]] = b;
    out.intercept -= b * x_center[j];
  }
  return out;
}

}  // namespace robcv::cli

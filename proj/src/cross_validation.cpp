#include "robcv/cross_validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "robcv/error.hpp"
#include "robcv/seed.hpp"

namespace robcv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_abs(const Eigen::VectorXd& errors) {
  std::vector<double> a(static_cast<std::size_t>(errors.size()));
  for (Eigen::Index i = 0; i < errors.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(errors[i]);
  const std::size_t n = a.size();
  const auto mid = a.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(a.begin(), mid, a.end());
  if (n % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(a.begin(), mid));
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[rows[k]];
  return out;
}

Eigen::VectorXd holdout_errors(const Dataset& data, const std::vector<Eigen::Index>& rows,
                               const Coefficients& coef) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::Index i = rows[k];
    e[static_cast<Eigen::Index>(k)] = data.y[i] - coef.intercept - data.x.row(i).dot(coef.beta);
  }
  return e;
}

std::uint64_t fit_seed(std::uint64_t seed, int r, int k) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(r) + 1, static_cast<std::uint64_t>(k) + 1);
}

// Runs `task(i)` for every i, serially or with OpenMP; the first exception is rethrown.
template <typename Task>
void run_tasks(int count, bool parallel, Task&& task) {
  if (!parallel) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::exception_ptr first;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      task(i);
    } catch (...) {
#pragma omp critical(robcv_cv_error)
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

CvCell summarize(const std::vector<double>& values, bool sample_sd) {
  CvCell cell;
  double sum = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++cell.replications;
    }
  }
  if (cell.replications == 0) {
    cell.mean = kInf;
    cell.sd = kInf;
    return cell;
  }
  cell.mean = sum / cell.replications;
  double ss = 0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - cell.mean) * (v - cell.mean);
  }
  const int denom = sample_sd ? cell.replications - 1 : cell.replications;
  cell.sd = denom > 0 ? std::sqrt(ss / denom) : 0.0;
  return cell;
}

void check_cv_inputs(const MinimaRegistry& registry, const Dataset& data, const CvOptions& options) {
  require(!registry.lambdas.empty(), "the minima registry is empty");
  require(options.replications >= 1, "at least one CV replication is required");
  require(options.folds >= 2, "at least two CV folds are required");
  if (options.folds > data.n()) {
    fail(ErrorCode::kKTooLarge, "more CV folds than observations");
  }
}

}  // namespace

std::vector<Eigen::Index> FoldPlan::test_rows(int k) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (assignment[static_cast<std::size_t>(i)] == k) rows.push_back(i);
  }
  return rows;
}

std::vector<Eigen::Index> FoldPlan::train_rows(int k) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (assignment[static_cast<std::size_t>(i)] != k) rows.push_back(i);
  }
  return rows;
}

FoldPlan make_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  require(folds >= 2, "at least two CV folds are required");
  if (folds > n) {
    fail(ErrorCode::kKTooLarge, "more CV folds than observations");
  }
  FoldPlan plan;
  plan.n = n;
  plan.folds = folds;
  plan.seed = seed;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  plan.assignment.resize(static_cast<std::size_t>(n));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignment[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  }
  return plan;
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kRmspe: return "rmspe";
    case Metric::kMape: return "mape";
    case Metric::kTau: return "tau";
    case Metric::kWeightedRmspe: return "wrmspe";
  }
  return "unknown";
}

Metric parse_metric(const std::string& name) {
  if (name == "rmspe") return Metric::kRmspe;
  if (name == "mape") return Metric::kMape;
  if (name == "tau") return Metric::kTau;
  fail(ErrorCode::kInvalidArgument, "unknown metric '" + name + "' (expected rmspe, mape or tau)");
}

double metric_rmspe(const Eigen::VectorXd& errors) {
  if (errors.size() == 0) fail(ErrorCode::kEmptyErrors, "no prediction errors");
  return std::sqrt(errors.squaredNorm() / static_cast<double>(errors.size()));
}

double metric_mape(const Eigen::VectorXd& errors) {
  if (errors.size() == 0) fail(ErrorCode::kEmptyErrors, "no prediction errors");
  return median_abs(errors);
}

double metric_tau(const Eigen::VectorXd& errors, double c_tau) {
  require(c_tau > 0, "c_tau must be positive");
  const double mape = metric_mape(errors);
  if (mape == 0) {
    return errors.cwiseAbs().maxCoeff() == 0 ? 0.0 : kInf;
  }
  double acc = 0;
  for (Eigen::Index i = 0; i < errors.size(); ++i) {
    const double t = std::min(c_tau, std::abs(errors[i]) / mape);
    acc += t * t;
  }
  return mape * std::sqrt(acc / static_cast<double>(errors.size()));
}

double apply_metric(Metric metric, const Eigen::VectorXd& errors, double c_tau) {
  switch (metric) {
    case Metric::kRmspe: return metric_rmspe(errors);
    case Metric::kMape: return metric_mape(errors);
    case Metric::kTau: return metric_tau(errors, c_tau);
    case Metric::kWeightedRmspe:
      return weighted_rmspe(Eigen::VectorXd::Ones(errors.size()), errors);
  }
  return kInf;
}

double weight_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size() && a.size() >= 2, "similarity needs equal lengths of at least two");
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double va = ca.squaredNorm();
  const double vb = cb.squaredNorm();
  if (!(va > 0) || !(vb > 0)) {
    fail(ErrorCode::kZeroVariance, "a weight vector is constant");
  }
  return std::clamp(ca.dot(cb) / std::sqrt(va * vb), -1.0, 1.0);
}

SurrogateMatch match_surrogates(const std::vector<Eigen::VectorXd>& full_weights,
                                const std::vector<Eigen::VectorXd>& fold_weights) {
  require(!full_weights.empty() && !fold_weights.empty(), "matching needs minima on both sides");
  SurrogateMatch match;
  match.index.assign(full_weights.size(), 0);
  match.similarity.assign(full_weights.size(), -kInf);
  match.fallback.assign(full_weights.size(), false);
  for (std::size_t j = 0; j < full_weights.size(); ++j) {
    int best = -1;
    double best_sim = -kInf;
    for (std::size_t m = 0; m < fold_weights.size(); ++m) {
      double sim;
      try {
        sim = weight_similarity(full_weights[j], fold_weights[m]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kZeroVariance) throw;
        continue;
      }
      if (best < 0 || sim > best_sim) {
        best = static_cast<int>(m);
        best_sim = sim;
      }
    }
    if (best < 0) {
      match.fallback[j] = true;
      best = 0;
    }
    match.index[j] = best;
    match.similarity[j] = best_sim;
  }
  return match;
}

double weighted_rmspe(const Eigen::VectorXd& weights, const Eigen::VectorXd& errors) {
  require(weights.size() == errors.size(), "weights and errors differ in length");
  const double total = weights.sum();
  if (!(total > 0)) return kInf;
  return std::sqrt((weights.array() * errors.array().square()).sum() / total);
}

std::vector<double> CvOutcome::curve() const {
  std::vector<double> out(cells.size(), kInf);
  for (std::size_t t = 0; t < cells.size(); ++t) {
    if (!cells[t].empty()) out[t] = cells[t][static_cast<std::size_t>(selected_q[t])].mean;
  }
  return out;
}

FoldPlan replication_folds(Eigen::Index n, const CvOptions& options, int r) {
  return make_folds(n, options.folds, derive_seed(options.seed, 2 * static_cast<std::uint64_t>(r)));
}

CvOutcome naive_cv(const MinimaRegistry& registry, const Dataset& data, const LossSpec& loss,
                   const PenaltyFamily& family, const CvOptions& options) {
  check_cv_inputs(registry, data, options);
  require(options.metric != Metric::kWeightedRmspe, "naive CV needs rmspe, mape or tau");
  const auto started = std::chrono::steady_clock::now();
  const int R = options.replications, K = options.folds;
  const std::size_t q = registry.lambdas.size();

  std::vector<FoldPlan> plans;
  for (int r = 0; r < R; ++r) plans.push_back(replication_folds(data.n(), options, r));

  PipelineOptions pipeline = options.pipeline;
  pipeline.path.max_minima = 1;
  pipeline.path.parallel = false;

  // errors[task][t]: held-out errors of fold task at lambda t (empty if the fit failed).
  std::vector<std::vector<Eigen::VectorXd>> errors(static_cast<std::size_t>(R * K));
  std::vector<int> failures(static_cast<std::size_t>(R * K), 0);
  std::vector<int> violations(static_cast<std::size_t>(R * K), 0);
  run_tasks(R * K, options.parallel, [&](int task) {
    const int r = task / K, k = task % K;
    const FoldPlan& plan = plans[static_cast<std::size_t>(r)];
    const auto test = plan.test_rows(k);
    auto& out = errors[static_cast<std::size_t>(task)];
    out.assign(q, Eigen::VectorXd());
    try {
      const Dataset train = data.rows(plan.train_rows(k));
      const MinimaRegistry fit =
          fit_path(train, loss, family, registry.lambdas, pipeline, fit_seed(options.seed, r, k));
      for (std::size_t t = 0; t < q; ++t) {
        if (fit.minima[t].empty()) {
          ++failures[static_cast<std::size_t>(task)];
          continue;
        }
        if (!within_zero_weight_cap(fit.minima[t].front(), loss)) ++violations[static_cast<std::size_t>(task)];
        out[t] = holdout_errors(data, test, fit.minima[t].front().coef);
      }
    } catch (const Error&) {
      failures[static_cast<std::size_t>(task)] += static_cast<int>(q);
    }
  });

  CvOutcome outcome;
  outcome.engine = "naive";
  outcome.metric = options.metric;
  outcome.lambdas = registry.lambdas;
  outcome.folds = K;
  outcome.replications = R;
  outcome.values.assign(q, std::vector<std::vector<double>>(1, std::vector<double>(static_cast<std::size_t>(R), kInf)));
  for (int r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < q; ++t) {
      std::vector<double> pooled;
      for (int k = 0; k < K; ++k) {
        const auto& e = errors[static_cast<std::size_t>(r * K + k)][t];
        pooled.insert(pooled.end(), e.data(), e.data() + e.size());
      }
      if (pooled.empty()) continue;
      const Eigen::Map<const Eigen::VectorXd> pe(pooled.data(), static_cast<Eigen::Index>(pooled.size()));
      outcome.values[t][0][static_cast<std::size_t>(r)] = apply_metric(options.metric, pe, options.c_tau);
    }
  }
  for (int f : failures) outcome.failed_fold_fits += f;
  for (int v : violations) outcome.zero_weight_violations += v;
  outcome.cells.resize(q);
  outcome.selected_q.assign(q, 0);
  for (std::size_t t = 0; t < q; ++t) outcome.cells[t] = {summarize(outcome.values[t][0], false)};
  outcome.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

CvOutcome ris_cv(const MinimaRegistry& registry, const Dataset& data, const LossSpec& loss,
                 const PenaltyFamily& family, const CvOptions& options) {
  check_cv_inputs(registry, data, options);
  const auto started = std::chrono::steady_clock::now();
  const int R = options.replications, K = options.folds;
  const std::size_t q = registry.lambdas.size();
  for (std::size_t t = 0; t < q; ++t) {
    for (const auto& m : registry.minima[t]) {
      require(m.weights.weights.size() == data.n(), "registry minima were not fitted to this data");
    }
  }

  std::vector<FoldPlan> plans;
  for (int r = 0; r < R; ++r) plans.push_back(replication_folds(data.n(), options, r));

  // Per fold task and lambda: weighted squared error sums and weight sums per full minimum.
  struct Contribution {
    std::vector<Eigen::VectorXd> numerator, denominator;
    int failures = 0, fallbacks = 0, violations = 0;
  };
  std::vector<Contribution> parts(static_cast<std::size_t>(R * K));
  const OptimizerOptions& optimizer = options.pipeline.path.optimizer;

  run_tasks(R * K, options.parallel, [&](int task) {
    const int r = task / K, k = task % K;
    const FoldPlan& plan = plans[static_cast<std::size_t>(r)];
    const auto train_rows = plan.train_rows(k);
    const auto test_rows = plan.test_rows(k);
    const Dataset train = data.rows(train_rows);
    Contribution& part = parts[static_cast<std::size_t>(task)];
    part.numerator.assign(q, Eigen::VectorXd());
    part.denominator.assign(q, Eigen::VectorXd());

    for (std::size_t t = 0; t < q; ++t) {
      const auto& full = registry.minima[t];
      if (full.empty()) continue;
      const PenaltySpec penalty = family.at(registry.lambdas[t]);
      std::vector<StartPoint> starts;
      for (const auto& m : full) starts.push_back(StartPoint{m.coef, MinimumOrigin::kWarmFromFullFit});
      auto results = optimize_starts_serial(train, loss, penalty, starts, optimizer);
      std::vector<LocalMinimum> found;
      for (auto& res : results) {
        if (res) {
          found.push_back(std::move(*res));
        } else {
          ++part.failures;
        }
      }
      const auto fold_minima = dedup_minima(std::move(found), registry.max_minima, registry.dedup_tol);
      if (fold_minima.empty()) continue;
      for (const auto& m : fold_minima) {
        if (!within_zero_weight_cap(m, loss)) ++part.violations;
      }

      std::vector<Eigen::VectorXd> full_w, fold_w;
      for (const auto& m : full) full_w.push_back(take(m.weights.weights, train_rows));
      for (const auto& m : fold_minima) fold_w.push_back(m.weights.weights);
      const SurrogateMatch match = match_surrogates(full_w, fold_w);

      Eigen::VectorXd num(static_cast<Eigen::Index>(full.size()));
      Eigen::VectorXd den(static_cast<Eigen::Index>(full.size()));
      for (std::size_t j = 0; j < full.size(); ++j) {
        if (match.fallback[j]) ++part.fallbacks;
        const auto& surrogate = fold_minima[static_cast<std::size_t>(match.index[j])];
        const Eigen::VectorXd e = holdout_errors(data, test_rows, surrogate.coef);
        const Eigen::VectorXd w = take(full[j].weights.weights, test_rows);
        num[static_cast<Eigen::Index>(j)] = (w.array() * e.array().square()).sum();
        den[static_cast<Eigen::Index>(j)] = w.sum();
      }
      part.numerator[t] = std::move(num);
      part.denominator[t] = std::move(den);
    }
  });

  CvOutcome outcome;
  outcome.engine = "ris";
  outcome.metric = Metric::kWeightedRmspe;
  outcome.lambdas = registry.lambdas;
  outcome.folds = K;
  outcome.replications = R;
  outcome.values.resize(q);
  outcome.cells.resize(q);
  outcome.selected_q.assign(q, 0);
  for (const auto& part : parts) {
    outcome.failed_fold_fits += part.failures;
    outcome.matching_fallbacks += part.fallbacks;
    outcome.zero_weight_violations += part.violations;
  }
  for (std::size_t t = 0; t < q; ++t) {
    const std::size_t count = registry.minima[t].size();
    outcome.values[t].assign(count, std::vector<double>(static_cast<std::size_t>(R), kInf));
    for (int r = 0; r < R; ++r) {
      Eigen::VectorXd num = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
      Eigen::VectorXd den = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
      for (int k = 0; k < K; ++k) {
        const auto& part = parts[static_cast<std::size_t>(r * K + k)];
        if (part.numerator[t].size() == 0) continue;
        num += part.numerator[t];
        den += part.denominator[t];
      }
      for (std::size_t j = 0; j < count; ++j) {
        const double d = den[static_cast<Eigen::Index>(j)];
        if (d > 0) {
          outcome.values[t][j][static_cast<std::size_t>(r)] =
              std::sqrt(num[static_cast<Eigen::Index>(j)] / d);
        }
      }
    }
    double best = kInf;
    for (std::size_t j = 0; j < count; ++j) {
      outcome.cells[t].push_back(summarize(outcome.values[t][j], true));
      if (outcome.cells[t][j].mean < best) {
        best = outcome.cells[t][j].mean;
        outcome.selected_q[t] = static_cast<int>(j);
      }
    }
  }
  outcome.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

std::string to_string(SelectionRule rule) {
  return rule == SelectionRule::kMin ? "min" : "one-se";
}

SelectionRule parse_selection_rule(const std::string& name) {
  if (name == "min") return SelectionRule::kMin;
  if (name == "one-se" || name == "1se") return SelectionRule::kOneSe;
  fail(ErrorCode::kInvalidArgument, "unknown selection rule '" + name + "' (expected min or one-se)");
}

Selection select_lambda(const CvOutcome& outcome, SelectionRule rule) {
  // The grid is descending, so scanning forward with strict comparisons
  // resolves ties towards the larger lambda.
  const auto estimate = [&](std::size_t t) -> const CvCell* {
    if (outcome.cells[t].empty()) return nullptr;
    const CvCell& c = outcome.cells[t][static_cast<std::size_t>(outcome.selected_q[t])];
    return std::isfinite(c.mean) ? &c : nullptr;
  };
  std::optional<std::size_t> best;
  for (std::size_t t = 0; t < outcome.cells.size(); ++t) {
    const CvCell* c = estimate(t);
    if (c && (!best || c->mean < estimate(*best)->mean)) best = t;
  }
  if (!best) fail(ErrorCode::kAllInfinite, "no lambda has a finite CV estimate");

  std::size_t chosen = *best;
  if (rule == SelectionRule::kOneSe) {
    const CvCell* b = estimate(*best);
    const double threshold = b->mean + (std::isfinite(b->sd) ? b->sd : 0.0);
    for (std::size_t t = 0; t < outcome.cells.size(); ++t) {
      const CvCell* c = estimate(t);
      if (c && c->mean <= threshold && outcome.lambdas[t] > outcome.lambdas[chosen]) chosen = t;
    }
  }
  const CvCell* c = estimate(chosen);
  Selection s;
  s.lambda_index = chosen;
  s.q = outcome.selected_q[chosen];
  s.lambda = outcome.lambdas[chosen];
  s.estimate = c->mean;
  s.sd = c->sd;
  return s;
}

}  // namespace robcv

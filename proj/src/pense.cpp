#include "robcv/pense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "robcv/error.hpp"

namespace robcv {
namespace {

double median_of(Eigen::VectorXd values) {
  const Eigen::Index n = values.size();
  if (n == 0) return 0;
  double* mid = values.data() + n / 2;
  std::nth_element(values.data(), mid, values.data() + n);
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.data(), mid);
  return 0.5 * (lower + upper);
}

Eigen::VectorXd residuals_of(const Dataset& data, const Coefficients& coef) {
  Eigen::VectorXd r = data.y - data.x * coef.beta;
  r.array() -= coef.intercept;
  return r;
}

// Unit-weight EN fit restricted to the rows with positive indicator weight.
Coefficients indicator_en_fit(const Dataset& data, const Eigen::VectorXd& indicator,
                              const PenaltySpec& penalty, const std::optional<Coefficients>& warm,
                              const StartOptions& options) {
  const WlsProblem problem{data.x, data.y, indicator, options.intercept};
  return weighted_en_solve(problem, penalty, warm, options.en).coef;
}

}  // namespace

Dataset Dataset::rows(const std::vector<Eigen::Index>& index) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(index.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(index.size()));
  for (std::size_t k = 0; k < index.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(index[k]);
    out.y[static_cast<Eigen::Index>(k)] = y[index[k]];
  }
  return out;
}

LossSpec LossSpec::s_loss(const RhoFunction& rho, double delta) {
  LossSpec loss;
  loss.kind = LossKind::kS;
  loss.rho = rho;
  loss.mscale.delta = delta;
  return loss;
}

LossSpec LossSpec::m_loss(const RhoFunction& rho, double scale) {
  require(scale > 0, "the M-loss requires a positive fixed scale");
  LossSpec loss;
  loss.kind = LossKind::kM;
  loss.rho = rho;
  loss.fixed_scale = scale;
  return loss;
}

LossSpec LossSpec::calibrated_s_loss(RhoKind kind, double delta) {
  return s_loss(calibrate_cutoff(kind, delta), delta);
}

const char* to_string(MinimumOrigin origin) {
  switch (origin) {
    case MinimumOrigin::kCold: return "cold";
    case MinimumOrigin::kSubsetStart: return "subset-start";
    case MinimumOrigin::kWarmFromLambda: return "warm-from-lambda";
    case MinimumOrigin::kWarmFromFullFit: return "warm-from-full-fit";
  }
  return "unknown";
}

Eigen::VectorXd predict(const Eigen::MatrixXd& x, const Coefficients& coef) {
  Eigen::VectorXd fitted = x * coef.beta;
  fitted.array() += coef.intercept;
  return fitted;
}

ObjectiveValue evaluate_objective(const Dataset& data, const LossSpec& loss,
                                  const PenaltySpec& penalty, const Coefficients& coef,
                                  double scale_hint) {
  ObjectiveValue out;
  out.residuals = residuals_of(data, coef);
  const double pen = penalty.evaluate(coef.beta);
  if (loss.kind == LossKind::kS) {
    out.scale = m_scale(out.residuals, loss.rho, loss.mscale, scale_hint);
    out.objective = 0.5 * out.scale * out.scale + pen;
  } else {
    const double s = loss.fixed_scale;
    double acc = 0;
    for (Eigen::Index i = 0; i < out.residuals.size(); ++i) acc += loss.rho.rho(out.residuals[i] / s);
    out.scale = s;
    out.objective = s * s * acc / static_cast<double>(data.n()) + pen;
  }
  return out;
}

LocalMinimum local_optimize(const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
                            const Coefficients& start, const OptimizerOptions& options,
                            MinimumOrigin origin) {
  const Eigen::Index n = data.n();
  require(start.beta.size() == data.p(), "starting point has the wrong dimension");
  penalty.validate(data.p());

  Coefficients current = start;
  if (!options.intercept) current.intercept = 0;
  ObjectiveValue value = evaluate_objective(data, loss, penalty, current);

  Eigen::VectorXd weights(n);
  LocalMinimum out;
  out.converged = false;
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    const double scale = value.scale;
    if (!(scale > 0)) {
      out.converged = true;  // exact fit
      break;
    }
    // Weighted-LS recast: the gradient of the robust loss equals that of
    // (1 / (2 sum w)) sum w_i r_i^2 with the penalty rescaled below.
    double weight_sum = 0, curvature = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = value.residuals[i] / scale;
      const double w = loss.rho.weight(t);
      weights[i] = w;
      weight_sum += w;
      curvature += w * t * t;
    }
    if (!(weight_sum > 0)) {
      break;
    }
    PenaltySpec inner = penalty;
    inner.lambda = loss.kind == LossKind::kS ? penalty.lambda * curvature / weight_sum
                                             : penalty.lambda * static_cast<double>(n) / weight_sum;
    const WlsProblem problem{data.x, data.y, weights, options.intercept};
    Coefficients candidate = weighted_en_solve(problem, inner, current, options.en).coef;
    ObjectiveValue next = evaluate_objective(data, loss, penalty, candidate, scale);

    const double slack = 1e-12 * (1 + std::abs(value.objective));
    if (next.objective > value.objective + slack) {
      // Step-halving towards the current iterate.
      bool accepted = false;
      for (int h = 1; h <= 30 && !accepted; ++h) {
        const double t = std::ldexp(1.0, -h);
        Coefficients mixed;
        mixed.intercept = current.intercept + t * (candidate.intercept - current.intercept);
        mixed.beta = current.beta + t * (candidate.beta - current.beta);
        ObjectiveValue trial = evaluate_objective(data, loss, penalty, mixed, scale);
        if (trial.objective <= value.objective) {
          candidate = std::move(mixed);
          next = std::move(trial);
          accepted = true;
        }
      }
      if (!accepted) {
        out.converged = true;
        break;
      }
    }
    const double decrease = value.objective - next.objective;
    const double step = std::hypot((candidate.beta - current.beta).norm(), candidate.intercept - current.intercept) /
                        (1 + current.beta.norm());
    current = std::move(candidate);
    value = std::move(next);
    if (decrease < options.rel_tolerance * (1 + std::abs(value.objective)) && step < options.coef_tolerance) {
      out.converged = true;
      break;
    }
  }

  out.coef = std::move(current);
  out.objective = value.objective;
  out.scale = value.scale;
  out.lambda = penalty.lambda;
  out.origin = origin;
  out.iterations = it;
  if (value.scale > 0) {
    out.weights = robustness_weights(value.residuals, loss.rho, value.scale);
  } else {
    out.weights.weights = Eigen::VectorXd::Ones(n);
    out.weights.source_scale = 0;
  }
  return out;
}

std::vector<StartPoint> generate_starts(const Dataset& data, [[maybe_unused]] const LossSpec& loss,
                                        const PenaltySpec& penalty, int n_subsets,
                                        std::uint64_t seed, const StartOptions& options) {
  require(n_subsets >= 0, "the number of subsets must be non-negative");
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  std::vector<StartPoint> starts;

  StartPoint zero;
  zero.coef.beta = Eigen::VectorXd::Zero(p);
  zero.coef.intercept = options.intercept ? median_of(data.y) : 0.0;
  starts.push_back(zero);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  StartPoint cold;
  cold.coef = indicator_en_fit(data, ones, penalty, std::nullopt, options);
  const Eigen::Index active = (cold.coef.beta.array() != 0).count();
  starts.push_back(cold);

  const Eigen::Index subset_size =
      std::max<Eigen::Index>(2, std::min<Eigen::Index>(n / 2, 3 * std::max<Eigen::Index>(5, active)));
  const Eigen::Index keep = (n + 1) / 2;

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  Eigen::VectorXd indicator(n);
  for (int s = 0; s < n_subsets; ++s) {
    std::iota(order.begin(), order.end(), 0);
    for (Eigen::Index k = 0; k < subset_size; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, n - 1);
      std::swap(order[k], order[pick(rng)]);
    }
    indicator.setZero();
    for (Eigen::Index k = 0; k < subset_size; ++k) indicator[order[k]] = 1;
    Coefficients fit = indicator_en_fit(data, indicator, penalty, std::nullopt, options);

    // Concentration: refit on the half of the data with the smallest residuals.
    for (int step = 0; step < options.concentration_steps; ++step) {
      const Eigen::VectorXd abs_res = residuals_of(data, fit).cwiseAbs();
      std::iota(order.begin(), order.end(), 0);
      std::nth_element(order.begin(), order.begin() + (keep - 1), order.end(),
                       [&abs_res](Eigen::Index a, Eigen::Index b) {
                         return abs_res[a] < abs_res[b] || (abs_res[a] == abs_res[b] && a < b);
                       });
      indicator.setZero();
      for (Eigen::Index k = 0; k < keep; ++k) indicator[order[k]] = 1;
      fit = indicator_en_fit(data, indicator, penalty, fit, options);
    }
    starts.push_back(StartPoint{std::move(fit), MinimumOrigin::kSubsetStart});
  }
  return starts;
}

double relative_distance(const Coefficients& a, const Coefficients& b) {
  return (a.beta - b.beta).norm() / (1 + a.beta.norm());
}

std::vector<LocalMinimum> dedup_minima(std::vector<LocalMinimum> candidates, int max_minima,
                                       double dedup_tol) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const LocalMinimum& a, const LocalMinimum& b) {
                     return a.objective < b.objective;
                   });
  std::vector<LocalMinimum> kept;
  for (auto& candidate : candidates) {
    if (static_cast<int>(kept.size()) >= max_minima) break;
    const bool distinct = std::all_of(kept.begin(), kept.end(), [&](const LocalMinimum& k) {
      return relative_distance(k.coef, candidate.coef) > dedup_tol;
    });
    if (distinct) kept.push_back(std::move(candidate));
  }
  return kept;
}

namespace {

std::optional<LocalMinimum> try_optimize(const Dataset& data, const LossSpec& loss,
                                         const PenaltySpec& penalty, const StartPoint& start,
                                         const OptimizerOptions& options) {
  try {
    LocalMinimum m = local_optimize(data, loss, penalty, start.coef, options, start.origin);
    if (!std::isfinite(m.objective) || !m.coef.beta.allFinite() || !std::isfinite(m.coef.intercept)) {
      return std::nullopt;
    }
    return m;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::optional<LocalMinimum>> optimize_starts_serial(
    const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
    const std::vector<StartPoint>& starts, const OptimizerOptions& options) {
  std::vector<std::optional<LocalMinimum>> out(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    out[k] = try_optimize(data, loss, penalty, starts[k], options);
  }
  return out;
}

std::vector<std::optional<LocalMinimum>> optimize_starts_parallel(
    const Dataset& data, const LossSpec& loss, const PenaltySpec& penalty,
    const std::vector<StartPoint>& starts, const OptimizerOptions& options) {
  std::vector<std::optional<LocalMinimum>> out(starts.size());
  const long count = static_cast<long>(starts.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < count; ++k) {
    out[static_cast<std::size_t>(k)] =
        try_optimize(data, loss, penalty, starts[static_cast<std::size_t>(k)], options);
  }
  return out;
}

MinimaRegistry compute_path(const Dataset& data, const LossSpec& loss,
                            const PenaltyFamily& family, const std::vector<double>& grid,
                            const std::vector<StartPoint>& starts, const PathOptions& options) {
  require(!grid.empty(), "the lambda grid is empty");
  require(options.max_minima >= 1, "at least one minimum must be retained");
  for (std::size_t t = 1; t < grid.size(); ++t) {
    require(grid[t] < grid[t - 1], "the lambda grid must be strictly descending");
  }

  MinimaRegistry registry;
  registry.lambdas = grid;
  registry.max_minima = options.max_minima;
  registry.dedup_tol = options.dedup_tol;
  registry.minima.resize(grid.size());

  StartOptions cold_options;
  cold_options.intercept = options.optimizer.intercept;
  cold_options.en = options.optimizer.en;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
  std::optional<Coefficients> previous_cold;

  for (std::size_t t = 0; t < grid.size(); ++t) {
    const PenaltySpec penalty = family.at(grid[t]);
    std::vector<StartPoint> candidates;
    if (t > 0) {
      for (const auto& m : registry.minima[t - 1]) {
        candidates.push_back(StartPoint{m.coef, MinimumOrigin::kWarmFromLambda});
      }
    }
    Coefficients cold = indicator_en_fit(data, ones, penalty, previous_cold, cold_options);
    previous_cold = cold;
    candidates.push_back(StartPoint{std::move(cold), MinimumOrigin::kCold});
    const bool inject =
        t == 0 || (options.restart_stride > 0 && t % static_cast<std::size_t>(options.restart_stride) == 0);
    if (inject) {
      candidates.insert(candidates.end(), starts.begin(), starts.end());
    }

    auto results = options.parallel
                       ? optimize_starts_parallel(data, loss, penalty, candidates, options.optimizer)
                       : optimize_starts_serial(data, loss, penalty, candidates, options.optimizer);
    std::vector<LocalMinimum> found;
    found.reserve(results.size());
    for (auto& r : results) {
      if (r) {
        found.push_back(std::move(*r));
      } else {
        ++registry.dropped_starts;
      }
    }
    registry.minima[t] = dedup_minima(std::move(found), options.max_minima, options.dedup_tol);
  }

  for (std::size_t t = grid.size() - 1; options.backward_sweep && t-- > 0;) {
    std::vector<StartPoint> candidates;
    for (const auto& m : registry.minima[t + 1]) {
      candidates.push_back(StartPoint{m.coef, MinimumOrigin::kWarmFromLambda});
    }
    const PenaltySpec penalty = family.at(grid[t]);
    auto results = options.parallel
                       ? optimize_starts_parallel(data, loss, penalty, candidates, options.optimizer)
                       : optimize_starts_serial(data, loss, penalty, candidates, options.optimizer);
    std::vector<LocalMinimum> found = std::move(registry.minima[t]);
    for (auto& r : results) {
      if (r) {
        found.push_back(std::move(*r));
      } else {
        ++registry.dropped_starts;
      }
    }
    registry.minima[t] = dedup_minima(std::move(found), options.max_minima, options.dedup_tol);
  }
  return registry;
}

LocalMinimum intercept_only_fit(const Dataset& data, const LossSpec& loss,
                                const OptimizerOptions& options) {
  Dataset location;
  location.x.resize(data.n(), 0);
  location.y = data.y;
  Coefficients start;
  start.beta.resize(0);
  start.intercept = options.intercept ? median_of(data.y) : 0.0;
  return local_optimize(location, loss, PenaltySpec{0, 1, {}}, start, options);
}

double robust_lambda_max(const Dataset& data, const LossSpec& loss, const PenaltyFamily& family,
                         const OptimizerOptions& options) {
  const LocalMinimum base = intercept_only_fit(data, loss, options);
  const Eigen::VectorXd r = data.y.array() - base.coef.intercept;
  const double scale = base.scale;
  require(scale > 0, "the response has zero robust scale");
  Eigen::VectorXd w(data.n());
  double weight_sum = 0, curvature = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double t = r[i] / scale;
    w[i] = loss.rho.weight(t);
    weight_sum += w[i];
    curvature += w[i] * t * t;
  }
  const WlsProblem problem{data.x, data.y, w, options.intercept};
  const double inner = lambda_max(problem, family.alpha, family.loadings);
  const double top = loss.kind == LossKind::kS ? inner * weight_sum / curvature
                                               : inner * weight_sum / static_cast<double>(data.n());
  // The rescaling can land an ulp below the threshold; keep the top of the grid all-zero.
  return top * (1 + 1e-12);
}

std::vector<double> default_lambda_grid(const Dataset& data, const LossSpec& loss,
                                        const PenaltyFamily& family, int q, double min_ratio,
                                        const OptimizerOptions& options) {
  require(q >= 1, "the grid needs at least one lambda");
  require(min_ratio > 0 && min_ratio < 1, "the lambda ratio must lie in (0, 1)");
  const double top = robust_lambda_max(data, loss, family, options);
  std::vector<double> grid(static_cast<std::size_t>(q));
  for (int t = 0; t < q; ++t) {
    const double frac = q == 1 ? 0.0 : static_cast<double>(t) / (q - 1);
    grid[static_cast<std::size_t>(t)] = top * std::pow(min_ratio, frac);
  }
  return grid;
}

double start_lambda(const std::vector<double>& grid) {
  require(!grid.empty(), "the lambda grid is empty");
  return std::sqrt(grid.front() * grid.back());
}

MinimaRegistry fit_path(const Dataset& data, const LossSpec& loss, const PenaltyFamily& family,
                        const std::vector<double>& grid, const PipelineOptions& options,
                        std::uint64_t seed) {
  StartOptions start_options = options.starts;
  start_options.intercept = options.path.optimizer.intercept;
  const auto starts = generate_starts(data, loss, family.at(start_lambda(grid)), options.n_subsets,
                                      seed, start_options);
  return compute_path(data, loss, family, grid, starts, options.path);
}

Eigen::Index zero_weight_count(const LocalMinimum& minimum) {
  return (minimum.weights.weights.array() == 0).count();
}

bool within_zero_weight_cap(const LocalMinimum& minimum, const LossSpec& loss) {
  if (loss.kind != LossKind::kS) return true;
  const auto n = static_cast<double>(minimum.weights.weights.size());
  return zero_weight_count(minimum) <= static_cast<Eigen::Index>(std::floor(loss.mscale.delta * n));
}

Eigen::VectorXd adaptive_loadings(const LocalMinimum& pilot, double exponent) {
  require(exponent > 0, "the adaptive exponent must be positive");
  const Eigen::VectorXd magnitude = pilot.coef.beta.cwiseAbs();
  const double largest = magnitude.size() > 0 ? magnitude.maxCoeff() : 0.0;
  const double floor = largest > 0 ? 1e-6 * largest : 1e-6;
  return (magnitude.array() + floor).pow(-exponent).matrix();
}

}  // namespace robcv

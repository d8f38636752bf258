#include "robcv/en_solver.hpp"

#include <cmath>
#include <vector>

#include "robcv/error.hpp"

namespace robcv {
namespace {

struct Centered {
  Eigen::VectorXd w;  // weights normalized to sum 1
  Eigen::VectorXd x_mean;
  double y_mean = 0;
  Eigen::VectorXd col_var;  // weighted second moment about the mean
};

Centered center(const WlsProblem& problem) {
  const Eigen::Index p = problem.design.cols();
  const double total = problem.obs_weights.sum();
  if (!(total > 0)) {
    fail(ErrorCode::kZeroWeightSum, "observation weights sum to zero");
  }
  Centered c;
  c.w = problem.obs_weights / total;
  if (problem.intercept) {
    c.x_mean = problem.design.transpose() * c.w;
    c.y_mean = c.w.dot(problem.response);
  } else {
    c.x_mean = Eigen::VectorXd::Zero(p);
  }
  c.col_var.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = problem.design.col(j);
    const double m2 = (c.w.array() * col.array().square()).sum();
    c.col_var[j] = std::max(0.0, m2 - c.x_mean[j] * c.x_mean[j]);
  }
  return c;
}

void check_dims(const WlsProblem& problem) {
  require(problem.response.size() == problem.design.rows() &&
              problem.obs_weights.size() == problem.design.rows(),
          "design, response and weights have inconsistent dimensions");
  require((problem.obs_weights.array() >= 0).all(), "observation weights must be non-negative");
}

}  // namespace

void PenaltySpec::validate(Eigen::Index p) const {
  require(lambda >= 0 && std::isfinite(lambda), "lambda must be non-negative and finite");
  require(alpha >= 0 && alpha <= 1, "alpha must lie in [0, 1]");
  if (loadings.size() > 0) {
    require(loadings.size() == p, "penalty loadings must have one entry per predictor");
    require((loadings.array() > 0).all() && loadings.allFinite(),
            "penalty loadings must be positive and finite");
  }
}

double PenaltySpec::evaluate(const Eigen::VectorXd& beta) const {
  double acc = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double b = beta[j];
    acc += loading(j) * (0.5 * (1 - alpha) * b * b + alpha * std::abs(b));
  }
  return lambda * acc;
}

double weighted_en_objective(const WlsProblem& problem, const PenaltySpec& penalty,
                             const Coefficients& coef) {
  const Eigen::VectorXd r =
      problem.response - problem.design * coef.beta - Eigen::VectorXd::Constant(
                                                          problem.response.size(), coef.intercept);
  const double loss = 0.5 * (problem.obs_weights.array() * r.array().square()).sum() /
                      problem.obs_weights.sum();
  return loss + penalty.evaluate(coef.beta);
}

EnSolution weighted_en_solve(const WlsProblem& problem, const PenaltySpec& penalty,
                             const std::optional<Coefficients>& warm_start,
                             const EnOptions& options) {
  check_dims(problem);
  const Eigen::Index p = problem.design.cols();
  penalty.validate(p);
  require(options.tolerance > 0, "solver tolerance must be positive");

  const Centered c = center(problem);
  const Eigen::MatrixXd& x = problem.design;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (warm_start && warm_start->beta.size() == p) {
    beta = warm_start->beta;
  }

  // Residuals of the centered problem; their weighted mean stays zero.
  Eigen::VectorXd r = problem.response - x * beta;
  r.array() -= c.y_mean - c.x_mean.dot(beta);

  std::vector<double> l1(p), l2(p), sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double load = penalty.loading(j);
    l1[j] = penalty.lambda * penalty.alpha * load;
    l2[j] = penalty.lambda * (1 - penalty.alpha) * load;
    sd[j] = std::sqrt(c.col_var[j]);
  }

  const auto update = [&](Eigen::Index j) {
    const double d = c.col_var[j];
    const double old = beta[j];
    double next = 0;
    if (d > 0) {
      const auto col = x.col(j);
      const double z = (c.w.array() * col.array() * r.array()).sum() + d * old;
      next = soft_threshold(z, l1[j]) / (d + l2[j]);
    }
    const double delta = next - old;
    if (delta != 0) {
      r.array() -= delta * (x.col(j).array() - c.x_mean[j]);
      beta[j] = next;
    }
    return std::abs(delta) * sd[j];
  };

  // Active-set step: minimize the EN objective on the face given by the
  // current nonzero coordinates and their signs. Moving towards that minimizer
  // only lowers the objective, so the step stops at the first sign crossing,
  // drops the crossing coordinate and re-solves.
  const Eigen::VectorXd sw = c.w.cwiseSqrt();
  const Eigen::VectorXd yc = sw.cwiseProduct((problem.response.array() - c.y_mean).matrix());
  const auto face_solve = [&](std::vector<Eigen::Index> act) {
    std::erase_if(act, [&](Eigen::Index j) { return beta[j] == 0 || c.col_var[j] <= 0; });
    bool moved = false;
    if (act.empty()) return moved;
    const auto full = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd xa(x.rows(), full);
    for (Eigen::Index m = 0; m < full; ++m) {
      const Eigen::Index j = act[static_cast<std::size_t>(m)];
      xa.col(m) = (x.col(j).array() - c.x_mean[j]) * sw.array();
    }
    Eigen::MatrixXd full_gram = xa.transpose() * xa;
    const Eigen::VectorXd full_xy = xa.transpose() * yc;
    // Positions of the remaining coordinates within the initial face.
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(full));
    for (Eigen::Index m = 0; m < full; ++m) pos[static_cast<std::size_t>(m)] = m;
    while (!act.empty()) {
      const auto k = static_cast<Eigen::Index>(act.size());
      Eigen::MatrixXd gram = full_gram(pos, pos);
      Eigen::VectorXd rhs(k);
      for (Eigen::Index m = 0; m < k; ++m) {
        const Eigen::Index j = act[static_cast<std::size_t>(m)];
        rhs[m] = full_xy[pos[static_cast<std::size_t>(m)]] - l1[j] * (beta[j] > 0 ? 1.0 : -1.0);
        gram(m, m) += l2[j];
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
      const Eigen::VectorXd sol = ldlt.solve(rhs);
      if (!sol.allFinite()) break;

      double step = 1;
      Eigen::Index blocking = -1;
      for (Eigen::Index m = 0; m < k; ++m) {
        const double cur = beta[act[static_cast<std::size_t>(m)]];
        if (sol[m] * cur <= 0) {
          const double t = cur / (cur - sol[m]);
          if (t < step) {
            step = t;
            blocking = m;
          }
        }
      }
      for (Eigen::Index m = 0; m < k; ++m) {
        const Eigen::Index j = act[static_cast<std::size_t>(m)];
        beta[j] = m == blocking ? 0.0 : beta[j] + step * (sol[m] - beta[j]);
      }
      moved = true;
      if (blocking < 0) break;
      act.erase(act.begin() + blocking);
      pos.erase(pos.begin() + blocking);
    }
    if (moved) {
      r = problem.response - x * beta;
      r.array() -= c.y_mean - c.x_mean.dot(beta);
    }
    return moved;
  };

  EnSolution out;
  out.converged = false;
  std::vector<Eigen::Index> active;
  active.reserve(p);
  while (out.passes < options.max_passes) {
    // Full sweep over every coordinate.
    double change = 0;
    for (Eigen::Index j = 0; j < p; ++j) change = std::max(change, update(j));
    ++out.passes;
    if (change < options.tolerance) {
      out.converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (beta[j] != 0) active.push_back(j);
    }
    if (options.active_set_solve && face_solve(active)) continue;
    while (out.passes < options.max_passes) {
      double active_change = 0;
      for (const Eigen::Index j : active) active_change = std::max(active_change, update(j));
      ++out.passes;
      if (active_change < options.tolerance) break;
    }
  }

  out.coef.beta = std::move(beta);
  out.coef.intercept = problem.intercept ? c.y_mean - c.x_mean.dot(out.coef.beta) : 0.0;
  return out;
}

double lambda_max(const WlsProblem& problem, double alpha, const Eigen::VectorXd& loadings) {
  check_dims(problem);
  if (!(alpha > 0)) {
    fail(ErrorCode::kAlphaZero, "lambda_max is unbounded for alpha = 0; supply a lambda grid");
  }
  const Centered c = center(problem);
  const Eigen::VectorXd r0 = problem.response.array() - c.y_mean;
  const Eigen::VectorXd grad = problem.design.transpose() * c.w.cwiseProduct(r0);
  double best = 0;
  for (Eigen::Index j = 0; j < grad.size(); ++j) {
    if (c.col_var[j] <= 0) continue;
    const double load = loadings.size() == 0 ? 1.0 : loadings[j];
    best = std::max(best, std::abs(grad[j]) / (alpha * load));
  }
  return best;
}

}  // namespace robcv

#include "robcv/robust_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "robcv/error.hpp"

namespace robcv {
namespace {

constexpr double kLqqB = 1.473;
constexpr double kLqqC = 0.982;
constexpr double kLqqS = 1.5;
constexpr double kMadConsistency = 0.6745;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kDegenerateResiduals: return "DegenerateResiduals";
    case ErrorCode::kZeroWeightSum: return "ZeroWeightSum";
    case ErrorCode::kAlphaZero: return "AlphaZero";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kEmptyErrors: return "EmptyErrors";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kAllInfinite: return "AllInfinite";
    case ErrorCode::kUnsupportedCalibration: return "UnsupportedCalibration";
  }
  return "Unknown";
}

std::string to_string(RhoKind kind) {
  switch (kind) {
    case RhoKind::kBisquare: return "bisquare";
    case RhoKind::kLqq: return "lqq";
    case RhoKind::kHampel: return "hampel";
    case RhoKind::kSquare: return "square";
  }
  return "unknown";
}

RhoKind parse_rho_kind(const std::string& name) {
  if (name == "bisquare") return RhoKind::kBisquare;
  if (name == "lqq") return RhoKind::kLqq;
  if (name == "hampel") return RhoKind::kHampel;
  if (name == "square") return RhoKind::kSquare;
  fail(ErrorCode::kInvalidArgument, "unknown rho function '" + name + "'");
}

RhoFunction::RhoFunction(RhoKind kind, double cutoff) : kind_(kind), cutoff_(cutoff) {
  require(cutoff > 0 && std::isfinite(cutoff), "rho cutoff must be positive and finite");
  switch (kind_) {
    case RhoKind::kBisquare:
      sup_ = cutoff_ * cutoff_ / 6.0;
      flat_ = cutoff_;
      break;
    case RhoKind::kLqq: {
      lqq_b_ = kLqqB * cutoff_;
      lqq_c_ = kLqqC * cutoff_;
      lqq_a_ = (2 * lqq_c_ + 2 * lqq_b_ - kLqqS * lqq_b_) / (kLqqS - 1);
      flat_ = lqq_c_ + lqq_b_ + lqq_a_;
      sup_ = rho(flat_);
      break;
    }
    case RhoKind::kHampel:
      sup_ = 2.5 * cutoff_ * cutoff_;
      flat_ = 4 * cutoff_;
      break;
    case RhoKind::kSquare:
      sup_ = kInf;
      flat_ = kInf;
      break;
  }
  norm_ = std::isfinite(sup_) ? sup_ : 1.0;
}

double RhoFunction::rho(double x) const noexcept {
  const double ax = std::abs(x);
  switch (kind_) {
    case RhoKind::kBisquare: {
      if (ax >= cutoff_) return sup_;
      const double u = 1 - (x / cutoff_) * (x / cutoff_);
      return sup_ * (1 - u * u * u);
    }
    case RhoKind::kLqq: {
      const double b = lqq_b_, c = lqq_c_, a = lqq_a_, s = kLqqS;
      if (ax <= c) return 0.5 * ax * ax;
      if (ax <= c + b) {
        const double t = ax - c;
        return 0.5 * c * c + c * t + 0.5 * t * t - s * t * t * t / (6 * b);
      }
      const double psi1 = c + b - 0.5 * s * b;
      const double rho1 = 0.5 * c * c + c * b + 0.5 * b * b - s * b * b / 6;
      const double u = std::min(ax - c - b, a);
      return rho1 + psi1 * u + (1 - s) * (0.5 * u * u - u * u * u / (6 * a));
    }
    case RhoKind::kHampel: {
      const double a = cutoff_;
      if (ax <= a) return 0.5 * ax * ax;
      if (ax <= 2 * a) return a * ax - 0.5 * a * a;
      if (ax <= 4 * a) {
        const double t = ax - 2 * a;
        return 1.5 * a * a + a * t - 0.25 * t * t;
      }
      return sup_;
    }
    case RhoKind::kSquare:
      return 0.5 * x * x;
  }
  return 0;
}

double RhoFunction::psi(double x) const noexcept {
  const double ax = std::abs(x);
  const double sign = x < 0 ? -1.0 : 1.0;
  switch (kind_) {
    case RhoKind::kBisquare: {
      if (ax >= cutoff_) return 0;
      const double u = 1 - (x / cutoff_) * (x / cutoff_);
      return x * u * u;
    }
    case RhoKind::kLqq: {
      const double b = lqq_b_, c = lqq_c_, a = lqq_a_, s = kLqqS;
      if (ax <= c) return x;
      if (ax <= c + b) {
        const double t = ax - c;
        return sign * (c + t - 0.5 * s * t * t / b);
      }
      if (ax >= flat_) return 0;
      const double u = ax - c - b;
      return sign * (c + b - 0.5 * s * b + (1 - s) * (u - 0.5 * u * u / a));
    }
    case RhoKind::kHampel: {
      const double a = cutoff_;
      if (ax <= a) return x;
      if (ax <= 2 * a) return sign * a;
      if (ax < 4 * a) return sign * (2 * a - 0.5 * ax);
      return 0;
    }
    case RhoKind::kSquare:
      return x;
  }
  return 0;
}

double RhoFunction::psi_prime(double x) const noexcept {
  const double ax = std::abs(x);
  switch (kind_) {
    case RhoKind::kBisquare: {
      if (ax >= cutoff_) return 0;
      const double u = (x / cutoff_) * (x / cutoff_);
      return (1 - u) * (1 - 5 * u);
    }
    case RhoKind::kLqq: {
      const double b = lqq_b_, c = lqq_c_, a = lqq_a_, s = kLqqS;
      if (ax <= c) return 1;
      if (ax <= c + b) return 1 - s * (ax - c) / b;
      if (ax >= flat_) return 0;
      return (1 - s) * (1 - (ax - c - b) / a);
    }
    case RhoKind::kHampel: {
      const double a = cutoff_;
      if (ax <= a) return 1;
      if (ax <= 2 * a) return 0;
      if (ax < 4 * a) return -0.5;
      return 0;
    }
    case RhoKind::kSquare:
      return 1;
  }
  return 0;
}

double RhoFunction::weight(double x) const noexcept {
  switch (kind_) {
    case RhoKind::kBisquare: {
      if (std::abs(x) >= cutoff_) return 0;
      const double u = 1 - (x / cutoff_) * (x / cutoff_);
      return u * u;
    }
    case RhoKind::kSquare:
      return 1;
    default:
      return x == 0 ? psi_prime(0) : psi(x) / x;
  }
}

std::vector<double> RhoFunction::breakpoints() const {
  switch (kind_) {
    case RhoKind::kBisquare: return {0, cutoff_};
    case RhoKind::kLqq: return {0, lqq_c_, lqq_c_ + lqq_b_, flat_};
    case RhoKind::kHampel: return {0, cutoff_, 2 * cutoff_, 4 * cutoff_};
    case RhoKind::kSquare: return {0};
  }
  return {0};
}

double normal_expected_rho(const RhoFunction& rho) {
  require(rho.bounded(), "normal_expected_rho requires a bounded rho function");
  const auto knots = rho.breakpoints();
  const auto integrand = [&rho](double z) {
    return rho.normalized_rho(z) * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI);
  };
  double total = 0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, knots[k], knots[k + 1], 15, 1e-14);
  }
  // Two symmetric halves plus the flat tails where normalized rho equals 1.
  return 2 * total + std::erfc(rho.flat_cutoff() / std::sqrt(2.0));
}

RhoFunction calibrate_cutoff(RhoKind kind, double delta) {
  require(delta > 0 && delta <= 0.5, "breakdown point delta must lie in (0, 0.5]");
  require(kind != RhoKind::kSquare, "the square loss cannot be calibrated");
  double lo = 0.1, hi = 30.0;
  const auto excess = [&](double cutoff) {
    return normal_expected_rho(RhoFunction(kind, cutoff)) - delta;
  };
  if (!(excess(lo) > 0 && excess(hi) < 0)) {
    fail(ErrorCode::kUnsupportedCalibration,
         "cannot bracket the cutoff for " + to_string(kind) + " at delta " + std::to_string(delta));
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0 ? lo : hi) = mid;
  }
  return RhoFunction(kind, 0.5 * (lo + hi));
}

double m_scale(const Eigen::VectorXd& residuals, const RhoFunction& rho, const MScaleSpec& spec,
               double initial_scale) {
  const Eigen::Index n = residuals.size();
  require(n >= 1, "m_scale needs at least one residual");
  require(spec.delta > 0 && spec.delta < 1, "m_scale delta must lie in (0, 1)");

  const Eigen::VectorXd abs_res = residuals.cwiseAbs();
  const Eigen::Index nonzero = (abs_res.array() > 0).count();
  if (nonzero == 0) {
    return 0;
  }
  if (nonzero <= static_cast<Eigen::Index>(std::floor(spec.delta * n))) {
    fail(ErrorCode::kDegenerateResiduals,
         "too few nonzero residuals for an M-scale at delta " + std::to_string(spec.delta));
  }

  double scale = initial_scale;
  if (!(scale > 0 && std::isfinite(scale))) {
    std::vector<double> sorted(abs_res.data(), abs_res.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    scale = sorted[n / 2] / kMadConsistency;
  }
  if (!(scale > 0)) {
    scale = abs_res.maxCoeff();
  }

  const auto mean_rho = [&](double s) {
    double acc = 0;
    for (Eigen::Index i = 0; i < n; ++i) acc += rho.normalized_rho(residuals[i] / s);
    return acc / static_cast<double>(n);
  };

  for (int it = 0; it < spec.max_iterations; ++it) {
    const double m = mean_rho(scale);
    if (std::abs(m - spec.delta) < spec.tolerance) {
      return scale;
    }
    scale *= std::sqrt(m / spec.delta);
  }

  // The fixed point crawls when many residuals are nearly zero; mean_rho is
  // non-increasing in the scale, so fall back to a bracketed root search.
  const auto excess = [&](double s) { return mean_rho(s) - spec.delta; };
  double lo = scale, hi = scale;
  for (int i = 0; i < 200 && excess(lo) <= 0; ++i) lo /= 2;
  for (int i = 0; i < 200 && excess(hi) >= 0; ++i) hi *= 2;
  const double f_lo = excess(lo), f_hi = excess(hi);
  if (f_lo > 0 && f_hi < 0) {
    std::uintmax_t evaluations = 400;
    const auto root = boost::math::tools::toms748_solve(
        excess, lo, hi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(52), evaluations);
    const double candidate = 0.5 * (root.first + root.second);
    if (std::abs(excess(candidate)) < spec.tolerance) return candidate;
    for (double s : {root.first, root.second}) {
      if (std::abs(excess(s)) < spec.tolerance) return s;
    }
  }
  fail(ErrorCode::kNonConvergence, "M-scale iteration did not converge");
}

WeightVector robustness_weights(const Eigen::VectorXd& residuals, const RhoFunction& rho,
                                double scale) {
  require(scale > 0, "robustness weights require a positive scale");
  WeightVector out;
  out.source_scale = scale;
  out.weights.resize(residuals.size());
  double total = 0;
  Eigen::Index positive = 0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double w = rho.weight(residuals[i] / scale);
    out.weights[i] = w;
    if (w > 0) {
      total += w;
      ++positive;
    }
  }
  if (positive > 0) {
    out.weights *= static_cast<double>(positive) / total;
  }
  return out;
}

}  // namespace robcv

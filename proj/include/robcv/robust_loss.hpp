#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace robcv {

enum class RhoKind { kBisquare, kLqq, kHampel, kSquare };

std::string to_string(RhoKind kind);
RhoKind parse_rho_kind(const std::string& name);

/// Bounded, symmetric loss applied to standardized residuals.
///
/// The single `cutoff` knob is the bisquare constant c, the multiplier of the
/// canonical LQQ breakpoints (b, c) = (1.473, 0.982) with fixed slope s = 1.5,
/// or the first Hampel breakpoint a of (a, 2a, 4a). `kSquare` is the unbounded
/// x^2/2 loss used to exercise convex limits in tests.
class RhoFunction {
 public:
  RhoFunction(RhoKind kind, double cutoff);

  static RhoFunction square() { return RhoFunction(RhoKind::kSquare, 1.0); }

  RhoKind kind() const noexcept { return kind_; }
  double cutoff() const noexcept { return cutoff_; }
  bool bounded() const noexcept { return kind_ != RhoKind::kSquare; }

  /// sup_x rho(x); +inf for the square loss.
  double sup() const noexcept { return sup_; }
  /// Smallest |x| from which rho is constant and psi vanishes; +inf if unbounded.
  double flat_cutoff() const noexcept { return flat_; }

  double rho(double x) const noexcept;
  double psi(double x) const noexcept;
  double psi_prime(double x) const noexcept;
  /// psi(x) / x, continuous at 0 with value psi'(0).
  double weight(double x) const noexcept;

  /// rho(x) / sup(); for the square loss the plain rho(x).
  double normalized_rho(double x) const noexcept { return rho(x) / norm_; }

  /// Knots of the piecewise definition on [0, flat_cutoff()].
  std::vector<double> breakpoints() const;

 private:
  RhoKind kind_;
  double cutoff_;
  // LQQ: scaled (b, c) plus derived length a of the descending piece.
  double lqq_b_ = 0, lqq_c_ = 0, lqq_a_ = 0;
  double sup_ = 0;
  double flat_ = 0;
  double norm_ = 1;
};

struct MScaleSpec {
  double delta = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 200;
};

/// Robustness weights of a residual vector under a given scale.
struct WeightVector {
  Eigen::VectorXd weights;
  double source_scale = 0;
};

/// Cutoff for which E[rho(Z)] / sup(rho) = delta at the standard normal, so
/// that the M-scale is consistent for the standard deviation.
RhoFunction calibrate_cutoff(RhoKind kind, double delta);

/// E[rho(Z)] / sup(rho) for Z ~ N(0, 1).
double normal_expected_rho(const RhoFunction& rho);

/// M-scale: the sigma solving mean(rho(r / sigma)) / sup(rho) = delta.
/// Returns 0 for an all-zero residual vector. A positive `initial_scale`
/// replaces the MAD starting value.
double m_scale(const Eigen::VectorXd& residuals, const RhoFunction& rho,
               const MScaleSpec& spec = {}, double initial_scale = 0);

/// W(r_i / scale), rescaled to average 1 over the observations with
/// positive weight.
WeightVector robustness_weights(const Eigen::VectorXd& residuals, const RhoFunction& rho,
                                double scale);

}  // namespace robcv

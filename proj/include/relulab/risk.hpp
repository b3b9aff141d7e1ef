#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "relulab/network.hpp"
#include "relulab/piecewise.hpp"

namespace relulab {

/// Target, positive density and network width sharing the domain [a, b].
class Problem {
 public:
  Problem(TargetSpec target, PiecewisePoly density, std::size_t width);

  const TargetSpec& target() const { return target_; }
  const PiecewisePoly& density() const { return density_; }
  std::size_t width() const { return width_; }
  std::size_t dim() const { return ParamVec::dim_for(width_); }
  double a() const { return target_.lo(); }
  double b() const { return target_.hi(); }
  double sup_density() const { return sup_density_; }

  /// Same target and density at another width.
  Problem with_width(std::size_t width) const;

  /// Segments of [a, b] on which both f and rho are single polynomials.
  struct FixedSegment {
    double lo, hi;
    double f0, f1;  // f(x) = f0 + f1 x
    Poly rho;
  };
  const std::vector<FixedSegment>& fixed_segments() const { return fixed_; }
  const std::vector<double>& fixed_points() const { return fixed_points_; }

 private:
  TargetSpec target_;
  PiecewisePoly density_;
  std::size_t width_;
  double sup_density_;
  std::vector<double> fixed_points_;
  std::vector<FixedSegment> fixed_;
};

/// Exact risk: integrates (N^theta - f)^2 rho through the piecewise-polynomial
/// algebra (realization_as_piecewise, target_as_piecewise, sub, mul).
double risk(const Problem& p, const ParamVec& theta);

/// Closed-form generalized gradient (integrals over active intervals).
std::vector<double> generalized_gradient(const Problem& p, const ParamVec& theta);

/// Reusable evaluator for the exact risk and generalized gradient in a single
/// pass. Integrals are assembled from per-segment density moments taken about
/// each segment's midpoint. Not thread-safe; use one per thread.
class RiskEvaluator {
 public:
  explicit RiskEvaluator(const Problem& p);

  const Problem& problem() const { return *problem_; }

  double risk(std::span<const double> theta);
  /// Writes G(theta) into `grad` and returns L(theta).
  double risk_and_gradient(std::span<const double> theta, std::span<double> grad);

  /// Segments of the current decomposition (after the last evaluation).
  struct Segment {
    double lo, hi, mid;
    double mu[3];     // int_lo^hi (x - mid)^k rho(x) dx
    double res_mid;   // (N - f)(mid)
    double res_slope; // d/dx (N - f) on the segment
  };
  std::span<const Segment> segments() const { return segments_; }
  bool active(std::size_t segment, std::size_t neuron) const { return active_[segment * width_ + neuron] != 0; }

  /// Splits [a, b] at kinks of `theta` and fills segment data.
  void decompose(std::span<const double> theta);

 private:
  const Problem* problem_;
  std::size_t width_;
  std::vector<double> cuts_;
  std::vector<Segment> segments_;
  std::vector<std::uint8_t> active_;
  std::vector<double> shifted_;
};

/// C^1 ReLU surrogate with chi_r = ReLU outside [0, 1/r]:
/// chi_r(x) = x^2 (2h - x) / h^2 on [0, h], h = 1/r.
double smoothed_relu(double x, double r);
double smoothed_relu_derivative(double x, double r);

/// Risk with ReLU replaced by chi_r. Integrated per segment (split at the
/// points where any preactivation equals 0 or 1/r) with an 8-point
/// Gauss-Legendre rule, exact for the polynomial integrands up to degree 15.
double smoothed_risk(const Problem& p, const ParamVec& theta, double r);
std::vector<double> smoothed_gradient(const Problem& p, const ParamVec& theta, double r);

/// Upper bound |c| + A sum_i |v_i| (|w_i| + |b_i|), A = max{1, |a|, |b|}, on
/// sup |N^theta| over [a, b].
double realization_bound(const ParamVec& theta, double a, double b);

}  // namespace relulab

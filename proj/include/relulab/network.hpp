#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relulab/piecewise.hpp"

namespace relulab {

/// Parameters of a width-h one-hidden-layer ReLU network with scalar input:
/// theta = (w_1..w_h, b_1..b_h, v_1..v_h, c), dimension 3h + 1.
/// Neuron indices are zero-based throughout the library.
class ParamVec {
 public:
  explicit ParamVec(std::size_t width);
  ParamVec(std::size_t width, std::vector<double> theta);

  std::size_t width() const { return width_; }
  std::size_t dim() const { return theta_.size(); }
  static std::size_t dim_for(std::size_t width) { return 3 * width + 1; }

  double w(std::size_t j) const { return theta_[j]; }
  double b(std::size_t j) const { return theta_[width_ + j]; }
  double v(std::size_t j) const { return theta_[2 * width_ + j]; }
  double c() const { return theta_.back(); }
  double& w(std::size_t j) { return theta_[j]; }
  double& b(std::size_t j) { return theta_[width_ + j]; }
  double& v(std::size_t j) { return theta_[2 * width_ + j]; }
  double& c() { return theta_.back(); }

  std::size_t w_index(std::size_t j) const { return j; }
  std::size_t b_index(std::size_t j) const { return width_ + j; }
  std::size_t v_index(std::size_t j) const { return 2 * width_ + j; }
  std::size_t c_index() const { return 3 * width_; }

  std::span<const double> values() const { return theta_; }
  std::span<double> values() { return theta_; }
  double operator[](std::size_t i) const { return theta_[i]; }
  double& operator[](std::size_t i) { return theta_[i]; }

  double max_abs() const;
  bool all_finite() const;

  friend bool operator==(const ParamVec&, const ParamVec&) = default;

 private:
  std::size_t width_;
  std::vector<double> theta_;
};

double distance(const ParamVec& x, const ParamVec& y);

/// Kink location of a neuron on the extended real line; `infinite` when w = 0.
struct Kink {
  bool infinite = false;
  double value = 0.0;

  static Kink at_infinity() { return {true, 0.0}; }
  bool inside(double a, double b) const { return !infinite && value >= a && value <= b; }
  /// Clamp to [a, b]; the infinite kink maps to b.
  double clamped(double a, double b) const;
};

/// Set {x in [a,b] : w x + b > 0}. Stored as [lo, hi] with open/closed flags;
/// integrals never depend on the flags.
struct ActiveInterval {
  std::size_t neuron = 0;
  bool empty = true;
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double x) const;
  double length() const { return empty ? 0.0 : hi - lo; }
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

double realization(const ParamVec& theta, double x);
PiecewisePoly realization_as_piecewise(const ParamVec& theta, double a, double b);
std::vector<Kink> breakpoints(const ParamVec& theta);
Kink breakpoint(const ParamVec& theta, std::size_t j);
ActiveInterval active_interval(const ParamVec& theta, std::size_t j, double a, double b);

/// True iff w_j v + b_j is nonzero (beyond 1e-12 relative to the neuron's
/// scale) at v in {a, b} for every neuron.
bool in_region_V(const ParamVec& theta, double a, double b);

/// sum_j |v_j| |w_j|: Lipschitz constant of the realization.
double lipschitz_constant(const ParamVec& theta);

}  // namespace relulab

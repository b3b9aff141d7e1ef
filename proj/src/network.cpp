#include "relulab/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relulab {

ParamVec::ParamVec(std::size_t width) : width_(width), theta_(dim_for(width), 0.0) {
  if (width == 0) throw std::invalid_argument("ParamVec: width must be positive");
}

ParamVec::ParamVec(std::size_t width, std::vector<double> theta) : width_(width), theta_(std::move(theta)) {
  if (width == 0) throw std::invalid_argument("ParamVec: width must be positive");
  if (theta_.size() != dim_for(width))
    throw std::invalid_argument("ParamVec: expected " + std::to_string(dim_for(width)) + " values, got " +
                                std::to_string(theta_.size()));
}

double ParamVec::max_abs() const {
  double m = 0.0;
  for (double t : theta_) m = std::max(m, std::abs(t));
  return m;
}

bool ParamVec::all_finite() const {
  return std::all_of(theta_.begin(), theta_.end(), [](double t) { return std::isfinite(t); });
}

double distance(const ParamVec& x, const ParamVec& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double Kink::clamped(double a, double b) const {
  if (infinite) return b;
  return std::max(std::min(value, b), a);
}

bool ActiveInterval::contains(double x) const {
  if (empty) return false;
  const bool above = lo_closed ? x >= lo : x > lo;
  const bool below = hi_closed ? x <= hi : x < hi;
  return above && below;
}

double realization(const ParamVec& theta, double x) {
  double y = theta.c();
  for (std::size_t j = 0; j < theta.width(); ++j) y += theta.v(j) * relu(theta.w(j) * x + theta.b(j));
  return y;
}

Kink breakpoint(const ParamVec& theta, std::size_t j) {
  if (theta.w(j) == 0.0) return Kink::at_infinity();
  return {false, -theta.b(j) / theta.w(j)};
}

std::vector<Kink> breakpoints(const ParamVec& theta) {
  std::vector<Kink> q;
  q.reserve(theta.width());
  for (std::size_t j = 0; j < theta.width(); ++j) q.push_back(breakpoint(theta, j));
  return q;
}

ActiveInterval active_interval(const ParamVec& theta, std::size_t j, double a, double b) {
  if (j >= theta.width()) throw std::out_of_range("active_interval: neuron index out of range");
  ActiveInterval I;
  I.neuron = j;
  const double w = theta.w(j), bias = theta.b(j);
  if (w == 0.0) {
    if (bias > 0.0) {
      I = {j, false, a, b, true, true};
    }
    return I;
  }
  const double q = -bias / w;
  if (w > 0.0) {  // active for x > q
    if (q >= b) return I;
    if (q < a) return {j, false, a, b, true, true};
    return {j, false, q, b, false, true};
  }
  // w < 0: active for x < q
  if (q <= a) return I;
  if (q > b) return {j, false, a, b, true, true};
  return {j, false, a, q, true, false};
}

PiecewisePoly realization_as_piecewise(const ParamVec& theta, double a, double b) {
  std::vector<double> cuts;
  for (const Kink& k : breakpoints(theta))
    if (!k.infinite && k.value > a && k.value < b) cuts.push_back(k.value);
  std::sort(cuts.begin(), cuts.end());
  const double ends[] = {a, b};
  std::vector<double> bps = merge_breakpoints(ends, cuts);

  std::vector<Poly> pieces;
  pieces.reserve(bps.size() - 1);
  for (std::size_t s = 0; s + 1 < bps.size(); ++s) {
    const double mid = 0.5 * (bps[s] + bps[s + 1]);
    double c0 = theta.c(), c1 = 0.0;
    for (std::size_t j = 0; j < theta.width(); ++j) {
      if (theta.w(j) * mid + theta.b(j) > 0.0) {
        c0 += theta.v(j) * theta.b(j);
        c1 += theta.v(j) * theta.w(j);
      }
    }
    pieces.push_back(Poly::linear(c0, c1));
  }
  return PiecewisePoly(std::move(bps), std::move(pieces));
}

bool in_region_V(const ParamVec& theta, double a, double b) {
  for (std::size_t j = 0; j < theta.width(); ++j) {
    const double w = theta.w(j), bias = theta.b(j);
    for (double x : {a, b}) {
      const double scale = std::max({std::abs(w * x), std::abs(bias), 1e-300});
      if (!(std::abs(w * x + bias) > 1e-12 * scale)) return false;
    }
  }
  return true;
}

double lipschitz_constant(const ParamVec& theta) {
  double l = 0.0;
  for (std::size_t j = 0; j < theta.width(); ++j) l += std::abs(theta.v(j)) * std::abs(theta.w(j));
  return l;
}

}  // namespace relulab

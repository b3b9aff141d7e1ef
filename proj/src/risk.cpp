#include "relulab/risk.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

namespace relulab {

// ---------------------------------------------------------------- Problem

Problem::Problem(TargetSpec target, PiecewisePoly density, std::size_t width)
    : target_(std::move(target)), density_(std::move(density)), width_(width) {
  if (width_ == 0) throw std::invalid_argument("problem: width must be positive");
  const double tol = 1e-13 * (target_.hi() - target_.lo());
  if (std::abs(density_.lo() - target_.lo()) > tol || std::abs(density_.hi() - target_.hi()) > tol)
    throw std::invalid_argument("problem: target and density domains differ");
  require_positive(density_);
  sup_density_ = density_.max_value();

  fixed_points_ = merge_breakpoints(target_.grid(), density_.breakpoints());
  fixed_.reserve(fixed_points_.size() - 1);
  for (std::size_t k = 0; k + 1 < fixed_points_.size(); ++k) {
    const double lo = fixed_points_[k], hi = fixed_points_[k + 1];
    const double mid = 0.5 * (lo + hi);
    const std::size_t i = target_.segment_of(mid);
    const double slope = target_.slopes()[i];
    fixed_.push_back({lo, hi, target_.knot_values()[i] - slope * target_.grid()[i], slope,
                      density_.pieces()[density_.segment_of(mid)]});
  }
}

Problem Problem::with_width(std::size_t width) const { return Problem(target_, density_, width); }

// ---------------------------------------------------------------- exact risk

double risk(const Problem& p, const ParamVec& theta) {
  if (theta.width() != p.width()) throw std::invalid_argument("risk: width mismatch");
  const PiecewisePoly diff = sub(realization_as_piecewise(theta, p.a(), p.b()), target_as_piecewise(p.target()));
  const double value = mul(mul(diff, diff), p.density()).integrate();
  return std::max(value, 0.0);
}

std::vector<double> generalized_gradient(const Problem& p, const ParamVec& theta) {
  if (theta.width() != p.width()) throw std::invalid_argument("generalized_gradient: width mismatch");
  RiskEvaluator ev(p);
  std::vector<double> g(theta.dim());
  ev.risk_and_gradient(theta.values(), g);
  return g;
}

// ---------------------------------------------------------------- RiskEvaluator

RiskEvaluator::RiskEvaluator(const Problem& p) : problem_(&p), width_(p.width()) {}

namespace {

// Coefficients of q(t) = p(x0 + t), in place.
void taylor_shift(std::vector<double>& c, double x0) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = n - 1; j > i; --j) c[j - 1] += x0 * c[j];
}

}  // namespace

void RiskEvaluator::decompose(std::span<const double> theta) {
  const Problem& p = *problem_;
  const std::size_t h = width_;
  const double a = p.a(), b = p.b();

  cuts_.assign(p.fixed_points().begin(), p.fixed_points().end());
  for (std::size_t j = 0; j < h; ++j) {
    const double w = theta[j];
    if (w == 0.0) continue;
    const double q = -theta[h + j] / w;
    if (q > a && q < b) cuts_.push_back(q);
  }
  std::sort(cuts_.begin(), cuts_.end());

  segments_.clear();
  active_.clear();
  const auto& fixed = p.fixed_segments();
  const auto& fixed_points = p.fixed_points();
  for (std::size_t k = 0; k + 1 < cuts_.size(); ++k) {
    const double lo = cuts_[k], hi = cuts_[k + 1];
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const auto it = std::upper_bound(fixed_points.begin() + 1, fixed_points.end() - 1, mid);
    const auto& fs = fixed[static_cast<std::size_t>(it - fixed_points.begin()) - 1];

    Segment s{};
    s.lo = lo;
    s.hi = hi;
    s.mid = mid;

    shifted_.assign(fs.rho.coeffs().begin(), fs.rho.coeffs().end());
    taylor_shift(shifted_, mid);
    for (int k2 = 0; k2 < 3; ++k2) {
      double acc = 0.0;
      for (std::size_t m = 0; m < shifted_.size(); ++m) {
        const std::size_t pw = static_cast<std::size_t>(k2) + m;
        if (pw % 2 == 0) acc += shifted_[m] * 2.0 * std::pow(half, static_cast<double>(pw + 1)) / static_cast<double>(pw + 1);
      }
      s.mu[k2] = acc;
    }

    double res_mid = theta[3 * h] - (fs.f0 + fs.f1 * mid);
    double res_slope = -fs.f1;
    for (std::size_t j = 0; j < h; ++j) {
      const double pre = theta[j] * mid + theta[h + j];
      const bool on = pre > 0.0;
      active_.push_back(on ? 1 : 0);
      if (on) {
        res_mid += theta[2 * h + j] * pre;
        res_slope += theta[2 * h + j] * theta[j];
      }
    }
    s.res_mid = res_mid;
    s.res_slope = res_slope;
    segments_.push_back(s);
  }
}

double RiskEvaluator::risk(std::span<const double> theta) {
  decompose(theta);
  double acc = 0.0;
  for (const Segment& s : segments_)
    acc += s.res_mid * s.res_mid * s.mu[0] + 2.0 * s.res_mid * s.res_slope * s.mu[1] +
           s.res_slope * s.res_slope * s.mu[2];
  return std::max(acc, 0.0);
}

double RiskEvaluator::risk_and_gradient(std::span<const double> theta, std::span<double> grad) {
  const std::size_t h = width_;
  if (theta.size() != 3 * h + 1 || grad.size() != theta.size())
    throw std::invalid_argument("RiskEvaluator: dimension mismatch");
  decompose(theta);
  std::fill(grad.begin(), grad.end(), 0.0);

  double loss = 0.0;
  double gc = 0.0;
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const Segment& s = segments_[k];
    const double R = s.res_mid, r1 = s.res_slope;
    loss += R * R * s.mu[0] + 2.0 * R * r1 * s.mu[1] + r1 * r1 * s.mu[2];
    // int (N - f) rho and int x (N - f) rho over the segment
    const double a0 = R * s.mu[0] + r1 * s.mu[1];
    const double a1 = s.mid * a0 + R * s.mu[1] + r1 * s.mu[2];
    gc += a0;
    const std::uint8_t* act = &active_[k * h];
    for (std::size_t j = 0; j < h; ++j) {
      if (!act[j]) continue;
      grad[j] += theta[2 * h + j] * a1;
      grad[h + j] += theta[2 * h + j] * a0;
      grad[2 * h + j] += theta[j] * a1 + theta[h + j] * a0;
    }
  }
  for (double& g : grad) g *= 2.0;
  grad[3 * h] = 2.0 * gc;
  return std::max(loss, 0.0);
}

// ---------------------------------------------------------------- smoothing

double smoothed_relu(double x, double r) {
  const double h = 1.0 / r;
  if (x <= 0.0) return 0.0;
  if (x >= h) return x;
  return x * x * (2.0 * h - x) * r * r;
}

double smoothed_relu_derivative(double x, double r) {
  const double h = 1.0 / r;
  if (x <= 0.0) return 0.0;
  if (x >= h) return 1.0;
  return x * (4.0 * h - 3.0 * x) * r * r;
}

namespace {

using GaussRule = boost::math::quadrature::gauss<double, 8>;

// Calls fn(x, weight) at the quadrature nodes of every segment of [a, b] on
// which f, rho and all chi_r(w_j x + b_j) are single polynomials.
template <class Fn>
void for_each_smoothed_node(const Problem& p, const ParamVec& theta, double r, Fn&& fn) {
  if (!(r > 0.0)) throw std::invalid_argument("smoothing index r must be positive");
  const double a = p.a(), b = p.b();
  std::vector<double> cuts(p.fixed_points().begin(), p.fixed_points().end());
  for (std::size_t j = 0; j < theta.width(); ++j) {
    const double w = theta.w(j);
    if (w == 0.0) continue;
    for (double level : {0.0, 1.0 / r}) {
      const double x = (level - theta.b(j)) / w;
      if (x > a && x < b) cuts.push_back(x);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  const auto& nodes = GaussRule::abscissa();
  const auto& weights = GaussRule::weights();
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k], hi = cuts[k + 1];
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      // the 8-point rule stores the positive half of a symmetric node set
      fn(mid + half * nodes[n], half * weights[n]);
      fn(mid - half * nodes[n], half * weights[n]);
    }
  }
}

double smoothed_residual(const Problem& p, const ParamVec& theta, double x, double r) {
  double s = theta.c() - p.target()(x);
  for (std::size_t j = 0; j < theta.width(); ++j) s += theta.v(j) * smoothed_relu(theta.w(j) * x + theta.b(j), r);
  return s;
}

}  // namespace

double smoothed_risk(const Problem& p, const ParamVec& theta, double r) {
  if (theta.width() != p.width()) throw std::invalid_argument("smoothed_risk: width mismatch");
  double acc = 0.0;
  for_each_smoothed_node(p, theta, r, [&](double x, double wt) {
    const double s = smoothed_residual(p, theta, x, r);
    acc += wt * s * s * p.density()(x);
  });
  return acc;
}

std::vector<double> smoothed_gradient(const Problem& p, const ParamVec& theta, double r) {
  if (theta.width() != p.width()) throw std::invalid_argument("smoothed_gradient: width mismatch");
  const std::size_t h = theta.width();
  std::vector<double> g(theta.dim(), 0.0);
  for_each_smoothed_node(p, theta, r, [&](double x, double wt) {
    const double sr = 2.0 * wt * smoothed_residual(p, theta, x, r) * p.density()(x);
    for (std::size_t j = 0; j < h; ++j) {
      const double u = theta.w(j) * x + theta.b(j);
      const double d = smoothed_relu_derivative(u, r);
      g[j] += sr * theta.v(j) * d * x;
      g[h + j] += sr * theta.v(j) * d;
      g[2 * h + j] += sr * smoothed_relu(u, r);
    }
    g[3 * h] += sr;
  });
  return g;
}

double realization_bound(const ParamVec& theta, double a, double b) {
  const double A = std::max({1.0, std::abs(a), std::abs(b)});
  double s = 0.0;
  for (std::size_t j = 0; j < theta.width(); ++j)
    s += std::abs(theta.v(j)) * (std::abs(theta.w(j)) + std::abs(theta.b(j)));
  return std::abs(theta.c()) + A * s;
}

}  // namespace relulab

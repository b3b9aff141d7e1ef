#pragma once

// Reference computations used by the tests. Nothing here calls into the
// library's integration or differentiation code: the network and the target
// are re-evaluated from their definitions and integrals go through adaptive
// Gauss-Kronrod.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "relulab/network.hpp"
#include "relulab/piecewise.hpp"
#include "relulab/risk.hpp"

namespace oracle {

using relulab::ParamVec;
using relulab::PiecewisePoly;
using relulab::Poly;
using relulab::Problem;
using relulab::TargetSpec;

inline double net(const ParamVec& th, double x) {
  const std::size_t h = th.width();
  double s = th[3 * h];
  for (std::size_t j = 0; j < h; ++j) s += th[2 * h + j] * std::max(th[j] * x + th[h + j], 0.0);
  return s;
}

// f(a) + alpha_1 (x - a) + sum_j (alpha_j - alpha_{j-1}) max(x - x_{j-1}, 0)
inline double target(const TargetSpec& t, double x) {
  const auto& g = t.grid();
  const auto& al = t.slopes();
  double s = t.anchor() + al[0] * (x - g[0]);
  for (std::size_t j = 1; j < al.size(); ++j) s += (al[j] - al[j - 1]) * std::max(x - g[j], 0.0);
  return s;
}

// Adaptive G-K over [lo, hi] split at the given cuts.
inline double quad(const std::function<double(double)>& fn, double lo, double hi, std::vector<double> cuts = {}) {
  cuts.push_back(lo);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double l = std::max(lo, cuts[i]), r = std::min(hi, cuts[i + 1]);
    if (!(r > l)) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, l, r, 15, 1e-14);
  }
  return total;
}

inline std::vector<double> problem_cuts(const Problem& p, const ParamVec& th) {
  std::vector<double> cuts = p.target().grid();
  for (double x : p.density().breakpoints()) cuts.push_back(x);
  for (std::size_t j = 0; j < th.width(); ++j)
    if (th.w(j) != 0.0) cuts.push_back(-th.b(j) / th.w(j));
  return cuts;
}

inline double risk(const Problem& p, const ParamVec& th) {
  const auto& rho = p.density();
  const TargetSpec& t = p.target();
  auto integrand = [&](double x) {
    const double e = net(th, x) - target(t, x);
    return e * e * rho(x);
  };
  return quad(integrand, p.a(), p.b(), problem_cuts(p, th));
}

// Central differences, h_i = rel * max(1, |x_i|).
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                       std::vector<double> x, double rel = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = rel * std::max(1.0, std::abs(xi));
    x[i] = xi + h;
    const double fp = fn(x);
    x[i] = xi - h;
    const double fm = fn(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Column j holds d/dx_j of the vector function.
inline Eigen::MatrixXd fd_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& fn,
                                   std::vector<double> x, double rel = 1e-5) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xj = x[j];
    const double h = rel * std::max(1.0, std::abs(xj));
    x[j] = xj + h;
    const auto gp = fn(x);
    x[j] = xj - h;
    const auto gm = fn(x);
    x[j] = xj;
    for (Eigen::Index i = 0; i < n; ++i) J(i, j) = (gp[i] - gm[i]) / (2.0 * h);
  }
  return J;
}

inline double lu_det(const Eigen::MatrixXd& m) { return m.fullPivLu().determinant(); }

// max_i |x_i - y_i| / max_i |y_i|
inline double rel_err(const std::vector<double>& x, const std::vector<double>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num = std::max(num, std::abs(x[i] - y[i]));
    den = std::max(den, std::abs(y[i]));
  }
  return num / std::max(den, 1e-300);
}

inline double rel_err(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return (x - y).cwiseAbs().maxCoeff() / std::max(y.cwiseAbs().maxCoeff(), 1e-300);
}

inline double norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Normal draws; kinks inside [a, b] kept at least margin (b - a) from the ends.
inline ParamVec regular_theta(std::size_t width, double a, double b, std::mt19937_64& rng, double margin = 1e-3) {
  std::normal_distribution<double> nd;
  for (;;) {
    ParamVec th(width);
    for (std::size_t i = 0; i < th.dim(); ++i) th[i] = nd(rng);
    bool ok = true;
    for (std::size_t j = 0; j < width && ok; ++j) {
      if (th.w(j) == 0.0) {
        ok = false;
        break;
      }
      const double q = -th.b(j) / th.w(j);
      if (std::abs(q - a) < margin * (b - a) || std::abs(q - b) < margin * (b - a)) ok = false;
    }
    if (ok) return th;
  }
}

// Test problems.
inline TargetSpec abs_target() { return TargetSpec({0.0, 0.5, 1.0}, {-1.0, 1.0}, 0.5); }
inline TargetSpec four_piece() { return TargetSpec({0.0, 0.25, 0.5, 0.75, 1.0}, {1.0, -2.0, 0.5, 1.5}, 0.0); }
inline PiecewisePoly unit_density() { return PiecewisePoly::constant(0.0, 1.0, 1.0); }
// 1 + x on [0, 1/2], 2 - x on [1/2, 1]
inline PiecewisePoly tent_density() {
  return PiecewisePoly({0.0, 0.5, 1.0}, {Poly::linear(1.0, 1.0), Poly::linear(2.0, -1.0)});
}

}  // namespace oracle

#include "relulab/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

namespace relulab {

double HessianReport::gap_ratio(int k) const {
  if (k <= 0 || k >= singular_values.size()) return std::numeric_limits<double>::infinity();
  const double next = singular_values[k];
  if (next == 0.0) return std::numeric_limits<double>::infinity();
  return singular_values[k - 1] / next;
}

Eigen::MatrixXd hessian_matrix(const Problem& p, const ParamVec& theta) {
  if (theta.width() != p.width()) throw std::invalid_argument("hessian: width mismatch");
  if (!in_region_V(theta, p.a(), p.b()))
    throw std::domain_error("hessian: theta is outside the regular region (a kink sits at a or b)");

  const std::size_t h = theta.width();
  const std::size_t d = theta.dim();
  RiskEvaluator ev(p);
  ev.decompose(theta.values());

  // Per-neuron-pair accumulators of int_{I_i ∩ I_j} {1, x, x^2} rho, and
  // per-neuron int_{I_i} {1, x} (N - f) rho.
  Eigen::MatrixXd J0 = Eigen::MatrixXd::Zero(h, h), J1 = J0, J2 = J0;
  Eigen::VectorXd A0 = Eigen::VectorXd::Zero(h), A1 = A0;
  double total0 = 0.0;

  const auto segs = ev.segments();
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& s = segs[k];
    const double j0 = s.mu[0];
    const double j1 = s.mid * s.mu[0] + s.mu[1];
    const double j2 = s.mid * s.mid * s.mu[0] + 2.0 * s.mid * s.mu[1] + s.mu[2];
    const double a0 = s.res_mid * s.mu[0] + s.res_slope * s.mu[1];
    const double a1 = s.mid * a0 + s.res_mid * s.mu[1] + s.res_slope * s.mu[2];
    total0 += j0;
    for (std::size_t i = 0; i < h; ++i) {
      if (!ev.active(k, i)) continue;
      A0[i] += a0;
      A1[i] += a1;
      for (std::size_t j = i; j < h; ++j) {
        if (!ev.active(k, j)) continue;
        J0(i, j) += j0;
        J1(i, j) += j1;
        J2(i, j) += j2;
      }
    }
  }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      J0(i, j) = J0(j, i);
      J1(i, j) = J1(j, i);
      J2(i, j) = J2(j, i);
    }

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
  const std::size_t ci = theta.c_index();
  auto set = [&H](std::size_t r, std::size_t c, double val) {
    H(r, c) = val;
    H(c, r) = val;
  };

  set(ci, ci, 2.0 * total0);
  for (std::size_t j = 0; j < h; ++j) {
    const double wj = theta.w(j), bj = theta.b(j), vj = theta.v(j);
    set(theta.w_index(j), ci, 2.0 * vj * J1(j, j));
    set(theta.b_index(j), ci, 2.0 * vj * J0(j, j));
    set(theta.v_index(j), ci, 2.0 * (wj * J1(j, j) + bj * J0(j, j)));
  }

  for (std::size_t i = 0; i < h; ++i) {
    const double wi = theta.w(i), bi = theta.b(i), vi = theta.v(i);
    for (std::size_t j = 0; j < h; ++j) {
      const double wj = theta.w(j), bj = theta.b(j), vj = theta.v(j);
      // d^2 / dw_j dv_i and d^2 / db_j dv_i
      double wv = 2.0 * vj * (wi * J2(i, j) + bi * J1(i, j));
      double bv = 2.0 * vj * (wi * J1(i, j) + bi * J0(i, j));
      if (i == j) {
        wv += 2.0 * A1[i];
        bv += 2.0 * A0[i];
      }
      H(theta.w_index(j), theta.v_index(i)) = wv;
      H(theta.v_index(i), theta.w_index(j)) = wv;
      H(theta.b_index(j), theta.v_index(i)) = bv;
      H(theta.v_index(i), theta.b_index(j)) = bv;
      if (j >= i) {
        set(theta.v_index(i), theta.v_index(j),
            2.0 * (wi * wj * J2(i, j) + (wi * bj + bi * wj) * J1(i, j) + bi * bj * J0(i, j)));
        set(theta.w_index(i), theta.w_index(j), 2.0 * vi * vj * J2(i, j));
        set(theta.b_index(i), theta.b_index(j), 2.0 * vi * vj * J0(i, j));
      }
      H(theta.w_index(j), theta.b_index(i)) = 2.0 * vi * vj * J1(i, j);
      H(theta.b_index(i), theta.w_index(j)) = 2.0 * vi * vj * J1(i, j);
    }
  }

  // Kink boundary terms on the diagonal (w_i, b_i) blocks.
  for (std::size_t i = 0; i < h; ++i) {
    const Kink q = breakpoint(theta, i);
    if (!q.inside(p.a(), p.b())) continue;
    const double x = q.clamped(p.a(), p.b());
    const double wi = theta.w(i), bi = theta.b(i), vi = theta.v(i);
    const double e = (realization(theta, x) - p.target()(x)) * p.density()(x);
    const double inv_abs_w = 1.0 / std::abs(wi);
    H(theta.w_index(i), theta.w_index(i)) -= 2.0 * vi * bi * (1.0 / (wi * std::abs(wi))) * x * e;
    const double wb = 2.0 * vi * inv_abs_w * x * e;
    H(theta.w_index(i), theta.b_index(i)) += wb;
    H(theta.b_index(i), theta.w_index(i)) += wb;
    H(theta.b_index(i), theta.b_index(i)) += 2.0 * vi * inv_abs_w * e;
  }
  return H;
}

EigenExtremes eigen_extremes(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eigen_extremes: matrix must be square");
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("eigen_extremes: zero matrix has no nonzero eigenvalue");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd mags = es.eigenvalues().cwiseAbs();
  const double lambda = mags.maxCoeff();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  int rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv[k] > tol * lambda) ++rank;
  double sigma = lambda;
  for (Eigen::Index k = 0; k < mags.size(); ++k)
    if (mags[k] > tol * lambda) sigma = std::min(sigma, mags[k]);
  return {sigma, lambda, rank};
}

HessianReport hessian(const Problem& p, const ParamVec& theta) {
  HessianReport rep;
  rep.matrix = hessian_matrix(p, theta);
  rep.frobenius = rep.matrix.norm();
  rep.singular_values = Eigen::JacobiSVD<Eigen::MatrixXd>(rep.matrix).singularValues();
  if (rep.frobenius > 0.0) {
    const EigenExtremes ex = eigen_extremes(rep.matrix);
    rep.sigma_min_nonzero = ex.sigma;
    rep.lambda_max = ex.lambda;
    rep.numerical_rank = ex.rank;
  }
  return rep;
}

double entry_bound(const Problem& p, const ParamVec& theta, double B) {
  if (!(B >= 1.0)) throw std::invalid_argument("entry_bound: B must be at least 1");
  if (theta.max_abs() > B) throw std::invalid_argument("entry_bound: max |theta_i| exceeds B");
  for (std::size_t j = 0; j < theta.width(); ++j)
    if (breakpoint(theta, j).inside(p.a(), p.b()) && theta.w(j) < 0.5)
      throw std::invalid_argument("entry_bound: neuron " + std::to_string(j) + " has kink in [a,b] with w < 1/2");
  const double a = p.a(), b = p.b();
  const double A = std::max({1.0, std::abs(a), std::abs(b), b - a});
  const double h = static_cast<double>(theta.width());
  const double A2 = A * A, A3 = A2 * A, B2 = B * B;
  return (8.0 * A3 * B2 + 8.0 * A2 * B2 * B + 16.0 * A3 * h * B2 * B2 + 8.0 * A2 * B2 * p.target().sup_abs()) *
         p.sup_density();
}

namespace {

// int_lo^hi (x - center)^k rho(x) dx with a Gauss rule per density segment;
// exact for the polynomial degrees involved and free of the F(hi) - F(lo)
// cancellation on short segments.
double density_moment(const PiecewisePoly& density, double lo, double hi, int k, double center = 0.0) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  double acc = 0.0;
  const auto& bps = density.breakpoints();
  for (std::size_t s = 0; s < density.segment_count(); ++s) {
    const double l = std::max(lo, bps[s]), r = std::min(hi, bps[s + 1]);
    if (!(r > l)) continue;
    const double mid = 0.5 * (l + r), half = 0.5 * (r - l);
    const Poly& rho = density.pieces()[s];
    double seg = 0.0;
    for (std::size_t q = 0; q < Rule::abscissa().size(); ++q) {
      for (double sgn : {-1.0, 1.0}) {
        const double x = mid + sgn * half * Rule::abscissa()[q];
        seg += Rule::weights()[q] * rho(x) * std::pow(x - center, k);
      }
    }
    acc += half * seg;
  }
  return acc;
}

void check_grid(std::span<const double> grid, const PiecewisePoly& density) {
  if (grid.size() < 2) throw std::invalid_argument("grid needs at least two points");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("grid must be strictly increasing");
  const double tol = 1e-13 * (density.hi() - density.lo());
  if (grid.front() < density.lo() - tol || grid.back() > density.hi() + tol)
    throw std::invalid_argument("grid must lie inside the density domain");
}

}  // namespace

Eigen::MatrixXd moment_matrix(const PiecewisePoly& density, std::span<const double> grid) {
  check_grid(grid, density);
  const std::size_t n = grid.size() - 1;
  const double top = grid.back();
  Eigen::MatrixXd A(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double lo = grid[std::max(i, j)];
      A(i, j) = density_moment(density, lo, top, 2);
      A(n + i, j) = A(i, n + j) = density_moment(density, lo, top, 1);
      A(n + i, n + j) = density_moment(density, lo, top, 0);
    }
  return A;
}

double det_product_formula(const PiecewisePoly& density, std::span<const double> grid) {
  check_grid(grid, density);
  double det = 1.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    // m2 m0 - m1^2 is shift invariant; central moments avoid the cancellation
    const double mid = 0.5 * (grid[i] + grid[i + 1]);
    const double m0 = density_moment(density, grid[i], grid[i + 1], 0, mid);
    const double m1 = density_moment(density, grid[i], grid[i + 1], 1, mid);
    const double m2 = density_moment(density, grid[i], grid[i + 1], 2, mid);
    det *= m2 * m0 - m1 * m1;
  }
  return det;
}

Eigen::MatrixXd minor_matrix(std::span<const double> v, std::span<const double> grid, const PiecewisePoly& density) {
  check_grid(grid, density);
  const std::size_t n = v.size();
  if (grid.size() != n + 1) throw std::invalid_argument("minor_matrix: need N + 1 grid points for N weights");
  const double top = grid.back();
  Eigen::MatrixXd A(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double lo = grid[std::max(i, j)];  // I_i ∩ I_j = [x_{max(i,j)}, x_N]
      const double s = 2.0 * v[i] * v[j];
      A(i, j) = s * density_moment(density, lo, top, 2);
      A(n + i, j) = A(i, n + j) = s * density_moment(density, lo, top, 1);
      A(n + i, n + j) = s * density_moment(density, lo, top, 0);
    }
  return A;
}

double minor_det_positive(std::span<const double> v, std::span<const double> grid, const PiecewisePoly& density) {
  if (grid.size() != v.size() + 1) throw std::invalid_argument("minor_det_positive: need N + 1 grid points");
  double scale = 1.0;
  for (double vi : v) {
    if (vi == 0.0) throw std::invalid_argument("minor_det_positive: all v_i must be nonzero");
    const double v2 = vi * vi;
    scale *= 4.0 * v2 * v2;
  }
  return scale * det_product_formula(density, grid);
}

Eigen::MatrixXd wb_minor(const Eigen::MatrixXd& hess, std::size_t width, std::size_t n) {
  Eigen::MatrixXd m(2 * n, 2 * n);
  auto idx = [&](std::size_t k) { return k < n ? k : width + (k - n); };
  for (std::size_t r = 0; r < 2 * n; ++r)
    for (std::size_t c = 0; c < 2 * n; ++c) m(r, c) = hess(idx(r), idx(c));
  return m;
}

}  // namespace relulab

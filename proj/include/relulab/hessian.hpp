#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "relulab/network.hpp"
#include "relulab/piecewise.hpp"
#include "relulab/risk.hpp"

namespace relulab {

struct EigenExtremes {
  double sigma;  // smallest nonzero |eigenvalue|
  double lambda; // largest |eigenvalue|
  int rank;
};

/// Symmetric Hessian of the risk together with its spectral summary.
struct HessianReport {
  Eigen::MatrixXd matrix;
  double sigma_min_nonzero = 0.0;
  double lambda_max = 0.0;
  int numerical_rank = 0;
  double frobenius = 0.0;
  /// Singular values in descending order.
  Eigen::VectorXd singular_values;

  /// sigma_k / sigma_{k+1} for k = rank (1-based); infinity when the next
  /// singular value is exactly zero or k equals the dimension.
  double gap_ratio(int k) const;
};

inline constexpr double kRankTolerance = 1e-9;

/// Analytic Hessian on the regular region: integral parts over I_i ∩ I_j plus
/// the kink boundary terms of the diagonal (w, b) blocks. Throws
/// std::domain_error when theta is outside the regular region.
HessianReport hessian(const Problem& p, const ParamVec& theta);
Eigen::MatrixXd hessian_matrix(const Problem& p, const ParamVec& theta);

/// sigma, Lambda and rank (singular values above tol * Lambda) of a symmetric
/// nonzero matrix. Throws std::invalid_argument for the zero matrix.
EigenExtremes eigen_extremes(const Eigen::MatrixXd& m, double tol = kRankTolerance);

/// Entry bound (8A^3 B^2 + 8A^2 B^3 + 16A^3 h B^4 + 8A^2 B^2 sup|f|) sup rho,
/// A = max{1, |a|, |b|, b - a}. Requires max|theta_i| <= B, B >= 1, and
/// w_j >= 1/2 for every neuron whose kink lies in [a, b].
double entry_bound(const Problem& p, const ParamVec& theta, double B);

/// 2N x 2N matrix with blocks int_{x_max(i,j)}^{x_{N+1}} {x^2, x, 1} rho.
Eigen::MatrixXd moment_matrix(const PiecewisePoly& density, std::span<const double> grid);

/// prod_i ([int x^2 rho][int rho] - [int x rho]^2) over [x_i, x_{i+1}].
double det_product_formula(const PiecewisePoly& density, std::span<const double> grid);

/// Determinant of the 2N x 2N block matrix 2 v_i v_j int_{I_i ∩ I_j} {x^2, x, 1} rho
/// with I_j = [x_{j-1}, x_N], computed as 4^N prod|v_i|^4 det(B) where B is the
/// moment matrix on the same grid.
double minor_det_positive(std::span<const double> v, std::span<const double> grid, const PiecewisePoly& density);

/// The matrix behind minor_det_positive, assembled entry by entry.
Eigen::MatrixXd minor_matrix(std::span<const double> v, std::span<const double> grid, const PiecewisePoly& density);

/// Leading principal minor of the Hessian over indices {w_1..w_N, b_1..b_N}.
Eigen::MatrixXd wb_minor(const Eigen::MatrixXd& hess, std::size_t width, std::size_t n);

}  // namespace relulab

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace relulab {

inline constexpr int kDefaultDegreeCap = 8;

/// Dense polynomial, coefficients in ascending degree. Trailing zeros are
/// trimmed on construction so `degree()` is exact; the zero polynomial has
/// an empty coefficient list and degree -1.
class Poly {
 public:
  Poly() = default;
  explicit Poly(std::vector<double> coeffs);
  static Poly constant(double c);
  static Poly linear(double c0, double c1);

  const std::vector<double>& coeffs() const { return coeffs_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const { return coeffs_.empty(); }
  double coeff(int k) const;

  double operator()(double x) const;
  Poly derivative() const;
  /// Antiderivative with zero constant term.
  Poly antiderivative() const;
  double integrate(double lo, double hi) const;

  Poly& operator+=(const Poly& o);
  Poly& operator-=(const Poly& o);
  Poly& operator*=(double s);
  friend Poly operator+(Poly p, const Poly& q) { return p += q; }
  friend Poly operator-(Poly p, const Poly& q) { return p -= q; }
  friend Poly operator*(Poly p, double s) { return p *= s; }
  friend Poly operator*(double s, Poly p) { return p *= s; }
  friend Poly operator*(const Poly& p, const Poly& q);

 private:
  void trim();
  std::vector<double> coeffs_;
};

/// Real roots of `p` inside [lo, hi], ascending. Uses recursive isolation
/// between critical points followed by bisection; the zero polynomial has no
/// reported roots.
std::vector<double> real_roots(const Poly& p, double lo, double hi);

/// Minimum of `p` over [lo, hi] by critical-point enumeration.
double min_on_interval(const Poly& p, double lo, double hi);

/// Function on [lo, hi] given by one polynomial per segment. Evaluation at an
/// interior breakpoint uses the right-hand segment; `hi` uses the last one.
class PiecewisePoly {
 public:
  PiecewisePoly(std::vector<double> breakpoints, std::vector<Poly> pieces,
                int degree_cap = kDefaultDegreeCap);

  static PiecewisePoly constant(double lo, double hi, double c);
  static PiecewisePoly from_poly(double lo, double hi, Poly p);
  static PiecewisePoly zero(double lo, double hi) { return constant(lo, hi, 0.0); }

  double lo() const { return breakpoints_.front(); }
  double hi() const { return breakpoints_.back(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<Poly>& pieces() const { return pieces_; }
  std::size_t segment_count() const { return pieces_.size(); }
  int degree_cap() const { return degree_cap_; }
  int max_degree() const;

  /// Index of the segment containing x (right-continuous convention).
  std::size_t segment_of(double x) const;
  double operator()(double x) const;
  /// Limit from the left; equals operator() except at interior breakpoints.
  double eval_left(double x) const;

  /// Exact integral over [a, b] ⊆ [lo, hi] from per-segment antiderivatives.
  double integrate(double a, double b) const;
  double integrate() const { return integrate(lo(), hi()); }

  /// Same function with extra breakpoints inserted (points outside the open
  /// domain or fused with existing ones are ignored).
  PiecewisePoly refined(std::span<const double> extra) const;

  double min_value() const;
  double max_value() const;
  double sup_abs() const;

  PiecewisePoly& operator*=(double s);
  friend PiecewisePoly operator*(PiecewisePoly p, double s) { return p *= s; }

 private:
  std::vector<double> breakpoints_;
  std::vector<Poly> pieces_;
  int degree_cap_;
};

PiecewisePoly add(const PiecewisePoly& p, const PiecewisePoly& q);
PiecewisePoly sub(const PiecewisePoly& p, const PiecewisePoly& q);
PiecewisePoly mul(const PiecewisePoly& p, const PiecewisePoly& q);

/// Sorted union of two breakpoint lists over a shared domain; points closer
/// than 1e-13 * (hi - lo) are fused.
std::vector<double> merge_breakpoints(std::span<const double> a, std::span<const double> b);

/// Piecewise-affine target: continuous, slope `slopes[i]` on [grid[i], grid[i+1]].
class TargetSpec {
 public:
  TargetSpec(std::vector<double> grid, std::vector<double> slopes, double anchor);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& slopes() const { return slopes_; }
  double anchor() const { return anchor_; }
  std::size_t pieces() const { return slopes_.size(); }
  double lo() const { return grid_.front(); }
  double hi() const { return grid_.back(); }

  /// f at every grid point, accumulated from the anchor.
  const std::vector<double>& knot_values() const { return knot_values_; }
  std::size_t segment_of(double x) const;
  double operator()(double x) const;
  double sup_abs() const;
  double max_abs_slope() const;

  /// Equivalent target with consecutive equal slopes merged.
  TargetSpec collapsed() const;
  bool has_distinct_consecutive_slopes() const;

 private:
  std::vector<double> grid_;
  std::vector<double> slopes_;
  double anchor_;
  std::vector<double> knot_values_;
};

PiecewisePoly target_as_piecewise(const TargetSpec& t);

/// Throws std::invalid_argument unless every piece is strictly positive on
/// its segment.
void require_positive(const PiecewisePoly& density);

}  // namespace relulab

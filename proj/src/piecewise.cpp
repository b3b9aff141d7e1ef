#include "relulab/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace relulab {

// ---------------------------------------------------------------- Poly

Poly::Poly(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) { trim(); }

Poly Poly::constant(double c) { return Poly({c}); }
Poly Poly::linear(double c0, double c1) { return Poly({c0, c1}); }

void Poly::trim() {
  while (!coeffs_.empty() && coeffs_.back() == 0.0) coeffs_.pop_back();
}

double Poly::coeff(int k) const {
  return (k >= 0 && k < static_cast<int>(coeffs_.size())) ? coeffs_[k] : 0.0;
}

double Poly::operator()(double x) const {
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Poly Poly::derivative() const {
  if (coeffs_.size() <= 1) return Poly{};
  std::vector<double> d(coeffs_.size() - 1);
  for (std::size_t k = 1; k < coeffs_.size(); ++k) d[k - 1] = static_cast<double>(k) * coeffs_[k];
  return Poly(std::move(d));
}

Poly Poly::antiderivative() const {
  if (coeffs_.empty()) return Poly{};
  std::vector<double> a(coeffs_.size() + 1, 0.0);
  for (std::size_t k = 0; k < coeffs_.size(); ++k) a[k + 1] = coeffs_[k] / static_cast<double>(k + 1);
  return Poly(std::move(a));
}

double Poly::integrate(double lo, double hi) const {
  // Antiderivative differences, term by term: sum_k c_k (hi^{k+1} - lo^{k+1}) / (k+1).
  double acc = 0.0;
  double ph = hi, pl = lo;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    acc += coeffs_[k] * (ph - pl) / static_cast<double>(k + 1);
    ph *= hi;
    pl *= lo;
  }
  return acc;
}

Poly& Poly::operator+=(const Poly& o) {
  if (o.coeffs_.size() > coeffs_.size()) coeffs_.resize(o.coeffs_.size(), 0.0);
  for (std::size_t k = 0; k < o.coeffs_.size(); ++k) coeffs_[k] += o.coeffs_[k];
  trim();
  return *this;
}

Poly& Poly::operator-=(const Poly& o) {
  if (o.coeffs_.size() > coeffs_.size()) coeffs_.resize(o.coeffs_.size(), 0.0);
  for (std::size_t k = 0; k < o.coeffs_.size(); ++k) coeffs_[k] -= o.coeffs_[k];
  trim();
  return *this;
}

Poly& Poly::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  trim();
  return *this;
}

Poly operator*(const Poly& p, const Poly& q) {
  if (p.is_zero() || q.is_zero()) return Poly{};
  std::vector<double> r(p.coeffs_.size() + q.coeffs_.size() - 1, 0.0);
  for (std::size_t i = 0; i < p.coeffs_.size(); ++i)
    for (std::size_t j = 0; j < q.coeffs_.size(); ++j) r[i + j] += p.coeffs_[i] * q.coeffs_[j];
  return Poly(std::move(r));
}

namespace {

double bisect_root(const Poly& p, double u, double v) {
  double fu = p(u);
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (u + v);
    if (m <= u || m >= v) break;
    const double fm = p(m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fu < 0.0)) {
      u = m;
      fu = fm;
    } else {
      v = m;
    }
  }
  return 0.5 * (u + v);
}

}  // namespace

std::vector<double> real_roots(const Poly& p, double lo, double hi) {
  std::vector<double> roots;
  if (p.degree() <= 0 || hi < lo) return roots;
  if (p.degree() == 1) {
    const double r = -p.coeff(0) / p.coeff(1);
    if (r >= lo && r <= hi) roots.push_back(r);
    return roots;
  }
  // p is monotone between consecutive critical points.
  std::vector<double> cuts{lo};
  for (double c : real_roots(p.derivative(), lo, hi))
    if (c > cuts.back()) cuts.push_back(c);
  if (hi > cuts.back()) cuts.push_back(hi);

  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double u = cuts[k], v = cuts[k + 1];
    const double fu = p(u), fv = p(v);
    if (fu == 0.0) {
      roots.push_back(u);
    } else if (fv != 0.0 && (fu < 0.0) != (fv < 0.0)) {
      roots.push_back(bisect_root(p, u, v));
    }
  }
  if (p(cuts.back()) == 0.0) roots.push_back(cuts.back());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  return roots;
}

double min_on_interval(const Poly& p, double lo, double hi) {
  double m = std::min(p(lo), p(hi));
  for (double c : real_roots(p.derivative(), lo, hi)) m = std::min(m, p(c));
  return m;
}

// ---------------------------------------------------------------- PiecewisePoly

namespace {

double fuse_tolerance(double lo, double hi) { return 1e-13 * (hi - lo); }

}  // namespace

PiecewisePoly::PiecewisePoly(std::vector<double> breakpoints, std::vector<Poly> pieces, int degree_cap)
    : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)), degree_cap_(degree_cap) {
  if (breakpoints_.size() < 2) throw std::invalid_argument("piecewise: need at least two breakpoints");
  if (pieces_.size() != breakpoints_.size() - 1)
    throw std::invalid_argument("piecewise: pieces count must equal breakpoints count - 1");
  for (std::size_t k = 0; k < breakpoints_.size(); ++k) {
    if (!std::isfinite(breakpoints_[k])) throw std::invalid_argument("piecewise: non-finite breakpoint");
    if (k > 0 && !(breakpoints_[k] > breakpoints_[k - 1]))
      throw std::invalid_argument("piecewise: breakpoints must be strictly increasing");
  }
  for (const Poly& p : pieces_) {
    if (p.degree() > degree_cap_)
      throw std::length_error("piecewise: degree " + std::to_string(p.degree()) + " exceeds cap " +
                              std::to_string(degree_cap_));
    for (double c : p.coeffs())
      if (!std::isfinite(c)) throw std::invalid_argument("piecewise: non-finite coefficient");
  }
}

PiecewisePoly PiecewisePoly::constant(double lo, double hi, double c) {
  return PiecewisePoly({lo, hi}, {Poly::constant(c)});
}

PiecewisePoly PiecewisePoly::from_poly(double lo, double hi, Poly p) {
  return PiecewisePoly({lo, hi}, {std::move(p)});
}

int PiecewisePoly::max_degree() const {
  int d = -1;
  for (const Poly& p : pieces_) d = std::max(d, p.degree());
  return d;
}

std::size_t PiecewisePoly::segment_of(double x) const {
  // First breakpoint strictly greater than x, minus one, clamped to a valid segment.
  const auto it = std::upper_bound(breakpoints_.begin() + 1, breakpoints_.end() - 1, x);
  return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
}

double PiecewisePoly::operator()(double x) const { return pieces_[segment_of(x)](x); }

double PiecewisePoly::eval_left(double x) const {
  const auto it = std::lower_bound(breakpoints_.begin() + 1, breakpoints_.end() - 1, x);
  const auto k = static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  return pieces_[k](x);
}

double PiecewisePoly::integrate(double a, double b) const {
  const double tol = fuse_tolerance(lo(), hi());
  if (a < lo() - tol || b > hi() + tol || a > b)
    throw std::out_of_range("piecewise: integration range outside domain");
  a = std::max(a, lo());
  b = std::min(b, hi());
  double acc = 0.0;
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const double l = std::max(a, breakpoints_[k]);
    const double r = std::min(b, breakpoints_[k + 1]);
    if (r > l) acc += pieces_[k].integrate(l, r);
  }
  return acc;
}

PiecewisePoly PiecewisePoly::refined(std::span<const double> extra) const {
  std::vector<double> inner;
  for (double x : extra)
    if (x > lo() && x < hi()) inner.push_back(x);
  std::sort(inner.begin(), inner.end());
  std::vector<double> bps = merge_breakpoints(breakpoints_, inner);
  std::vector<Poly> pieces;
  pieces.reserve(bps.size() - 1);
  for (std::size_t k = 0; k + 1 < bps.size(); ++k) pieces.push_back(pieces_[segment_of(0.5 * (bps[k] + bps[k + 1]))]);
  return PiecewisePoly(std::move(bps), std::move(pieces), degree_cap_);
}

double PiecewisePoly::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pieces_.size(); ++k)
    m = std::min(m, min_on_interval(pieces_[k], breakpoints_[k], breakpoints_[k + 1]));
  return m;
}

double PiecewisePoly::max_value() const {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pieces_.size(); ++k)
    m = std::max(m, -min_on_interval(pieces_[k] * -1.0, breakpoints_[k], breakpoints_[k + 1]));
  return m;
}

double PiecewisePoly::sup_abs() const { return std::max(std::abs(min_value()), std::abs(max_value())); }

PiecewisePoly& PiecewisePoly::operator*=(double s) {
  for (Poly& p : pieces_) p *= s;
  return *this;
}

std::vector<double> merge_breakpoints(std::span<const double> a, std::span<const double> b) {
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  if (all.empty()) return all;
  const double tol = fuse_tolerance(all.front(), all.back());
  std::vector<double> out{all.front()};
  for (std::size_t k = 1; k < all.size(); ++k) {
    if (all[k] - out.back() > tol) {
      out.push_back(all[k]);
    } else if (k + 1 == all.size()) {
      out.back() = all[k];  // keep the exact upper endpoint
    }
  }
  return out;
}

namespace {

template <class Op>
PiecewisePoly combine(const PiecewisePoly& p, const PiecewisePoly& q, Op op) {
  const double tol = fuse_tolerance(p.lo(), p.hi());
  if (std::abs(p.lo() - q.lo()) > tol || std::abs(p.hi() - q.hi()) > tol)
    throw std::invalid_argument("piecewise: domain mismatch");
  std::vector<double> bps = merge_breakpoints(p.breakpoints(), q.breakpoints());
  std::vector<Poly> pieces;
  pieces.reserve(bps.size() - 1);
  for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
    const double mid = 0.5 * (bps[k] + bps[k + 1]);
    pieces.push_back(op(p.pieces()[p.segment_of(mid)], q.pieces()[q.segment_of(mid)]));
  }
  return PiecewisePoly(std::move(bps), std::move(pieces), std::max(p.degree_cap(), q.degree_cap()));
}

}  // namespace

PiecewisePoly add(const PiecewisePoly& p, const PiecewisePoly& q) {
  return combine(p, q, [](const Poly& x, const Poly& y) { return x + y; });
}

PiecewisePoly sub(const PiecewisePoly& p, const PiecewisePoly& q) {
  return combine(p, q, [](const Poly& x, const Poly& y) { return x - y; });
}

PiecewisePoly mul(const PiecewisePoly& p, const PiecewisePoly& q) {
  return combine(p, q, [](const Poly& x, const Poly& y) { return x * y; });
}

void require_positive(const PiecewisePoly& density) {
  for (std::size_t k = 0; k < density.segment_count(); ++k) {
    const double m =
        min_on_interval(density.pieces()[k], density.breakpoints()[k], density.breakpoints()[k + 1]);
    if (!(m > 0.0))
      throw std::invalid_argument("density: not strictly positive on segment " + std::to_string(k) +
                                  " (min " + std::to_string(m) + ")");
  }
}

// ---------------------------------------------------------------- TargetSpec

TargetSpec::TargetSpec(std::vector<double> grid, std::vector<double> slopes, double anchor)
    : grid_(std::move(grid)), slopes_(std::move(slopes)), anchor_(anchor) {
  if (grid_.size() < 2) throw std::invalid_argument("target: grid needs at least two points");
  if (slopes_.size() + 1 != grid_.size())
    throw std::invalid_argument("target: slopes count must equal grid count - 1");
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    if (!std::isfinite(grid_[k])) throw std::invalid_argument("target: non-finite grid point");
    if (k > 0 && !(grid_[k] > grid_[k - 1])) throw std::invalid_argument("target: grid must be strictly increasing");
  }
  for (double s : slopes_)
    if (!std::isfinite(s)) throw std::invalid_argument("target: non-finite slope");
  if (!std::isfinite(anchor_)) throw std::invalid_argument("target: non-finite anchor");

  knot_values_.resize(grid_.size());
  knot_values_[0] = anchor_;
  for (std::size_t i = 0; i < slopes_.size(); ++i)
    knot_values_[i + 1] = knot_values_[i] + slopes_[i] * (grid_[i + 1] - grid_[i]);
}

std::size_t TargetSpec::segment_of(double x) const {
  const auto it = std::upper_bound(grid_.begin() + 1, grid_.end() - 1, x);
  return static_cast<std::size_t>(it - grid_.begin()) - 1;
}

double TargetSpec::operator()(double x) const {
  const std::size_t i = segment_of(x);
  return knot_values_[i] + slopes_[i] * (x - grid_[i]);
}

double TargetSpec::sup_abs() const {
  double m = 0.0;
  for (double v : knot_values_) m = std::max(m, std::abs(v));
  return m;
}

double TargetSpec::max_abs_slope() const {
  double m = 0.0;
  for (double s : slopes_) m = std::max(m, std::abs(s));
  return m;
}

bool TargetSpec::has_distinct_consecutive_slopes() const {
  for (std::size_t i = 0; i + 1 < slopes_.size(); ++i)
    if (slopes_[i] == slopes_[i + 1]) return false;
  return true;
}

TargetSpec TargetSpec::collapsed() const {
  std::vector<double> grid{grid_.front()};
  std::vector<double> slopes{slopes_.front()};
  for (std::size_t i = 1; i < slopes_.size(); ++i) {
    if (slopes_[i] != slopes.back()) {
      grid.push_back(grid_[i]);
      slopes.push_back(slopes_[i]);
    }
  }
  grid.push_back(grid_.back());
  return TargetSpec(std::move(grid), std::move(slopes), anchor_);
}

PiecewisePoly target_as_piecewise(const TargetSpec& t) {
  std::vector<Poly> pieces;
  pieces.reserve(t.pieces());
  for (std::size_t i = 0; i < t.pieces(); ++i) {
    const double s = t.slopes()[i];
    pieces.push_back(Poly::linear(t.knot_values()[i] - s * t.grid()[i], s));
  }
  return PiecewisePoly(t.grid(), std::move(pieces));
}

}  // namespace relulab

#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "relulab/piecewise.hpp"

using namespace relulab;

namespace {

PiecewisePoly random_pw(std::mt19937_64& rng, double lo, double hi, int max_deg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> nseg(1, 5), deg(0, max_deg);
  const int k = nseg(rng);
  std::vector<double> bps{lo, hi};
  for (int i = 1; i < k; ++i) bps.push_back(lo + (hi - lo) * u(rng));
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  std::vector<Poly> pieces;
  for (std::size_t i = 0; i + 1 < bps.size(); ++i) {
    std::vector<double> c(deg(rng) + 1);
    for (double& x : c) x = 4.0 * u(rng) - 2.0;
    pieces.emplace_back(std::move(c));
  }
  return {bps, pieces};
}

}  // namespace

TEST_CASE("poly basics") {
  Poly p({1.0, -2.0, 3.0, 0.0, 0.0});
  CHECK(p.degree() == 2);
  CHECK(p(2.0) == doctest::Approx(9.0));
  CHECK(Poly().is_zero());
  CHECK(Poly({0.0, 0.0}).degree() == -1);
  CHECK(p.derivative()(1.0) == doctest::Approx(4.0));
  CHECK(p.integrate(0.0, 1.0) == doctest::Approx(1.0 - 1.0 + 1.0));
  const Poly q = p * Poly::linear(0.0, 1.0);
  CHECK(q.degree() == 3);
  CHECK(q(2.0) == doctest::Approx(18.0));
}

TEST_CASE("roots and minimum") {
  const Poly p({-2.0, 0.0, 1.0});  // x^2 - 2
  const auto r = real_roots(p, -3.0, 3.0);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(min_on_interval(p, -1.0, 3.0) == doctest::Approx(-2.0));
  CHECK(min_on_interval(p, 1.0, 3.0) == doctest::Approx(-1.0));
}

TEST_CASE("integrate examples") {
  CHECK(PiecewisePoly::constant(0.0, 1.0, 1.0).integrate() == 1.0);
  CHECK(PiecewisePoly::from_poly(0.0, 1.0, Poly({0.0, 0.0, 1.0})).integrate() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const PiecewisePoly hat({0.0, 0.5, 1.0}, {Poly::linear(0.0, 1.0), Poly::linear(1.0, -1.0)});
  const double ref = oracle::quad([&](double x) { return x < 0.5 ? x : 1.0 - x; }, 0.0, 1.0, {0.5});
  CHECK(hat.integrate() == doctest::Approx(ref).epsilon(1e-14));
  CHECK(hat.integrate() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(PiecewisePoly({0.0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(PiecewisePoly({0.0, 1.0}, {Poly(), Poly()}), std::invalid_argument);
  CHECK_THROWS_AS(PiecewisePoly({1.0, 0.0}, {Poly()}), std::invalid_argument);
  CHECK_THROWS_AS(PiecewisePoly({0.0, 1.0}, {Poly(std::vector<double>(10, 1.0))}), std::length_error);
  const auto p = PiecewisePoly::constant(0.0, 1.0, 1.0);
  CHECK_THROWS_AS(p.integrate(-0.5, 1.0), std::out_of_range);
  CHECK_THROWS_AS(add(p, PiecewisePoly::constant(0.0, 2.0, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(require_positive(PiecewisePoly::from_poly(0.0, 1.0, Poly::linear(0.5, -1.0))), std::invalid_argument);
  CHECK_NOTHROW(require_positive(oracle::tent_density()));
}

TEST_CASE("right-continuous evaluation") {
  const PiecewisePoly step({0.0, 0.5, 1.0}, {Poly::constant(1.0), Poly::constant(2.0)});
  CHECK(step(0.5) == 2.0);
  CHECK(step.eval_left(0.5) == 1.0);
  CHECK(step(1.0) == 2.0);
  CHECK(step(0.0) == 1.0);
}

TEST_CASE("breakpoint merging fuses near ties") {
  const std::vector<double> a{0.0, 0.3, 1.0}, b{0.0, 0.3 + 1e-15, 0.7, 1.0};
  const auto m = merge_breakpoints(a, b);
  CHECK(m == std::vector<double>{0.0, 0.3, 0.7, 1.0});
}

TEST_CASE("target_as_piecewise") {
  SUBCASE("constant") {
    const auto pw = target_as_piecewise(TargetSpec({0.0, 1.0}, {0.0}, 3.0));
    for (double x : {0.0, 0.3, 1.0}) CHECK(pw(x) == 3.0);
  }
  SUBCASE("abs") {
    const auto t = oracle::abs_target();
    const auto pw = target_as_piecewise(t);
    for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      CHECK(pw(x) == doctest::Approx(std::abs(x - 0.5)).epsilon(1e-15));
      CHECK(pw(x) == doctest::Approx(oracle::target(t, x)).epsilon(1e-15));
    }
    for (std::size_t i = 0; i < pw.segment_count(); ++i) CHECK(pw.pieces()[i].coeff(1) == t.slopes()[i]);
  }
  SUBCASE("collinear") {
    const auto pw = target_as_piecewise(TargetSpec({0.0, 0.2, 0.6, 1.0}, {2.0, 2.0, 2.0}, -1.0));
    for (double x : {0.2, 0.6}) CHECK(pw(x) == pw.eval_left(x));
    CHECK(TargetSpec({0.0, 0.2, 0.6, 1.0}, {2.0, 2.0, 2.0}, -1.0).collapsed().pieces() == 1);
  }
}

TEST_CASE("property: integral is additive") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_pw(rng, -1.0, 2.0, 4), q = random_pw(rng, -1.0, 2.0, 4);
    const double lhs = add(p, q).integrate();
    const double rhs = p.integrate() + q.integrate();
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("property: integral agrees with quadrature") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_pw(rng, -1.0, 2.0, 4);
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    const double ref = oracle::quad([&](double x) { return p(x); }, lo, hi, p.breakpoints());
    const double scale = oracle::quad([&](double x) { return std::abs(p(x)); }, lo, hi, p.breakpoints());
    CHECK(std::abs(p.integrate(lo, hi) - ref) <= 1e-9 * std::max(scale, 1e-12));
  }
}

TEST_CASE("property: product matches pointwise product") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_pw(rng, 0.0, 1.0, 4), q = random_pw(rng, 0.0, 1.0, 4);
    const auto pq = mul(p, q);
    for (int k = 0; k < 20; ++k) {
      const double x = u(rng);
      CHECK(pq(x) == doctest::Approx(p(x) * q(x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: targets are continuous and (f - f)^2 integrates to zero") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(6 * u(rng));
    std::vector<double> grid{0.0};
    for (int i = 0; i < n; ++i) grid.push_back(grid.back() + 0.1 + u(rng));
    std::vector<double> slopes(n);
    for (double& a : slopes) a = s(rng);
    const TargetSpec t(grid, slopes, s(rng));
    const auto pw = target_as_piecewise(t);
    for (std::size_t i = 1; i + 1 < grid.size(); ++i)
      CHECK(std::abs(pw(grid[i]) - pw.eval_left(grid[i])) <= 1e-12 * std::max(1.0, std::abs(pw(grid[i]))));
    const auto d = sub(pw, pw);
    CHECK(mul(d, d).integrate() == 0.0);
  }
}

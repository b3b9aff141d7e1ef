#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "relulab/minima.hpp"

using namespace relulab;

namespace {

Problem abs_problem(std::size_t h = 2) { return Problem(oracle::abs_target(), oracle::unit_density(), h); }

std::vector<double> unit(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> d(n);
  for (double& x : d) x = nd(rng);
  const double s = oracle::norm(d);
  for (double& x : d) x /= s;
  return d;
}

}  // namespace

TEST_CASE("witness for |x - 1/2|") {
  const auto p = abs_problem();
  const auto th = witness(p);
  CHECK(th.w(0) == -1.0);
  CHECK(th.b(0) == 2.0);
  CHECK(th.v(0) == 1.0);
  CHECK(th.w(1) == 1.0);
  CHECK(th.b(1) == -0.5);
  CHECK(th.v(1) == 2.0);
  CHECK(th.c() == doctest::Approx(-1.5));
  CHECK(risk(p, th) == 0.0);
  CHECK(oracle::norm(generalized_gradient(p, th)) == 0.0);
  CHECK(th.max_abs() < box_bound(p));
  CHECK(in_region_V(th, 0.0, 1.0));
}

TEST_CASE("witness preconditions") {
  CHECK_THROWS_AS(witness(abs_problem(3)), std::invalid_argument);
  const Problem rep(TargetSpec({0.0, 0.5, 1.0}, {1.0, 1.0}, 0.0), oracle::unit_density(), 2);
  CHECK_THROWS_AS(witness(rep), std::invalid_argument);
  // alpha_1 = 0 on a domain reaching below -1
  const Problem flat(TargetSpec({-2.0, 0.0, 1.0}, {0.0, 2.0}, 1.0), PiecewisePoly::constant(-2.0, 1.0, 1.0), 2);
  const auto th = witness(flat);
  CHECK(th.v(0) == 0.0);
  CHECK(th.w(0) * -2.0 + th.b(0) > 0.0);
  CHECK(risk(flat, th) <= 1e-20);
}

TEST_CASE("property: witness stays in the box") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + k % 5;
    std::vector<double> grid{-1.0 + u(rng)};
    for (std::size_t i = 0; i < n; ++i) grid.push_back(grid.back() + 0.1 + u(rng));
    std::vector<double> slopes(n);
    for (double& a : slopes) a = s(rng);
    const Problem p(TargetSpec(grid, slopes, s(rng)), PiecewisePoly::constant(grid.front(), grid.back(), 1.0), n);
    const auto th = witness(p);
    CHECK(th.max_abs() < box_bound(p));
    CHECK(risk(p, th) <= 1e-18);
  }
}

TEST_CASE("constants") {
  CHECK(box_bound(abs_problem()) == 7.5);
  const Problem zero(TargetSpec({0.0, 1.0}, {0.0}, 0.0), oracle::unit_density(), 1);
  CHECK(box_bound(zero) == 3.0);
  CHECK(gamma_threshold(zero) == doctest::Approx(1.0 / 163296.0).epsilon(1e-15));
  const Problem twice(zero.target(), zero.density() * 2.0, 1);
  CHECK(gamma_threshold(twice) == doctest::Approx(gamma_threshold(zero) / 2.0).epsilon(1e-15));
  CHECK(gamma_threshold(abs_problem()) > 0.0);
  CHECK(gamma_threshold(abs_problem()) * hessian_lambda_bound(abs_problem()) == doctest::Approx(1.0));
}

TEST_CASE("pad_width") {
  const auto p = abs_problem();
  const auto th = pad_width(witness(p), 4, 0.0);
  CHECK(th.width() == 4);
  CHECK(risk(abs_problem(4), th) == 0.0);
  CHECK(in_region_V(th, 0.0, 1.0));
  for (int i = 0; i < 100; ++i) {
    const double x = i / 99.0;
    CHECK(realization(th, x) == realization(witness(p), x));
  }
  CHECK_THROWS_AS(pad_width(th, 4, 0.0), std::invalid_argument);
}

TEST_CASE("chart round trip and invariants") {
  const auto p = abs_problem();
  const auto th = witness(p);
  CHECK(chart_to_params(p, chart_of(th)) == th);

  std::mt19937_64 rng(52);
  for (int k = 0; k < 50; ++k) {
    const auto c = sample_chart(p, rng);
    CHECK_NOTHROW(validate_chart(p, c));
    auto pt = chart_to_params(p, c);
    CHECK(risk(p, pt) <= 1e-18);
    pt.v(1) += 1e-3;
    CHECK(risk(p, pt) > 0.0);
  }
  CHECK_THROWS_AS(validate_chart(p, {{-1.0, 2.0, 0.4}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_chart(p, {{-1.0, 0.5, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_chart(p, {{1.0, 2.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_chart(p, {{-1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("distance to the manifold") {
  const auto p = abs_problem();
  std::mt19937_64 rng(53);
  for (int k = 0; k < 10; ++k) {
    const auto on = chart_to_params(p, sample_chart(p, rng));
    const auto d0 = distance_to_manifold(p, on);
    CHECK(d0.distance <= 1e-9);
    CHECK(distance(d0.foot, on) <= 1e-9);
    CHECK(risk(p, d0.foot) <= 1e-18);

    ParamVec off = on;
    const auto u = unit(rng, on.dim());
    for (std::size_t i = 0; i < on.dim(); ++i) off[i] += 1e-3 * u[i];
    const auto d1 = distance_to_manifold(p, off);
    CHECK(d1.distance >= 0.0);
    CHECK(d1.distance <= 1e-3 * (1.0 + 1e-9));
  }
}

TEST_CASE("property: distance is 1-Lipschitz") {
  const auto p = abs_problem();
  std::mt19937_64 rng(54);
  std::uniform_real_distribution<double> s(0.0, 0.05);
  for (int k = 0; k < 100; ++k) {
    const auto base = chart_to_params(p, sample_chart(p, rng));
    ParamVec x = base, y = base;
    const auto u1 = unit(rng, base.dim()), u2 = unit(rng, base.dim());
    const double s1 = s(rng), s2 = s(rng);
    for (std::size_t i = 0; i < base.dim(); ++i) {
      x[i] += s1 * u1[i];
      y[i] += s2 * u2[i];
    }
    const double dx = distance_to_manifold(p, x).distance, dy = distance_to_manifold(p, y).distance;
    CHECK(std::abs(dx - dy) <= distance(x, y) + 1e-6);
  }
}

TEST_CASE("distance with extra neurons") {
  const auto p = abs_problem(3);
  auto th = pad_width(witness(abs_problem()), 3, 0.0);
  CHECK(distance_to_manifold(p, th).distance <= 1e-9);
  th.v(2) = 0.01;  // neuron 3 stays inactive, so the output weight is irrelevant
  CHECK(distance_to_manifold(p, th).distance <= 1e-9);
  th.b(2) = 0.5;  // now active on [0, 1/2)
  const double d = distance_to_manifold(p, th).distance;
  CHECK(d > 0.0);
  CHECK(d <= 0.01 + 1e-9);
  CHECK_THROWS_AS(distance_to_manifold(Problem(oracle::four_piece(), oracle::unit_density(), 2), ParamVec(2)),
                  std::invalid_argument);
}

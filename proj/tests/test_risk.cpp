#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "relulab/minima.hpp"
#include "relulab/risk.hpp"

using namespace relulab;

namespace {

std::vector<Problem> problems(std::size_t width) {
  return {Problem(oracle::abs_target(), oracle::unit_density(), width),
          Problem(oracle::four_piece(), oracle::tent_density(), width)};
}

std::vector<double> fd_risk_gradient(const Problem& p, const ParamVec& th) {
  return oracle::fd_gradient([&](const std::vector<double>& x) { return risk(p, ParamVec(th.width(), x)); },
                             {th.values().begin(), th.values().end()});
}

}  // namespace

TEST_CASE("risk examples") {
  const Problem p(oracle::abs_target(), oracle::unit_density(), 2);
  CHECK(risk(p, witness(p)) <= 1e-20);
  const Problem three(TargetSpec({0.0, 1.0}, {0.0}, 3.0), oracle::unit_density(), 2);
  CHECK(risk(three, ParamVec(2)) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK_THROWS_AS(risk(p, ParamVec(3)), std::invalid_argument);
}

TEST_CASE("risk matches quadrature") {
  std::mt19937_64 rng(31);
  for (std::size_t h : {1, 2, 4})
    for (const auto& p : problems(h))
      for (int k = 0; k < 30; ++k) {
        const auto th = oracle::regular_theta(h, p.a(), p.b(), rng);
        const double ref = oracle::risk(p, th);
        CHECK(std::abs(risk(p, th) - ref) <= 1e-9 * ref);
        RiskEvaluator ev(p);
        CHECK(std::abs(ev.risk(th.values()) - ref) <= 1e-9 * ref);
      }
}

TEST_CASE("gradient examples") {
  const Problem p(oracle::abs_target(), oracle::unit_density(), 2);
  CHECK(oracle::norm(generalized_gradient(p, witness(p))) <= 1e-10);

  std::mt19937_64 rng(32);
  auto th = oracle::regular_theta(3, 0.0, 1.0, rng);
  for (std::size_t j = 0; j < 3; ++j) th.v(j) = 0.0;
  const auto g = generalized_gradient(p.with_width(3), th);
  for (std::size_t i = 0; i < 6; ++i) CHECK(g[i] == 0.0);
  CHECK(g[9] != 0.0);
}

TEST_CASE("property: gradient equals finite differences on V") {
  std::mt19937_64 rng(33);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = std::vector<std::size_t>{1, 2, 4}[k % 3];
    const auto p = problems(h)[k % 2];
    const auto th = oracle::regular_theta(h, p.a(), p.b(), rng);
    const auto g = generalized_gradient(p, th);
    worst = std::max(worst, oracle::rel_err(g, fd_risk_gradient(p, th)));
    std::vector<double> g2(th.dim());
    RiskEvaluator ev(p);
    ev.risk_and_gradient(th.values(), g2);
    CHECK(oracle::rel_err(g2, g) <= 1e-12);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("smoothed risk examples") {
  const Problem p(oracle::four_piece(), oracle::tent_density(), 2);
  const auto f = target_as_piecewise(p.target());
  const double ff = mul(mul(f, f), p.density()).integrate();
  CHECK(smoothed_risk(p, ParamVec(2), 8.0) == doctest::Approx(ff).epsilon(1e-13));

  // kinks far outside the domain: chi_r coincides with ReLU on every preactivation
  const ParamVec far(2, {1.0, -1.0, 3.0, -4.0, 0.7, -1.3, 0.2});
  for (double r : {4.0, 64.0}) {
    CHECK(smoothed_risk(p, far, r) == doctest::Approx(risk(p, far)).epsilon(1e-13));
    CHECK(oracle::rel_err(smoothed_gradient(p, far, r), generalized_gradient(p, far)) <= 1e-12);
  }
  CHECK_THROWS_AS(smoothed_risk(p, far, 0.0), std::invalid_argument);
}

TEST_CASE("smoothed relu") {
  for (double r : {1.0, 16.0, 1024.0}) {
    CHECK(smoothed_relu(-0.1, r) == 0.0);
    CHECK(smoothed_relu(2.0 / r, r) == doctest::Approx(2.0 / r));
    CHECK(smoothed_relu_derivative(0.0, r) == 0.0);
    CHECK(smoothed_relu_derivative(1.0 / r, r) == doctest::Approx(1.0));
    CHECK(std::abs(smoothed_relu(0.5 / r, r) - 0.5 / r) <= 1.0 / r);
  }
}

TEST_CASE("smoothed gradient matches finite differences") {
  std::mt19937_64 rng(34);
  for (int k = 0; k < 20; ++k) {
    const auto p = problems(3)[k % 2];
    const auto th = oracle::regular_theta(3, p.a(), p.b(), rng);
    const double r = 16.0;
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& x) { return smoothed_risk(p, ParamVec(3, x), r); },
        {th.values().begin(), th.values().end()});
    CHECK(oracle::rel_err(smoothed_gradient(p, th, r), fd) < 1e-6);
  }
}

TEST_CASE("smoothing limit") {
  std::mt19937_64 rng(35);
  for (int k = 0; k < 10; ++k) {
    const auto p = problems(2)[k % 2];
    const auto th = oracle::regular_theta(2, p.a(), p.b(), rng, 0.01);
    const double L = risk(p, th);
    const auto G = generalized_gradient(p, th);
    double C = 0.0, prev = INFINITY;
    for (int e = 4; e <= 20; e += 2) {
      const double r = std::ldexp(1.0, e);
      C = std::max(C, std::abs(smoothed_risk(p, th, r) - L) * r);
      if (e >= 8) {
        std::vector<double> d = smoothed_gradient(p, th, r);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= G[i];
        const double n = oracle::norm(d);
        CHECK(n <= prev);
        prev = n;
      }
    }
    CHECK(std::abs(smoothed_risk(p, th, std::ldexp(1.0, 20)) - L) <= C / std::ldexp(1.0, 20));
    CHECK(prev < 1e-8);
  }
}

TEST_CASE("property: risk vanishes exactly when the fit is exact") {
  std::mt19937_64 rng(36);
  const Problem p(oracle::abs_target(), oracle::unit_density(), 2);
  const auto wit = witness(p);
  auto sup_err = [&](const ParamVec& th) {
    double s = 0.0;
    const auto& g = p.target().grid();
    const int per = 10 * static_cast<int>(p.width() + p.target().pieces());
    for (std::size_t i = 0; i + 1 < g.size(); ++i)
      for (int k = 0; k <= per; ++k) {
        const double x = g[i] + (g[i + 1] - g[i]) * k / per;
        s = std::max(s, std::abs(oracle::net(th, x) - oracle::target(p.target(), x)));
      }
    return s;
  };
  CHECK(risk(p, wit) == doctest::Approx(0.0));
  CHECK(sup_err(wit) <= 1e-9);
  for (int k = 0; k < 50; ++k) {
    const auto th = oracle::regular_theta(2, 0.0, 1.0, rng);
    const double L = risk(p, th);
    CHECK(L >= 0.0);
    CHECK((L == 0.0) == (sup_err(th) <= 1e-9));
  }
}

TEST_CASE("property: realization bound") {
  std::mt19937_64 rng(37);
  for (int k = 0; k < 100; ++k) {
    const double a = -1.5, b = 0.7;
    const auto th = oracle::regular_theta(1 + k % 4, a, b, rng);
    const double bound = realization_bound(th, a, b);
    for (int i = 0; i <= 400; ++i) CHECK(std::abs(oracle::net(th, a + (b - a) * i / 400)) <= bound);
  }
}

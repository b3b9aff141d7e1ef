#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "relulab/network.hpp"
#include "relulab/risk.hpp"

namespace relulab {

/// Free coordinates (w_1, b_1, w_2, ..., w_h) of the zero-risk manifold for a
/// problem with h = N and distinct consecutive slopes. The remaining
/// coordinates follow from
///   v_1 = alpha_1 / w_1,  c = f(a) - v_1 (w_1 a + b_1),
///   b_j = -w_j x_{j-1},   v_j = (alpha_j - alpha_{j-1}) / w_j   (j >= 2).
struct ManifoldChart {
  std::vector<double> free;
};

/// Box radius B = 1 + |f(a)| + (1 + 2 max_j |alpha_j|)(1 + |a| + |b|).
double box_bound(const Problem& p);

/// Largest step size covered by the local GD convergence guarantee:
/// ((3N + 1)(24 B^5 + 16 N B^7) sup rho)^{-1}.
double gamma_threshold(const Problem& p);

/// (3N + 1)(24 B^5 + 16 N B^7) sup rho, the bound on Lambda(Hess L) near the
/// manifold.
double hessian_lambda_bound(const Problem& p);

/// Explicit zero-risk parameter. Requires width == N and distinct consecutive
/// slopes.
ParamVec witness(const Problem& p);

/// Appends neurons with w = -1, b = a - 1, v = 0, which are inactive on [a, b].
ParamVec pad_width(const ParamVec& theta, std::size_t target_width, double a);

ParamVec chart_to_params(const Problem& p, const ManifoldChart& chart);
/// Reads (w_1, b_1, w_2, ..., w_h) off a parameter vector; no validation.
ManifoldChart chart_of(const ParamVec& theta);
/// Throws std::invalid_argument naming the first violated chart invariant.
void validate_chart(const Problem& p, const ManifoldChart& chart);
ManifoldChart sample_chart(const Problem& p, std::mt19937_64& rng);

struct ManifoldDistance {
  double distance;
  ParamVec foot;
};

struct DistanceOptions {
  std::size_t restarts = 8;
  double diameter_tol = 1e-10;
  std::uint64_t seed = 0x5eed;
};

/// Numerical distance to the zero-risk manifold. The first N neurons are
/// matched against the chart by Nelder-Mead over the free coordinates; extra
/// neurons (width > N) are measured in closed form against the set where
/// they are inactive on [a, b] or carry zero output weight.
ManifoldDistance distance_to_manifold(const Problem& p, const ParamVec& theta, const DistanceOptions& opts = {});

}  // namespace relulab

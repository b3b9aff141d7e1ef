#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace relulab {

struct NelderMeadOptions {
  double initial_step = 0.05;   // relative to max(1, |x_i|)
  double diameter_tol = 1e-10;  // stop when the simplex is this small
  std::size_t max_evaluations = 20000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value;
  std::size_t evaluations;
  bool converged;
};

/// Derivative-free minimization. The objective may return +inf to reject
/// infeasible points.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opts = {});

}  // namespace relulab

#include "relulab/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace relulab {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("nelder_mead: empty start point");

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += opts.initial_step * std::max(1.0, std::abs(x0[i]));
  std::vector<double> values(n + 1);
  std::size_t evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? INFINITY : v;
  };
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  bool converged = false;

  auto point_along = [&](double t, std::vector<double>& out, const std::vector<double>& worst) {
    for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + t * (worst[k] - centroid[k]);
  };

  while (evals < opts.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    double diameter = 0.0;
    const auto& best = simplex[order[0]];
    for (std::size_t i = 1; i <= n; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < n; ++k) d2 += (simplex[order[i]][k] - best[k]) * (simplex[order[i]][k] - best[k]);
      diameter = std::max(diameter, std::sqrt(d2));
    }
    if (diameter < opts.diameter_tol) {
      converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[order[i]][k] / static_cast<double>(n);

    const std::size_t w = order[n];
    const double f_best = values[order[0]], f_second = values[order[n - 1]], f_worst = values[w];

    point_along(-1.0, trial, simplex[w]);
    const double f_r = eval(trial);
    if (f_r < f_best) {
      point_along(-2.0, trial2, simplex[w]);
      const double f_e = eval(trial2);
      if (f_e < f_r) {
        simplex[w] = trial2;
        values[w] = f_e;
      } else {
        simplex[w] = trial;
        values[w] = f_r;
      }
      continue;
    }
    if (f_r < f_second) {
      simplex[w] = trial;
      values[w] = f_r;
      continue;
    }
    // contraction, outside or inside
    const bool outside = f_r < f_worst;
    point_along(outside ? -0.5 : 0.5, trial2, simplex[w]);
    const double f_c = eval(trial2);
    if (f_c < (outside ? f_r : f_worst)) {
      simplex[w] = trial2;
      values[w] = f_c;
      continue;
    }
    // shrink towards the best vertex
    const std::vector<double> anchor = simplex[order[0]];
    for (std::size_t i = 1; i <= n; ++i) {
      auto& x = simplex[order[i]];
      for (std::size_t k = 0; k < n; ++k) x[k] = anchor[k] + 0.5 * (x[k] - anchor[k]);
      values[order[i]] = eval(x);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  const std::size_t bi = static_cast<std::size_t>(best_it - values.begin());
  return {simplex[bi], values[bi], evals, converged};
}

}  // namespace relulab

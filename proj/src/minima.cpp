#include "relulab/minima.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "relulab/nelder_mead.hpp"

namespace relulab {

double box_bound(const Problem& p) {
  const TargetSpec& t = p.target();
  return 1.0 + std::abs(t.anchor()) + (1.0 + 2.0 * t.max_abs_slope()) * (1.0 + std::abs(p.a()) + std::abs(p.b()));
}

double hessian_lambda_bound(const Problem& p) {
  const double B = box_bound(p);
  const double n = static_cast<double>(p.target().pieces());
  const double B5 = std::pow(B, 5.0);
  return (3.0 * n + 1.0) * (24.0 * B5 + 16.0 * n * B5 * B * B) * p.sup_density();
}

double gamma_threshold(const Problem& p) { return 1.0 / hessian_lambda_bound(p); }

namespace {

void require_chartable(const Problem& p) {
  if (!p.target().has_distinct_consecutive_slopes())
    throw std::invalid_argument("repeated consecutive slopes: collapse the target first");
  if (p.width() != p.target().pieces())
    throw std::invalid_argument("width " + std::to_string(p.width()) + " must equal the number of target pieces " +
                                std::to_string(p.target().pieces()));
}

}  // namespace

ParamVec witness(const Problem& p) {
  require_chartable(p);
  const TargetSpec& t = p.target();
  const std::size_t h = p.width();
  const double a = p.a(), b = p.b();
  const auto& alpha = t.slopes();
  ParamVec theta(h);
  if (alpha[0] != 0.0) {
    theta.w(0) = alpha[0];
    theta.b(0) = std::abs(alpha[0]) * (std::abs(a) + std::abs(b)) + 1.0;
    theta.v(0) = 1.0;
  } else {
    // weightless but active on all of [a, b]
    theta.w(0) = 1.0;
    theta.b(0) = std::abs(a) + std::abs(b) + 1.0;
    theta.v(0) = 0.0;
  }
  for (std::size_t i = 1; i < h; ++i) {
    theta.w(i) = 1.0;
    theta.b(i) = -t.grid()[i];
    theta.v(i) = alpha[i] - alpha[i - 1];
  }
  theta.c() = t.anchor() - theta.v(0) * (theta.w(0) * a + theta.b(0));
  return theta;
}

ParamVec pad_width(const ParamVec& theta, std::size_t target_width, double a) {
  const std::size_t h = theta.width();
  if (target_width <= h) throw std::invalid_argument("pad_width: target width must exceed current width");
  ParamVec out(target_width);
  for (std::size_t j = 0; j < target_width; ++j) {
    if (j < h) {
      out.w(j) = theta.w(j);
      out.b(j) = theta.b(j);
      out.v(j) = theta.v(j);
    } else {
      out.w(j) = -1.0;
      out.b(j) = a - 1.0;
      out.v(j) = 0.0;
    }
  }
  out.c() = theta.c();
  return out;
}

ManifoldChart chart_of(const ParamVec& theta) {
  ManifoldChart c;
  c.free.push_back(theta.w(0));
  c.free.push_back(theta.b(0));
  for (std::size_t j = 1; j < theta.width(); ++j) c.free.push_back(theta.w(j));
  return c;
}

void validate_chart(const Problem& p, const ManifoldChart& chart) {
  require_chartable(p);
  const std::size_t h = p.width();
  if (chart.free.size() != h + 1)
    throw std::invalid_argument("chart: expected " + std::to_string(h + 1) + " free coordinates");
  for (double z : chart.free)
    if (!std::isfinite(z)) throw std::invalid_argument("chart: non-finite coordinate");
  const double w1 = chart.free[0], b1 = chart.free[1];
  const double alpha1 = p.target().slopes()[0];
  if (w1 == 0.0) throw std::invalid_argument("chart: w_1 must be nonzero");
  if (!(w1 * p.a() + b1 > 0.0) || !(w1 * p.b() + b1 > 0.0))
    throw std::invalid_argument("chart: neuron 1 must be active on all of [a, b]");
  if (alpha1 != 0.0 && !(alpha1 / w1 > 0.0)) throw std::invalid_argument("chart: v_1 = alpha_1 / w_1 must be positive");
  for (std::size_t j = 1; j < h; ++j)
    if (!(chart.free[j + 1] > 0.5))
      throw std::invalid_argument("chart: w_" + std::to_string(j + 1) + " must exceed 1/2");
}

ParamVec chart_to_params(const Problem& p, const ManifoldChart& chart) {
  validate_chart(p, chart);
  const TargetSpec& t = p.target();
  const auto& alpha = t.slopes();
  const std::size_t h = p.width();
  ParamVec theta(h);
  theta.w(0) = chart.free[0];
  theta.b(0) = chart.free[1];
  theta.v(0) = alpha[0] / theta.w(0);
  for (std::size_t j = 1; j < h; ++j) {
    const double w = chart.free[j + 1];
    theta.w(j) = w;
    theta.b(j) = -w * t.grid()[j];
    theta.v(j) = (alpha[j] - alpha[j - 1]) / w;
  }
  theta.c() = t.anchor() - theta.v(0) * (theta.w(0) * p.a() + theta.b(0));
  return theta;
}

ManifoldChart sample_chart(const Problem& p, std::mt19937_64& rng) {
  require_chartable(p);
  const double a = p.a(), b = p.b();
  const double alpha1 = p.target().slopes()[0];
  const double B = box_bound(p);
  std::uniform_real_distribution<double> scale(0.8, 1.25), margin(0.5, 1.5), w_rest(1.0, 1.5);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    ManifoldChart c;
    const double w1 = alpha1 != 0.0 ? alpha1 * scale(rng) : scale(rng);
    c.free.push_back(w1);
    c.free.push_back(-std::min(w1 * a, w1 * b) + margin(rng));
    for (std::size_t j = 1; j < p.width(); ++j) c.free.push_back(w_rest(rng));
    if (chart_to_params(p, c).max_abs() < B) return c;
  }
  throw std::runtime_error("sample_chart: could not place a chart point inside the box");
}

namespace {

// Distance from (w, bias) to {w a + bias <= 0, w b + bias <= 0}; also returns the projection.
double distance_to_inactive_cone(double w, double bias, double a, double b, double& pw, double& pb) {
  auto feasible = [&](double x, double y) { return x * a + y <= 1e-15 && x * b + y <= 1e-15; };
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double x, double y) {
    if (!feasible(x, y)) return;
    const double d = std::hypot(w - x, bias - y);
    if (d < best) {
      best = d;
      pw = x;
      pb = y;
    }
  };
  consider(w, bias);
  for (double e : {a, b}) {
    const double s = (w * e + bias) / (e * e + 1.0);
    consider(w - s * e, bias - s);
  }
  consider(0.0, 0.0);
  return best;
}

}  // namespace

ManifoldDistance distance_to_manifold(const Problem& p, const ParamVec& theta, const DistanceOptions& opts) {
  if (theta.width() != p.width()) throw std::invalid_argument("distance_to_manifold: width mismatch");
  const TargetSpec reduced_target = p.target().collapsed();
  const std::size_t n = reduced_target.pieces();
  if (p.width() < n)
    throw std::invalid_argument("distance_to_manifold: no admissible chart (width below the number of pieces)");
  const Problem reduced(reduced_target, p.density(), n);
  const double a = p.a(), b = p.b();
  const double alpha1 = reduced_target.slopes()[0];

  auto own = [&](std::size_t j, int kind) {
    return kind == 0 ? theta.w(j) : kind == 1 ? theta.b(j) : theta.v(j);
  };
  auto objective = [&](const std::vector<double>& z) {
    const ManifoldChart c{z};
    try {
      validate_chart(reduced, c);
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::infinity();
    }
    const ParamVec m = chart_to_params(reduced, c);
    double s = (m.c() - theta.c()) * (m.c() - theta.c());
    for (std::size_t j = 0; j < n; ++j) {
      s += (m.w(j) - own(j, 0)) * (m.w(j) - own(j, 0));
      s += (m.b(j) - own(j, 1)) * (m.b(j) - own(j, 1));
      s += (m.v(j) - own(j, 2)) * (m.v(j) - own(j, 2));
    }
    return s;
  };

  auto make_feasible = [&](std::vector<double> z) {
    if (z[0] == 0.0 || (alpha1 != 0.0 && !(alpha1 / z[0] > 0.0))) z[0] = alpha1 != 0.0 ? alpha1 : 1.0;
    const double need = -std::min(z[0] * a, z[0] * b);
    if (!(z[1] > need)) z[1] = need + 1e-2 * (1.0 + std::abs(need));
    for (std::size_t j = 2; j < z.size(); ++j)
      if (!(z[j] > 0.5)) z[j] = 0.5 + 1e-2;
    return z;
  };

  std::vector<double> own_start{theta.w(0), theta.b(0)};
  for (std::size_t j = 1; j < n; ++j) own_start.push_back(theta.w(j));
  own_start = make_feasible(own_start);
  std::vector<std::vector<double>> starts{own_start, chart_of(witness(reduced)).free};
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  while (starts.size() < std::max<std::size_t>(opts.restarts, 1)) {
    std::vector<double> z = own_start;
    for (double& zi : z) zi += noise(rng) * (1.0 + std::abs(zi));
    starts.push_back(make_feasible(z));
  }
  starts.resize(std::max<std::size_t>(opts.restarts, 1));

  NelderMeadOptions nm;
  nm.diameter_tol = opts.diameter_tol;
  NelderMeadResult best{{}, std::numeric_limits<double>::infinity(), 0, false};
  for (const auto& s : starts) {
    NelderMeadResult r = nelder_mead(objective, s, nm);
    // restart from the result once; plain NM can stall on a degenerate simplex
    r = nelder_mead(objective, r.x, nm);
    if (r.value < best.value) best = std::move(r);
  }
  if (!std::isfinite(best.value)) throw std::runtime_error("distance_to_manifold: no feasible chart point found");

  const ParamVec m = chart_to_params(reduced, ManifoldChart{best.x});
  ParamVec foot(p.width());
  for (std::size_t j = 0; j < n; ++j) {
    foot.w(j) = m.w(j);
    foot.b(j) = m.b(j);
    foot.v(j) = m.v(j);
  }
  foot.c() = m.c();
  double d2 = best.value;
  for (std::size_t j = n; j < p.width(); ++j) {
    double pw = theta.w(j), pb = theta.b(j);
    const double cone = distance_to_inactive_cone(theta.w(j), theta.b(j), a, b, pw, pb);
    const double dv = std::abs(theta.v(j));
    foot.w(j) = theta.w(j);
    foot.b(j) = theta.b(j);
    foot.v(j) = theta.v(j);
    if (dv <= cone) {
      foot.v(j) = 0.0;
      d2 += dv * dv;
    } else {
      foot.w(j) = pw;
      foot.b(j) = pb;
      d2 += cone * cone;
    }
  }
  return {std::sqrt(std::max(d2, 0.0)), foot};
}

}  // namespace relulab

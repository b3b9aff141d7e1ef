#include "relulab/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "relulab/minima.hpp"

namespace relulab {

void validate(const GDConfig& cfg) {
  if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma)) throw std::invalid_argument("gamma must be a positive number");
  if (!(cfg.rho_exp >= 0.0 && cfg.rho_exp < 1.0)) throw std::invalid_argument("rho_exp must lie in [0, 1)");
}

namespace {

bool finite_all(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

std::optional<double> maybe_distance(const Problem& p, std::span<const double> theta, std::size_t n,
                                     std::size_t stride) {
  if (stride == 0 || n % stride != 0) return std::nullopt;
  const ParamVec x(p.width(), std::vector<double>(theta.begin(), theta.end()));
  return distance_to_manifold(p, x).distance;
}

void maybe_snapshot(TrajectoryRecord& rec, const Problem& p, std::span<const double> theta, std::size_t n,
                    std::size_t stride) {
  if (stride == 0 || n % stride != 0) return;
  rec.snapshot_steps.push_back(n);
  rec.snapshots.emplace_back(p.width(), std::vector<double>(theta.begin(), theta.end()));
}

}  // namespace

TrajectoryRecord gd_run(const Problem& p, const ParamVec& theta0, const GDConfig& cfg) {
  validate(cfg);
  if (theta0.width() != p.width()) throw std::invalid_argument("gd_run: width mismatch");
  RiskEvaluator ev(p);
  std::vector<double> theta(theta0.values().begin(), theta0.values().end());
  std::vector<double> grad(theta.size());
  TrajectoryRecord rec;
  rec.rows.reserve(cfg.steps + 1);

  double t = 0.0;
  double L = finite_all(theta) ? ev.risk_and_gradient(theta, grad) : std::numeric_limits<double>::quiet_NaN();
  if (!(L <= kDivergenceRisk)) {
    rec.status = RunStatus::diverged;
    rec.diverged_at = 0;
    rec.final_state = theta;
    return rec;
  }
  rec.rows.push_back({0, 0.0, L, maybe_distance(p, theta, 0, cfg.dist_stride)});
  maybe_snapshot(rec, p, theta, 0, cfg.snapshot_stride);

  std::vector<double> prev(theta.size());
  for (std::size_t n = 1; n <= cfg.steps; ++n) {
    const double step = cfg.rho_exp == 0.0 ? cfg.gamma : cfg.gamma / std::pow(static_cast<double>(n), cfg.rho_exp);
    prev = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= step * grad[i];
    t += step;
    L = finite_all(theta) ? ev.risk_and_gradient(theta, grad) : std::numeric_limits<double>::quiet_NaN();
    if (!(L <= kDivergenceRisk)) {
      rec.status = RunStatus::diverged;
      rec.diverged_at = n;
      theta = prev;  // keep the last good state
      break;
    }
    rec.rows.push_back({n, t, L, maybe_distance(p, theta, n, cfg.dist_stride)});
    maybe_snapshot(rec, p, theta, n, cfg.snapshot_stride);
  }
  rec.final_state = theta;
  return rec;
}

TrajectoryRecord gf_run(const Problem& p, const ParamVec& theta0, double t_max, double dt, std::size_t snapshot_stride,
                        std::size_t dist_stride) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("gf_run: dt must be positive");
  if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("gf_run: t_max must be nonnegative");
  if (theta0.width() != p.width()) throw std::invalid_argument("gf_run: width mismatch");
  const auto steps = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
  const std::size_t d = theta0.dim();
  RiskEvaluator ev(p);
  std::vector<double> y(theta0.values().begin(), theta0.values().end());
  std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
  TrajectoryRecord rec;
  rec.rows.reserve(steps + 1);

  double L = finite_all(y) ? ev.risk_and_gradient(y, k1) : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t n = 0;; ++n) {
    if (!(L <= kDivergenceRisk)) {
      rec.status = RunStatus::diverged;
      rec.diverged_at = n;
      break;
    }
    rec.rows.push_back({n, static_cast<double>(n) * dt, L, maybe_distance(p, y, n, dist_stride)});
    maybe_snapshot(rec, p, y, n, snapshot_stride);
    if (n == steps) break;
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] - 0.5 * dt * k1[i];
    ev.risk_and_gradient(tmp, k2);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] - 0.5 * dt * k2[i];
    ev.risk_and_gradient(tmp, k3);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] - dt * k3[i];
    ev.risk_and_gradient(tmp, k4);
    for (std::size_t i = 0; i < d; ++i) y[i] -= dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    L = finite_all(y) ? ev.risk_and_gradient(y, k1) : std::numeric_limits<double>::quiet_NaN();
  }
  rec.final_state = y;
  return rec;
}

// ---------------------------------------------------------------- restarts

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t restart_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

ParamVec standard_normal_init(std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVec theta(width);
  for (double& x : theta.values()) x = normal(rng);
  return theta;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RELULAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return n;
}

std::optional<std::size_t> MultiStartResult::first_below(double threshold) const {
  for (std::size_t n = 0; n < selected_risk.size(); ++n)
    if (selected_risk[n] < threshold) return n;
  return std::nullopt;
}

MultiStartResult multistart_run(const Problem& p, std::size_t K, const GDConfig& cfg) {
  validate(cfg);
  if (K == 0) throw std::invalid_argument("multistart_run: K must be at least 1");
  MultiStartResult out;
  out.K = K;
  out.initial.reserve(K);
  for (std::size_t l = 0; l < K; ++l) out.initial.push_back(standard_normal_init(p.width(), restart_seed(cfg.seed, l)));
  out.runs.resize(K);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t l; (l = next.fetch_add(1)) < K;) out.runs[l] = gd_run(p, out.initial[l], cfg);
  };
  const std::size_t workers = std::min(worker_count(), K);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  out.selected.resize(cfg.steps + 1);
  out.selected_risk.resize(cfg.steps + 1);
  for (std::size_t n = 0; n <= cfg.steps; ++n) {
    std::size_t best = 0;
    double best_risk = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < K; ++l) {
      const auto& rows = out.runs[l].rows;
      const double r = n < rows.size() ? rows[n].risk : std::numeric_limits<double>::infinity();
      if (r < best_risk) {
        best_risk = r;
        best = l;
      }
    }
    out.selected[n] = best;
    out.selected_risk[n] = best_risk;
  }
  return out;
}

// ---------------------------------------------------------------- rates

RateFit fit_rate(std::span<const double> n, std::span<const double> y, double rho_exp, double scale) {
  if (n.size() != y.size()) throw std::invalid_argument("fit_rate: column length mismatch");
  if (!(rho_exp >= 0.0 && rho_exp < 1.0)) throw std::invalid_argument("fit_rate: rho must lie in [0, 1)");
  if (!(scale > 0.0)) throw std::invalid_argument("fit_rate: scale must be positive");
  std::vector<double> xs, ls;
  bool all_zero = !y.empty();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0) all_zero = false;
    if (!(y[i] > 1e-300) || !std::isfinite(y[i])) continue;
    xs.push_back(scale * std::pow(n[i], 1.0 - rho_exp));
    ls.push_back(std::log(y[i]));
  }
  RateFit fit;
  fit.rows_used = xs.size();
  if (all_zero) {
    fit.exact_convergence = true;
    fit.c_fit = std::numeric_limits<double>::infinity();
    fit.C_fit = 0.0;
    fit.r2 = 1.0;
    return fit;
  }
  if (xs.size() < 10)
    throw std::invalid_argument("fit_rate: need at least 10 rows with positive values, got " + std::to_string(xs.size()));
  const double m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ls[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ls[i] - my);
    syy += (ls[i] - my) * (ls[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: abscissa has no spread");
  const double slope = sxy / sxx;
  fit.c_fit = -slope;
  fit.C_fit = std::exp(my - slope * mx);
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

RateFit fit_rate(const TrajectoryRecord& rec, double rho_exp, double scale, RateColumn column) {
  std::vector<double> n, y;
  for (const auto& row : rec.rows) {
    if (column == RateColumn::dist) {
      if (!row.dist) continue;
      y.push_back(*row.dist);
    } else {
      y.push_back(row.risk);
    }
    n.push_back(static_cast<double>(row.n));
  }
  return fit_rate(n, y, rho_exp, scale);
}

// ---------------------------------------------------------------- Lemma sum

SumEstimate sum_estimate(double rho, double c, double gamma, double tail_tol) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("sum_estimate: rho must lie in [0, 1)");
  if (!(c > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("sum_estimate: c and gamma must be positive");
  const double cg = c * gamma;
  auto term = [&](double k) { return gamma * std::pow(k, -rho) * std::exp(-cg * std::pow(k - 1.0, 1.0 - rho)); };
  auto term_derivative = [&](double k) {
    return term(k) * (-rho / k - cg * (1.0 - rho) * std::pow(k - 1.0, -rho));
  };

  // Neumaier summation of the direct part
  double sum = 0.0, comp = 0.0;
  std::size_t summed = 0;  // terms k = 1..summed are in `sum`
  auto extend_to = [&](std::size_t last) {
    for (std::size_t k = summed + 1; k <= last; ++k) {
      const double x = term(static_cast<double>(k));
      const double s = sum + x;
      comp += std::abs(sum) >= std::abs(x) ? (sum - s) + x : (x - s) + sum;
      sum = s;
    }
    summed = last;
  };

  constexpr std::size_t kMaxCutoff = std::size_t{1} << 28;
  std::size_t K = 1024;
  double err = std::abs(term_derivative(static_cast<double>(K))) / 12.0;
  while (!(err < tail_tol)) {
    K *= 4;
    if (K > kMaxCutoff)
      throw std::runtime_error("sum_estimate: tail did not converge below cutoff " + std::to_string(kMaxCutoff));
    err = std::abs(term_derivative(static_cast<double>(K))) / 12.0;
  }
  extend_to(K - 1);

  // int_K^inf f(x) dx with u = c gamma (x - 1)^{1 - rho}
  const double inv = 1.0 / (1.0 - rho);
  const double log_cg = std::log(cg);
  auto integrand = [&](double u) {
    if (!(u > 0.0)) return 0.0;
    const double log_s = (std::log(u) - log_cg) * inv;
    const double log1p_s = log_s > 0.0 ? log_s + std::log1p(std::exp(-log_s)) : std::log1p(std::exp(log_s));
    const double lg = std::log(gamma) - rho * log1p_s + log_s - std::log(1.0 - rho) - std::log(u) - u;
    return std::exp(lg);
  };
  const double uK = cg * std::pow(static_cast<double>(K) - 1.0, 1.0 - rho);
  boost::math::quadrature::exp_sinh<double> integrator;
  const double tail_integral = integrator.integrate(integrand, uK, std::numeric_limits<double>::infinity());
  const double fK = term(static_cast<double>(K));
  const double tail = tail_integral + 0.5 * fK - term_derivative(static_cast<double>(K)) / 12.0;
  return {sum + comp + tail, err, K - 1};
}

double sum_estimate_check(double rho, double c, double g, std::span<const double> gamma_grid) {
  if (!(g > 0.0)) throw std::invalid_argument("sum_estimate_check: g must be positive");
  if (gamma_grid.empty()) throw std::invalid_argument("sum_estimate_check: empty grid");
  double best = 0.0;
  for (double gamma : gamma_grid) {
    if (!(gamma > 0.0 && gamma <= g)) throw std::invalid_argument("sum_estimate_check: grid point outside (0, g]");
    const double v = sum_estimate(rho, c, gamma).value;
    if (!std::isfinite(v)) throw std::runtime_error("sum_estimate_check: non-finite sum");
    best = std::max(best, v);
  }
  return best;
}

}  // namespace relulab

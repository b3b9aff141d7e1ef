#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "relulab/network.hpp"
#include "relulab/risk.hpp"

namespace relulab {

struct GDConfig {
  double gamma = 0.0;
  double rho_exp = 0.0;  // step n uses gamma / n^rho_exp
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::size_t dist_stride = 0;      // 0: no distance column
  std::size_t snapshot_stride = 0;  // 0: keep only the final state
};

/// Throws std::invalid_argument unless gamma > 0 and 0 <= rho_exp < 1.
void validate(const GDConfig& cfg);

enum class RunStatus { completed, diverged };

struct TrajectoryRow {
  std::size_t n;
  double t;  // elapsed time: sum of step sizes for GD, n dt for GF
  double risk;
  std::optional<double> dist;
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  RunStatus status = RunStatus::completed;
  std::optional<std::size_t> diverged_at;  // step whose state was non-finite or blew up
  std::vector<double> final_state;
  std::vector<std::size_t> snapshot_steps;
  std::vector<ParamVec> snapshots;
};

/// Risk above which a run is treated as divergent and truncated.
inline constexpr double kDivergenceRisk = 1e12;

/// Theta_n = Theta_{n-1} - gamma / n^rho G(Theta_{n-1}), n = 1..steps. Row n
/// holds L(Theta_n); row 0 is the initial state.
TrajectoryRecord gd_run(const Problem& p, const ParamVec& theta0, const GDConfig& cfg);

/// Classical RK4 for dTheta/dt = -G(Theta) with fixed dt up to t_max.
/// `snapshot_stride` and `dist_stride` count RK4 steps.
TrajectoryRecord gf_run(const Problem& p, const ParamVec& theta0, double t_max, double dt,
                        std::size_t snapshot_stride = 0, std::size_t dist_stride = 0);

/// Seed of restart `index`; independent of the number of restarts.
std::uint64_t restart_seed(std::uint64_t base, std::uint64_t index);
/// Standard normal draw over all 3h + 1 coordinates.
ParamVec standard_normal_init(std::size_t width, std::uint64_t seed);

struct MultiStartResult {
  std::size_t K = 0;
  std::vector<ParamVec> initial;
  std::vector<TrajectoryRecord> runs;
  /// Zero-based argmin over restarts of L(Theta_n), ties to the lowest index.
  /// Truncated runs count as +inf after divergence.
  std::vector<std::size_t> selected;
  std::vector<double> selected_risk;

  /// First step at which the selected risk is below `threshold`.
  std::optional<std::size_t> first_below(double threshold) const;
};

/// K independent GD runs from standard normal draws seeded by
/// restart_seed(cfg.seed, l). Runs execute on up to RELULAB_THREADS workers;
/// the result does not depend on the worker count.
MultiStartResult multistart_run(const Problem& p, std::size_t K, const GDConfig& cfg);

/// Worker cap from RELULAB_THREADS, defaulting to the hardware concurrency.
std::size_t worker_count();

enum class RateColumn { risk, dist };

struct RateFit {
  double c_fit = 0.0;
  double C_fit = 0.0;
  double r2 = 0.0;
  bool exact_convergence = false;
  std::size_t rows_used = 0;
};

/// Least squares of log y_n against x_n = scale * n^{1 - rho}; c_fit is the
/// negated slope and C_fit = exp(intercept). Rows with y <= 1e-300 are
/// skipped. If every row is zero the fit reports exact convergence.
RateFit fit_rate(const TrajectoryRecord& rec, double rho_exp, double scale = 1.0,
                 RateColumn column = RateColumn::risk);
RateFit fit_rate(std::span<const double> n, std::span<const double> y, double rho_exp, double scale = 1.0);

struct SumEstimate {
  double value;
  double tail_error;       // size of the last Euler-Maclaurin correction used
  std::size_t direct_terms;
};

/// sum_{k >= 1} gamma k^{-rho} exp(-c gamma (k - 1)^{1 - rho}), summed directly
/// up to a cutoff and closed with an Euler-Maclaurin tail. Throws
/// std::runtime_error if the tail bound cannot be pushed below `tail_tol`.
SumEstimate sum_estimate(double rho_exp, double c, double gamma, double tail_tol = 1e-12);

/// Max of sum_estimate over a grid in (0, g].
double sum_estimate_check(double rho_exp, double c, double g, std::span<const double> gamma_grid);

}  // namespace relulab

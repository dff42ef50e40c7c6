#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "subspace/theory.hpp"
#include "subspace/trackers.hpp"

namespace subspace::harness {

/// Runs fn(0..count-1) across up to `workers` threads. Exceptions from the
/// work items are rethrown on the calling thread after the join.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

struct ExperimentConfig {
  // model
  int n = 2000;
  int d = 1;
  Vector lambdas;
  double sigma = 1.0;
  double alpha = 0.5;
  // algorithm
  Algo algo = Algo::kGrouse;
  TrackerParams tracker;
  // run
  double q0 = 0.5;
  double horizon = 1.0;  // rescaled time T
  std::vector<double> record_times;
  int n_trials = 1;
  std::uint64_t seed = 42;
  int workers = 0;  // 0 = hardware concurrency
  bool store_q = false;

  long steps() const { return static_cast<long>(horizon * n); }
  void validate() const;
  theory::OdeParams ode_params() const;
};

/// Monte Carlo aggregate over independent trials: per-trial principal
/// cosines at each record time plus their mean and (sample) standard
/// deviation. Trials are always stored so aggregates can be re-derived.
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Matrix> per_trial;  // each: times x d
  Matrix mean;                    // times x d
  Matrix stddev;                  // times x d
  std::vector<std::vector<Matrix>> q_per_trial;  // optional full Q matrices
  long long total_skips = 0;
  long long total_steps = 0;

  int trials() const { return static_cast<int>(per_trial.size()); }
  /// Standard error of the mean, per (time, direction).
  Matrix sem() const;
};

/// Recomputes mean/stddev from the stored per-trial data (also used by the
/// aggregation-consistency tests).
void aggregate(TrajectoryRecord& rec);

/// Runs n_trials independent streams (fresh U, X0 and data per trial) and
/// aggregates the principal cosines at the configured record times.
TrajectoryRecord run_experiment(const ExperimentConfig& cfg);

/// Deterministic theory-side prediction for the same configuration:
/// the Q-ODE for Oja/GROUSE, the full (A,K,W) system for PETRELS.
std::vector<std::pair<double, Vector>> theory_prediction(
    const ExperimentConfig& cfg, const std::vector<double>& times,
    double h = 1e-3);

struct ErrorReport {
  Matrix abs_err;  // times x d, |mean - prediction|
  double max_abs = 0.0;
  double rms = 0.0;
  std::vector<std::vector<bool>> within_band;  // |err| <= 2 SEM
};

ErrorReport compare_to_theory(const TrajectoryRecord& rec,
                              const std::vector<std::pair<double, Vector>>& prediction);

struct RatePoint {
  int n = 0;
  double mean_abs_err = 0.0;
  double stderr_mean = 0.0;
};

struct RateSweep {
  std::vector<RatePoint> points;
  std::vector<std::vector<double>> per_trial_errors;  // aligned with points
  double slope = 0.0;  // least-squares fit of log err vs log n
  bool degenerate = false;
};

/// Least-squares slope of log(err) vs log(n). Degenerate (slope meaningless)
/// when fewer than two points are given or any error is non-positive.
std::pair<double, bool> fit_loglog_slope(const std::vector<RatePoint>& points);

/// Finite-sample error E||Q^(n)(t*) - Q(t*)|| against the ODE prediction for
/// each ambient dimension in n_list, with a log-log slope fit.
RateSweep finite_sample_sweep(const ExperimentConfig& base,
                              const std::vector<int>& n_list, double t_star);

struct PhasePortrait {
  // trajectory samples (t, q2, g) per start
  std::vector<std::vector<std::array<double, 3>>> trajectories;
  // nullcline samples (g, f(g), h(g))
  std::vector<std::array<double, 3>> nullclines;
  theory::PetrelsFixedPoint fixed_point;
};

PhasePortrait phase_portrait(const theory::OdeParams& p,
                             const std::vector<std::pair<double, double>>& starts,
                             double t_end, const std::vector<double>& g_grid,
                             double h = 1e-3, double sample_dt = 0.1);

struct PhaseHeatmap {
  std::vector<double> mu_grid;
  std::vector<double> snr_grid;  // alpha lambda^2 / sigma^2
  Matrix mean_q2;                // mu x snr
  Matrix std_q2;
  std::vector<std::vector<double>> per_trial_q2;  // cell-major (mu x snr)
  std::vector<double> critical_mu;  // phase boundary per snr column
};

/// Empirical steady-state squared cosines of PETRELS (d = 1) over a
/// (mu, snr) grid, plus the predicted phase boundary.
PhaseHeatmap phase_heatmap(const std::vector<double>& mu_grid,
                           const std::vector<double>& snr_grid, int n,
                           double t_end, int trials, double alpha, double sigma,
                           double q0, double delta, std::uint64_t seed,
                           int workers);

struct ToyScalingDemo {
  std::vector<int> n_list;
  std::vector<double> times;
  std::vector<Matrix> stats;      // per n: times x 2 (mean, std over trials)
  std::vector<Matrix> per_trial;  // per n: trials x times
  std::vector<double> limit;      // q0 e^{-tau t} on the same grid
  std::vector<double> max_dev;    // per n: max_t |mean - limit|
};

/// The 1-D scaling example: q_{k+1} = q_k - (tau/n) q_k + n^{-1/2-delta} v_k
/// simulated for each n, against the limit curve q0 e^{-tau t}.
ToyScalingDemo toy_scaling_demo(double tau, double delta_exp,
                                const std::vector<int>& n_list, double horizon,
                                int trials, double q0, std::uint64_t seed,
                                int workers);

}  // namespace subspace::harness

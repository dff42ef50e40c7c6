#include "subspace/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "subspace/linalg.hpp"

namespace subspace::harness {

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void ExperimentConfig::validate() const {
  if (n < 1 || d < 1 || d > n)
    throw ParameterError("ExperimentConfig: need 1 <= d <= n");
  if (lambdas.size() != d)
    throw ParameterError("ExperimentConfig: lambdas must have d entries");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError("ExperimentConfig: alpha must lie in (0,1)");
  if (!(sigma > 0.0)) throw ParameterError("ExperimentConfig: sigma must be positive");
  if (!(q0 > 0.0 && q0 <= 1.0))
    throw ParameterError("ExperimentConfig: q0 must lie in (0,1]");
  if (!(horizon > 0.0)) throw ParameterError("ExperimentConfig: T must be positive");
  if (n_trials < 1) throw ParameterError("ExperimentConfig: n_trials >= 1");
  if (record_times.empty())
    throw ParameterError("ExperimentConfig: record_times must not be empty");
  for (size_t i = 0; i < record_times.size(); ++i) {
    if (record_times[i] < 0.0 || record_times[i] > horizon + 1e-12)
      throw ParameterError("ExperimentConfig: record_times must lie in [0, T]");
    if (i > 0 && record_times[i] < record_times[i - 1])
      throw ParameterError("ExperimentConfig: record_times must be ascending");
  }
  tracker.validate();
}

theory::OdeParams ExperimentConfig::ode_params() const {
  theory::OdeParams p;
  p.lambdas = lambdas;
  p.sigma = sigma;
  p.alpha = alpha;
  p.tau = tracker.tau;
  p.mu = tracker.mu;
  return p;
}

Matrix TrajectoryRecord::sem() const {
  const double t = std::max(1, trials());
  return stddev / std::sqrt(t);
}

void aggregate(TrajectoryRecord& rec) {
  const int trials = rec.trials();
  if (trials == 0) return;
  const auto rows = rec.per_trial[0].rows();
  const auto cols = rec.per_trial[0].cols();
  rec.mean = Matrix::Zero(rows, cols);
  for (const auto& m : rec.per_trial) rec.mean += m;
  rec.mean /= trials;
  rec.stddev = Matrix::Zero(rows, cols);
  if (trials > 1) {
    for (const auto& m : rec.per_trial)
      rec.stddev += (m - rec.mean).cwiseAbs2();
    rec.stddev = (rec.stddev / (trials - 1)).cwiseSqrt();
  }
}

TrajectoryRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  TrajectoryRecord rec;
  rec.times = cfg.record_times;
  rec.per_trial.resize(cfg.n_trials);
  if (cfg.store_q) rec.q_per_trial.resize(cfg.n_trials);
  std::vector<long> skips(cfg.n_trials, 0);

  parallel_for(cfg.n_trials, cfg.workers, [&](int trial) {
    Rng rng = Rng::for_trial(cfg.seed, static_cast<std::uint64_t>(trial));
    const SubspaceModel model =
        make_model(cfg.n, cfg.d, cfg.lambdas, cfg.sigma, cfg.alpha, rng);
    MatrixRM x0 = correlated_init(model.basis, cfg.q0, rng);
    TrackerParams params = cfg.tracker;
    params.alpha = cfg.alpha;
    Tracker tracker(cfg.algo, std::move(x0), params);
    TrialTrajectory traj = run_stream(tracker, model, cfg.steps(),
                                      cfg.record_times, rng, cfg.store_q);
    rec.per_trial[trial] = std::move(traj.cosines);
    if (cfg.store_q) rec.q_per_trial[trial] = std::move(traj.q_matrices);
    skips[trial] = traj.skips;
  });

  for (long s : skips) rec.total_skips += s;
  rec.total_steps = static_cast<long long>(cfg.steps()) * cfg.n_trials;
  aggregate(rec);
  return rec;
}

std::vector<std::pair<double, Vector>> theory_prediction(
    const ExperimentConfig& cfg, const std::vector<double>& times, double h) {
  const theory::OdeParams p = cfg.ode_params();
  std::vector<std::pair<double, Vector>> out;
  out.reserve(times.size());

  if (cfg.algo == Algo::kPetrels) {
    theory::OdeState s0;
    s0.t = 0.0;
    s0.value = theory::PetrelsFullState{
        Matrix::Identity(cfg.d, cfg.d) / cfg.tracker.delta,
        cfg.q0 * Matrix::Identity(cfg.d, cfg.d),
        Matrix::Identity(cfg.d, cfg.d)};
    theory::OdeState state = s0;
    for (double t : times) {
      if (t > state.t) {
        auto path = theory::integrate(p, state, t, h, t - state.t);
        state = path.back();
      }
      out.emplace_back(t, theory::predicted_cosines(state));
    }
    return out;
  }

  if (p.tau.constant_value()) {
    const Matrix p0 = Matrix::Identity(cfg.d, cfg.d) / (cfg.q0 * cfg.q0);
    for (double t : times)
      out.emplace_back(t, theory::cosines_from_p(
                              theory::oja_grouse_closed_form(p0, p, t)));
    return out;
  }

  theory::OdeState state;
  state.t = 0.0;
  state.value = theory::OjaGrouseState{cfg.q0 * Matrix::Identity(cfg.d, cfg.d)};
  for (double t : times) {
    if (t > state.t) {
      auto path = theory::integrate(p, state, t, h, t - state.t);
      state = path.back();
    }
    out.emplace_back(t, theory::predicted_cosines(state));
  }
  return out;
}

ErrorReport compare_to_theory(
    const TrajectoryRecord& rec,
    const std::vector<std::pair<double, Vector>>& prediction) {
  if (prediction.size() != rec.times.size())
    throw ParameterError("compare_to_theory: time grids differ in length");
  for (size_t i = 0; i < prediction.size(); ++i)
    if (std::abs(prediction[i].first - rec.times[i]) > 1e-9)
      throw ParameterError("compare_to_theory: time grids do not match");

  const auto rows = rec.mean.rows();
  const auto cols = rec.mean.cols();
  ErrorReport rep;
  rep.abs_err.resize(rows, cols);
  rep.within_band.assign(rows, std::vector<bool>(cols, false));
  const Matrix sem = rec.sem();
  double sq_sum = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double err = std::abs(rec.mean(i, j) - prediction[i].second(j));
      rep.abs_err(i, j) = err;
      rep.max_abs = std::max(rep.max_abs, err);
      sq_sum += err * err;
      rep.within_band[i][j] = err <= 2.0 * sem(i, j);
    }
  }
  rep.rms = std::sqrt(sq_sum / static_cast<double>(rows * cols));
  return rep;
}

RateSweep finite_sample_sweep(const ExperimentConfig& base,
                              const std::vector<int>& n_list, double t_star) {
  if (t_star > base.horizon + 1e-12)
    throw ParameterError("finite_sample_sweep: t_star must be <= T");
  RateSweep sweep;
  for (int n : n_list) {
    ExperimentConfig cfg = base;
    cfg.n = n;
    cfg.record_times = {t_star};
    cfg.horizon = t_star;
    const TrajectoryRecord rec = run_experiment(cfg);
    const auto pred = theory_prediction(cfg, {t_star});
    const Vector& target = pred[0].second;
    std::vector<double> errs(rec.trials());
    double mean = 0.0;
    for (int i = 0; i < rec.trials(); ++i) {
      errs[i] = (rec.per_trial[i].row(0).transpose() - target).norm();
      mean += errs[i];
    }
    mean /= rec.trials();
    double var = 0.0;
    for (double e : errs) var += (e - mean) * (e - mean);
    var = rec.trials() > 1 ? var / (rec.trials() - 1) : 0.0;
    sweep.points.push_back(
        {n, mean, std::sqrt(var / std::max(1, rec.trials()))});
    sweep.per_trial_errors.push_back(std::move(errs));
  }
  std::tie(sweep.slope, sweep.degenerate) = fit_loglog_slope(sweep.points);
  return sweep;
}

std::pair<double, bool> fit_loglog_slope(const std::vector<RatePoint>& points) {
  if (points.size() < 2) return {0.0, true};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& pt : points) {
    if (!(pt.mean_abs_err > 0.0)) return {0.0, true};
    const double x = std::log(static_cast<double>(pt.n));
    const double y = std::log(pt.mean_abs_err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(points.size());
  const double denom = m * sxx - sx * sx;
  if (denom <= 0.0) return {0.0, true};
  return {(m * sxy - sx * sy) / denom, false};
}

PhasePortrait phase_portrait(const theory::OdeParams& p,
                             const std::vector<std::pair<double, double>>& starts,
                             double t_end, const std::vector<double>& g_grid,
                             double h, double sample_dt) {
  if (p.d() != 1)
    throw DimensionError("phase_portrait: only d = 1 is supported");
  PhasePortrait out;
  out.fixed_point = theory::petrels_fixed_point(p);
  for (const auto& [q2_0, g0] : starts) {
    Vector y0(2);
    y0 << q2_0, g0;
    auto path = theory::rk4_path(
        [&](double, const Vector& y) -> Vector {
          return theory::rhs_q2g(Eigen::Vector2d(y(0), y(1)), p);
        },
        y0, 0.0, t_end, h, sample_dt);
    std::vector<std::array<double, 3>> traj;
    traj.reserve(path.size());
    for (const auto& [t, y] : path) traj.push_back({t, y(0), y(1)});
    out.trajectories.push_back(std::move(traj));
  }
  for (double g : g_grid)
    out.nullclines.push_back(
        {g, theory::petrels_nullcline_f(g, p), theory::petrels_nullcline_h(g, p)});
  return out;
}

PhaseHeatmap phase_heatmap(const std::vector<double>& mu_grid,
                           const std::vector<double>& snr_grid, int n,
                           double t_end, int trials, double alpha, double sigma,
                           double q0, double delta, std::uint64_t seed,
                           int workers) {
  PhaseHeatmap out;
  out.mu_grid = mu_grid;
  out.snr_grid = snr_grid;
  const int rows = static_cast<int>(mu_grid.size());
  const int cols = static_cast<int>(snr_grid.size());
  out.mean_q2 = Matrix::Zero(rows, cols);
  out.std_q2 = Matrix::Zero(rows, cols);

  const int cells = rows * cols;
  std::vector<std::vector<double>> cell_q2(cells);
  parallel_for(cells, workers, [&](int cell) {
    const int i = cell / cols;  // mu index
    const int j = cell % cols;  // snr index
    const double lambda = std::sqrt(snr_grid[j] * sigma * sigma / alpha);
    std::vector<double>& q2s = cell_q2[cell];
    q2s.resize(trials);
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng = Rng::for_trial(seed, static_cast<std::uint64_t>(trial),
                               static_cast<std::uint64_t>(cell));
      Vector lam(1);
      lam << lambda;
      const SubspaceModel model = make_model(n, 1, lam, sigma, alpha, rng);
      MatrixRM x0 = correlated_init(model.basis, q0, rng);
      TrackerParams params;
      params.mu = mu_grid[i];
      params.delta = delta;
      params.alpha = alpha;
      params.eps = alpha / 2.0;
      Tracker tracker(Algo::kPetrels, std::move(x0), params);
      TrialTrajectory traj = run_stream(
          tracker, model, static_cast<long>(t_end * n), {t_end}, rng, false);
      const double c = traj.cosines(0, 0);
      q2s[trial] = c * c;
    }
  });

  out.per_trial_q2 = cell_q2;
  for (int cell = 0; cell < cells; ++cell) {
    const int i = cell / cols;
    const int j = cell % cols;
    double mean = 0.0;
    for (double v : cell_q2[cell]) mean += v;
    mean /= trials;
    double var = 0.0;
    for (double v : cell_q2[cell]) var += (v - mean) * (v - mean);
    out.mean_q2(i, j) = mean;
    out.std_q2(i, j) = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
  }

  out.critical_mu.reserve(cols);
  for (int j = 0; j < cols; ++j) {
    theory::OdeParams p;
    p.lambdas = Vector::Constant(1, std::sqrt(snr_grid[j] * sigma * sigma / alpha));
    p.sigma = sigma;
    p.alpha = alpha;
    out.critical_mu.push_back(theory::petrels_critical_mu(p.lambdas(0), p));
  }
  return out;
}

ToyScalingDemo toy_scaling_demo(double tau, double delta_exp,
                                const std::vector<int>& n_list, double horizon,
                                int trials, double q0, std::uint64_t seed,
                                int workers) {
  if (!(delta_exp > 0.0))
    throw ParameterError("toy_scaling_demo: delta must be positive");
  ToyScalingDemo out;
  out.n_list = n_list;
  const int samples = 50;
  for (int s = 0; s <= samples; ++s)
    out.times.push_back(horizon * s / samples);
  for (double t : out.times) out.limit.push_back(q0 * std::exp(-tau * t));

  out.stats.resize(n_list.size());
  for (size_t ni = 0; ni < n_list.size(); ++ni) {
    const int n = n_list[ni];
    const double noise_scale = std::pow(n, -0.5 - delta_exp);
    Matrix traj(trials, out.times.size());
    parallel_for(trials, workers, [&](int trial) {
      Rng rng = Rng::for_trial(seed, trial, ni);
      double q = q0;
      long k = 0;
      for (size_t s = 0; s < out.times.size(); ++s) {
        const long k_target = static_cast<long>(out.times[s] * n);
        for (; k < k_target; ++k)
          q += -(tau / n) * q + noise_scale * rng.normal();
        traj(trial, s) = q;
      }
    });
    Matrix st(out.times.size(), 2);
    for (Eigen::Index s = 0; s < st.rows(); ++s) {
      const double mean = traj.col(s).mean();
      double var = 0.0;
      for (int r = 0; r < trials; ++r)
        var += (traj(r, s) - mean) * (traj(r, s) - mean);
      st(s, 0) = mean;
      st(s, 1) = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    }
    out.stats[ni] = st;
    out.per_trial.push_back(traj);
    double dev = 0.0;
    for (Eigen::Index s = 0; s < st.rows(); ++s)
      dev = std::max(dev, std::abs(st(s, 0) - out.limit[s]));
    out.max_dev.push_back(dev);
  }
  return out;
}

}  // namespace subspace::harness

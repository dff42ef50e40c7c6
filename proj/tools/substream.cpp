// substream: streaming subspace estimation from partially observed samples,
// with the matching high-dimensional ODE predictions.
//
// Subcommands: simulate, predict, compare, rate, phase-portrait, phase-map,
// demo-scaling. Every run writes CSV artifacts plus a JSON summary embedding
// the fully resolved config; files are named by a hash of that config.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "subspace/config.hpp"
#include "subspace/io.hpp"

namespace fs = std::filesystem;
namespace theory = subspace::theory;
using subspace::Algo;
using subspace::Matrix;
using subspace::Vector;
using json = nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file")->required();
  cmd->add_option("--set", opts.sets, "override: key.path=value (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "master seed (overrides run.seed)");
  cmd->add_option("--workers", opts.workers, "worker threads (overrides run.workers)");
}

json load_resolved(const CommonOpts& opts) {
  json user = subspace::config::load_json_file(opts.config_path);
  for (const auto& s : opts.sets) subspace::config::apply_override(user, s);
  json cfg = subspace::config::resolve(user);
  if (opts.seed) cfg["run"]["seed"] = *opts.seed;
  if (opts.workers) cfg["run"]["workers"] = *opts.workers;
  return cfg;
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
  fs::create_directories(opts.out_dir);
  return (fs::path(opts.out_dir) / name).string();
}

void write_summary(const CommonOpts& opts, const std::string& prefix,
                   const std::string& id, const json& cfg, json outputs,
                   json metrics) {
  json summary{{"command", prefix},
               {"experiment_id", id},
               {"config", cfg},
               {"outputs", std::move(outputs)},
               {"metrics", std::move(metrics)}};
  std::ofstream out(out_path(opts, prefix + "_" + id + ".json"),
                    std::ios::binary);
  out << summary.dump(2) << '\n';
}

std::map<std::string, Matrix> stats_from_prediction(
    const std::vector<std::pair<double, Vector>>& pred) {
  Matrix theory(static_cast<Eigen::Index>(pred.size()), pred[0].second.size());
  for (size_t i = 0; i < pred.size(); ++i)
    theory.row(static_cast<Eigen::Index>(i)) = pred[i].second.transpose();
  return {{"theory", theory}};
}

int cmd_simulate(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  const auto exp = subspace::config::experiment_from(cfg);
  const std::string id = subspace::config::experiment_id(cfg);
  const auto rec = subspace::harness::run_experiment(exp);

  const std::string traj = out_path(opts, "trajectory_" + id + ".csv");
  subspace::io::write_trajectory_csv(traj, id, rec.times,
                                     {{"mean", rec.mean}, {"std", rec.stddev}});
  const std::string trials = out_path(opts, "trajectory_" + id + "_trials.csv");
  subspace::io::write_trials_csv(trials, id, rec);

  const double skip_fraction =
      rec.total_steps > 0
          ? static_cast<double>(rec.total_skips) / rec.total_steps
          : 0.0;
  write_summary(opts, "simulate", id, cfg,
                {{"trajectory_csv", traj}, {"trials_csv", trials}},
                {{"skip_fraction", skip_fraction},
                 {"trials", rec.trials()},
                 {"total_steps", rec.total_steps}});
  std::cout << "simulate: wrote " << traj << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  const auto exp = subspace::config::experiment_from(cfg);
  const std::string id = subspace::config::experiment_id(cfg);
  const double h = cfg["ode"]["h"].get<double>();

  const auto pred = subspace::harness::theory_prediction(exp, exp.record_times, h);
  const std::string theory_csv = out_path(opts, "theory_" + id + ".csv");
  subspace::io::write_trajectory_csv(theory_csv, id, exp.record_times,
                                     stats_from_prediction(pred));
  json outputs{{"theory_csv", theory_csv}};
  json metrics;

  if (exp.algo != Algo::kPetrels && exp.tracker.tau.constant_value()) {
    // cross-check: closed form against RK4 on the Q-ODE
    auto p = exp.ode_params();
    theory::OdeState s0;
    s0.value = theory::OjaGrouseState{exp.q0 * Matrix::Identity(exp.d, exp.d)};
    double max_diff = 0.0;
    theory::OdeState state = s0;
    std::vector<std::pair<double, Vector>> rk_pred;
    for (double t : exp.record_times) {
      if (t > state.t) {
        auto path = theory::integrate(p, state, t, h, t - state.t);
        state = path.back();
      }
      rk_pred.emplace_back(t, theory::predicted_cosines(state));
    }
    for (size_t i = 0; i < rk_pred.size(); ++i)
      max_diff = std::max(max_diff,
                          (rk_pred[i].second - pred[i].second).cwiseAbs().maxCoeff());
    const std::string rk_csv = out_path(opts, "theory_rk4_" + id + ".csv");
    subspace::io::write_trajectory_csv(rk_csv, id, exp.record_times,
                                       stats_from_prediction(rk_pred));
    outputs["theory_rk4_csv"] = rk_csv;
    metrics["closed_form_vs_rk4_max_diff"] = max_diff;
  }

  if (exp.algo == Algo::kPetrels && exp.d == 1) {
    // the reduced (Q, G) system as a consistency companion
    auto p = exp.ode_params();
    theory::OdeState s0;
    s0.value = theory::PetrelsReducedState{
        exp.q0 * Matrix::Identity(1, 1),
        exp.tracker.delta * Matrix::Identity(1, 1)};
    theory::OdeState state = s0;
    std::vector<std::pair<double, Vector>> red_pred;
    for (double t : exp.record_times) {
      if (t > state.t) {
        auto path = theory::integrate(p, state, t, h, t - state.t);
        state = path.back();
      }
      red_pred.emplace_back(t, theory::predicted_cosines(state));
    }
    double max_diff = 0.0;
    for (size_t i = 0; i < red_pred.size(); ++i)
      max_diff = std::max(max_diff,
                          (red_pred[i].second - pred[i].second).cwiseAbs().maxCoeff());
    const std::string red_csv = out_path(opts, "theory_reduced_" + id + ".csv");
    subspace::io::write_trajectory_csv(red_csv, id, exp.record_times,
                                       stats_from_prediction(red_pred));
    outputs["theory_reduced_csv"] = red_csv;
    metrics["full_vs_reduced_max_diff"] = max_diff;
  }

  write_summary(opts, "predict", id, cfg, outputs, metrics);
  std::cout << "predict: wrote " << theory_csv << "\n";
  return 0;
}

int cmd_compare(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  if (!cfg.contains("compare") || !cfg["compare"].contains("record_csv") ||
      !cfg["compare"].contains("theory_csv"))
    throw subspace::config::ConfigError(
        "compare requires compare.record_csv and compare.theory_csv");
  const std::string id = subspace::config::experiment_id(cfg);
  const auto rec = subspace::io::read_trajectory_csv(
      cfg["compare"]["record_csv"].get<std::string>());
  const auto theo = subspace::io::read_trajectory_csv(
      cfg["compare"]["theory_csv"].get<std::string>());
  if (!rec.stats.count("mean") || !theo.stats.count("theory"))
    throw subspace::config::ConfigError(
        "compare inputs need 'mean' and 'theory' statistics");
  if (rec.times.size() != theo.times.size() || rec.d != theo.d)
    throw subspace::config::ConfigError("compare: grids do not match");
  for (size_t i = 0; i < rec.times.size(); ++i)
    if (std::abs(rec.times[i] - theo.times[i]) > 1e-9)
      throw subspace::config::ConfigError("compare: time grids do not match");

  const Matrix& mean = rec.stats.at("mean");
  const Matrix& theory_m = theo.stats.at("theory");
  const Matrix abs_err = (mean - theory_m).cwiseAbs();
  std::map<std::string, Matrix> stats{{"mean", mean},
                                      {"theory", theory_m},
                                      {"abs_err", abs_err}};
  if (rec.stats.count("std")) stats["std"] = rec.stats.at("std");
  const std::string cmp_csv = out_path(opts, "compare_" + id + ".csv");
  subspace::io::write_trajectory_csv(cmp_csv, id, rec.times, stats);

  write_summary(opts, "compare", id, cfg, {{"compare_csv", cmp_csv}},
                {{"max_abs_err", abs_err.maxCoeff()},
                 {"rms_err", std::sqrt(abs_err.cwiseAbs2().mean())}});
  std::cout << "compare: max abs err " << abs_err.maxCoeff() << "\n";
  return 0;
}

int cmd_rate(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  if (!cfg.contains("rate"))
    throw subspace::config::ConfigError("rate requires a rate section");
  const auto& rj = cfg["rate"];
  std::vector<int> n_list;
  for (const auto& v : rj.at("n_list")) n_list.push_back(v.get<int>());
  if (n_list.size() < 2)
    throw subspace::config::ConfigError("rate.n_list needs at least 2 sizes");
  const double t_star = rj.at("t_star").get<double>();

  auto base = subspace::config::experiment_from(cfg);
  const std::string id = subspace::config::experiment_id(cfg);
  const auto sweep = subspace::harness::finite_sample_sweep(base, n_list, t_star);
  const std::string rate_csv = out_path(opts, "rate_" + id + ".csv");
  const std::string trials_csv = out_path(opts, "rate_" + id + "_trials.csv");
  subspace::io::write_rate_csv(rate_csv, id, sweep);
  subspace::io::write_rate_trials_csv(trials_csv, id, sweep);
  write_summary(opts, "rate", id, cfg,
                {{"rate_csv", rate_csv}, {"trials_csv", trials_csv}},
                {{"slope", sweep.slope}, {"degenerate", sweep.degenerate}});
  std::cout << "rate: slope " << sweep.slope << "\n";
  return 0;
}

theory::OdeParams scalar_params(const json& cfg) {
  const auto exp = subspace::config::experiment_from(cfg);
  if (exp.d != 1)
    throw subspace::config::ConfigError("this command requires model.d = 1");
  return exp.ode_params();
}

int cmd_phase_portrait(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  const auto p = scalar_params(cfg);
  const std::string id = subspace::config::experiment_id(cfg);
  json pj = cfg.value("portrait", json::object());
  const double t_end = pj.value("t_end", 50.0);
  std::vector<std::pair<double, double>> starts;
  if (pj.contains("starts")) {
    for (const auto& s : pj["starts"])
      starts.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
  } else {
    for (double q2 : {0.05, 0.35, 0.65, 0.95}) {
      starts.emplace_back(q2, pj.value("g_min", 0.05));
      starts.emplace_back(q2, pj.value("g_max", 3.0));
    }
  }
  std::vector<double> g_grid;
  const double g_min = pj.value("g_min", 0.05);
  const double g_max = pj.value("g_max", 3.0);
  const int g_count = pj.value("g_count", 200);
  for (int i = 0; i < g_count; ++i)
    g_grid.push_back(g_min + (g_max - g_min) * i / (g_count - 1));

  const auto portrait = subspace::harness::phase_portrait(p, starts, t_end, g_grid);
  const std::string csv = out_path(opts, "portrait_" + id + ".csv");
  subspace::io::write_portrait_csv(csv, id, portrait);
  write_summary(opts, "phase_portrait", id, cfg, {{"portrait_csv", csv}},
                {{"fixed_point_informative", portrait.fixed_point.informative},
                 {"fixed_point_q2", portrait.fixed_point.q2},
                 {"fixed_point_g", portrait.fixed_point.g}});
  std::cout << "phase-portrait: fixed point q2 " << portrait.fixed_point.q2 << "\n";
  return 0;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> g;
  for (int i = 0; i < count; ++i)
    g.push_back(count == 1 ? lo
                           : lo * std::pow(hi / lo, static_cast<double>(i) /
                                                        (count - 1)));
  return g;
}

int cmd_phase_map(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  if (!cfg.contains("phase_map"))
    throw subspace::config::ConfigError("phase-map requires a phase_map section");
  const auto& pm = cfg["phase_map"];
  const std::string id = subspace::config::experiment_id(cfg);
  const auto mu_grid = log_grid(pm.at("mu_min").get<double>(),
                                pm.at("mu_max").get<double>(),
                                pm.at("mu_count").get<int>());
  const auto snr_grid = log_grid(pm.at("snr_min").get<double>(),
                                 pm.at("snr_max").get<double>(),
                                 pm.at("snr_count").get<int>());
  const auto map = subspace::harness::phase_heatmap(
      mu_grid, snr_grid, pm.value("n", 2000), pm.value("t_end", 100.0),
      pm.value("trials", 20), cfg["model"]["alpha"].get<double>(),
      cfg["model"]["sigma"].get<double>(), pm.value("q0", 0.7),
      pm.value("delta", 1.0), cfg["run"]["seed"].get<std::uint64_t>(),
      cfg["run"]["workers"].get<int>());
  const std::string heat_csv = out_path(opts, "heatmap_" + id + ".csv");
  const std::string bound_csv = out_path(opts, "boundary_" + id + ".csv");
  const std::string trials_csv = out_path(opts, "heatmap_" + id + "_trials.csv");
  subspace::io::write_heatmap_csv(heat_csv, id, map);
  subspace::io::write_boundary_csv(bound_csv, id, map);
  subspace::io::write_heatmap_trials_csv(trials_csv, id, map);
  write_summary(opts, "phase_map", id, cfg,
                {{"heatmap_csv", heat_csv},
                 {"boundary_csv", bound_csv},
                 {"trials_csv", trials_csv}},
                {{"cells", static_cast<int>(mu_grid.size() * snr_grid.size())}});
  std::cout << "phase-map: wrote " << heat_csv << "\n";
  return 0;
}

int cmd_demo_scaling(const CommonOpts& opts) {
  const json cfg = load_resolved(opts);
  if (!cfg.contains("demo"))
    throw subspace::config::ConfigError("demo-scaling requires a demo section");
  const auto& dj = cfg["demo"];
  const std::string id = subspace::config::experiment_id(cfg);
  std::vector<int> n_list;
  for (const auto& v : dj.at("n_list")) n_list.push_back(v.get<int>());
  const auto demo = subspace::harness::toy_scaling_demo(
      dj.value("tau", 1.0), dj.value("delta", 0.25), n_list, dj.value("T", 1.0),
      dj.value("trials", 1000), dj.value("q0", 1.0),
      cfg["run"]["seed"].get<std::uint64_t>(), cfg["run"]["workers"].get<int>());
  const std::string csv = out_path(opts, "demo_" + id + ".csv");
  const std::string trials_csv = out_path(opts, "demo_" + id + "_trials.csv");
  subspace::io::write_demo_csv(csv, id, demo);
  subspace::io::write_demo_trials_csv(trials_csv, id, demo);
  json devs = json::array();
  for (size_t i = 0; i < n_list.size(); ++i)
    devs.push_back({{"n", n_list[i]}, {"max_dev", demo.max_dev[i]}});
  write_summary(opts, "demo_scaling", id, cfg,
                {{"demo_csv", csv}, {"trials_csv", trials_csv}},
                {{"max_dev", devs}});
  std::cout << "demo-scaling: wrote " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming subspace estimation under subsampling: simulation vs. scaling-limit predictions"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* simulate = app.add_subcommand("simulate", "run Monte Carlo trials of one algorithm");
  auto* predict = app.add_subcommand("predict", "emit the ODE / closed-form predictions");
  auto* compare = app.add_subcommand("compare", "diff a simulation CSV against a theory CSV");
  auto* rate = app.add_subcommand("rate", "finite-sample error sweep over ambient dimension");
  auto* portrait = app.add_subcommand("phase-portrait", "d=1 PETRELS (Q^2, G) trajectories and nullclines");
  auto* phase_map = app.add_subcommand("phase-map", "empirical PETRELS phase diagram over (mu, snr)");
  auto* demo = app.add_subcommand("demo-scaling", "1-D scaling-limit demonstration");
  for (auto* cmd : {simulate, predict, compare, rate, portrait, phase_map, demo})
    add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opts);
    if (predict->parsed()) return cmd_predict(opts);
    if (compare->parsed()) return cmd_compare(opts);
    if (rate->parsed()) return cmd_rate(opts);
    if (portrait->parsed()) return cmd_phase_portrait(opts);
    if (phase_map->parsed()) return cmd_phase_map(opts);
    if (demo->parsed()) return cmd_demo_scaling(opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include "subspace/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace subspace::io {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-identical output
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& path) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad numeric field '" + s + "' in " + path);
  return v;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const std::string& id,
                          const std::vector<double>& times,
                          const std::map<std::string, Matrix>& stats) {
  auto out = open_out(path);
  out << "experiment_id,t,direction,statistic,value\n";
  for (size_t ti = 0; ti < times.size(); ++ti) {
    for (const auto& [stat, values] : stats) {
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        out << id << ',' << format_double(times[ti]) << ',' << j << ','
            << stat << ',' << format_double(values(static_cast<Eigen::Index>(ti), j))
            << '\n';
      }
    }
  }
}

ParsedTrajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty trajectory csv: " + path);

  struct Row {
    double t;
    int dir;
    std::string stat;
    double value;
  };
  std::vector<Row> rows;
  ParsedTrajectory parsed;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5)
      throw std::runtime_error("malformed row in " + path + ": " + line);
    if (parsed.id.empty()) parsed.id = f[0];
    rows.push_back({parse_double(f[1], path),
                    static_cast<int>(parse_double(f[2], path)), f[3],
                    parse_double(f[4], path)});
  }
  std::vector<double> times;
  for (const auto& r : rows) times.push_back(r.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [](double a, double b) { return a == b; }),
              times.end());
  parsed.times = times;
  int d = 0;
  for (const auto& r : rows) d = std::max(d, r.dir + 1);
  parsed.d = d;
  auto time_index = [&](double t) {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    return static_cast<Eigen::Index>(it - times.begin());
  };
  for (const auto& r : rows) {
    auto [it, inserted] = parsed.stats.try_emplace(
        r.stat, Matrix::Zero(static_cast<Eigen::Index>(times.size()), d));
    it->second(time_index(r.t), r.dir) = r.value;
  }
  return parsed;
}

void write_trials_csv(const std::string& path, const std::string& id,
                      const harness::TrajectoryRecord& rec) {
  auto out = open_out(path);
  out << "experiment_id,trial,t,direction,value\n";
  for (int trial = 0; trial < rec.trials(); ++trial) {
    const Matrix& m = rec.per_trial[trial];
    for (size_t ti = 0; ti < rec.times.size(); ++ti)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << id << ',' << trial << ',' << format_double(rec.times[ti]) << ','
            << j << ',' << format_double(m(static_cast<Eigen::Index>(ti), j))
            << '\n';
  }
}

void write_rate_csv(const std::string& path, const std::string& id,
                    const harness::RateSweep& sweep) {
  auto out = open_out(path);
  out << "experiment_id,n,mean_abs_err,stderr\n";
  for (const auto& pt : sweep.points)
    out << id << ',' << pt.n << ',' << format_double(pt.mean_abs_err) << ','
        << format_double(pt.stderr_mean) << '\n';
}

void write_rate_trials_csv(const std::string& path, const std::string& id,
                           const harness::RateSweep& sweep) {
  auto out = open_out(path);
  out << "experiment_id,n,trial,abs_err\n";
  for (size_t p = 0; p < sweep.per_trial_errors.size(); ++p)
    for (size_t trial = 0; trial < sweep.per_trial_errors[p].size(); ++trial)
      out << id << ',' << sweep.points[p].n << ',' << trial << ','
          << format_double(sweep.per_trial_errors[p][trial]) << '\n';
}

void write_portrait_csv(const std::string& path, const std::string& id,
                        const harness::PhasePortrait& portrait) {
  auto out = open_out(path);
  out << "experiment_id,series,t,q2,g\n";
  for (size_t i = 0; i < portrait.trajectories.size(); ++i)
    for (const auto& [t, q2, g] : portrait.trajectories[i])
      out << id << ",traj_" << i << ',' << format_double(t) << ','
          << format_double(q2) << ',' << format_double(g) << '\n';
  for (const auto& [g, f, h] : portrait.nullclines) {
    out << id << ",nullcline_f,," << format_double(f) << ',' << format_double(g)
        << '\n';
    out << id << ",nullcline_h,," << format_double(h) << ',' << format_double(g)
        << '\n';
  }
}

void write_heatmap_csv(const std::string& path, const std::string& id,
                       const harness::PhaseHeatmap& map) {
  auto out = open_out(path);
  out << "experiment_id,mu,snr,mean_q2,std_q2\n";
  for (size_t i = 0; i < map.mu_grid.size(); ++i)
    for (size_t j = 0; j < map.snr_grid.size(); ++j)
      out << id << ',' << format_double(map.mu_grid[i]) << ','
          << format_double(map.snr_grid[j]) << ','
          << format_double(map.mean_q2(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(j)))
          << ','
          << format_double(map.std_q2(static_cast<Eigen::Index>(i),
                                      static_cast<Eigen::Index>(j)))
          << '\n';
}

void write_boundary_csv(const std::string& path, const std::string& id,
                        const harness::PhaseHeatmap& map) {
  auto out = open_out(path);
  out << "experiment_id,snr,critical_mu\n";
  for (size_t j = 0; j < map.snr_grid.size(); ++j)
    out << id << ',' << format_double(map.snr_grid[j]) << ','
        << format_double(map.critical_mu[j]) << '\n';
}

void write_heatmap_trials_csv(const std::string& path, const std::string& id,
                              const harness::PhaseHeatmap& map) {
  auto out = open_out(path);
  out << "experiment_id,mu,snr,trial,q2\n";
  const size_t cols = map.snr_grid.size();
  for (size_t cell = 0; cell < map.per_trial_q2.size(); ++cell) {
    const size_t i = cell / cols, j = cell % cols;
    for (size_t trial = 0; trial < map.per_trial_q2[cell].size(); ++trial)
      out << id << ',' << format_double(map.mu_grid[i]) << ','
          << format_double(map.snr_grid[j]) << ',' << trial << ','
          << format_double(map.per_trial_q2[cell][trial]) << '\n';
  }
}

void write_demo_trials_csv(const std::string& path, const std::string& id,
                           const harness::ToyScalingDemo& demo) {
  auto out = open_out(path);
  out << "experiment_id,n,trial,t,value\n";
  for (size_t ni = 0; ni < demo.n_list.size(); ++ni) {
    const Matrix& traj = demo.per_trial[ni];
    for (Eigen::Index trial = 0; trial < traj.rows(); ++trial)
      for (size_t s = 0; s < demo.times.size(); ++s)
        out << id << ',' << demo.n_list[ni] << ',' << trial << ','
            << format_double(demo.times[s]) << ','
            << format_double(traj(trial, static_cast<Eigen::Index>(s))) << '\n';
  }
}

void write_demo_csv(const std::string& path, const std::string& id,
                    const harness::ToyScalingDemo& demo) {
  auto out = open_out(path);
  out << "experiment_id,n,t,statistic,value\n";
  for (size_t s = 0; s < demo.times.size(); ++s)
    out << id << ",0," << format_double(demo.times[s]) << ",limit,"
        << format_double(demo.limit[s]) << '\n';
  for (size_t ni = 0; ni < demo.n_list.size(); ++ni) {
    for (size_t s = 0; s < demo.times.size(); ++s) {
      out << id << ',' << demo.n_list[ni] << ',' << format_double(demo.times[s])
          << ",mean," << format_double(demo.stats[ni](static_cast<Eigen::Index>(s), 0))
          << '\n';
      out << id << ',' << demo.n_list[ni] << ',' << format_double(demo.times[s])
          << ",std," << format_double(demo.stats[ni](static_cast<Eigen::Index>(s), 1))
          << '\n';
    }
  }
}

}  // namespace subspace::io

#pragma once

#include <map>
#include <string>
#include <vector>

#include "subspace/harness.hpp"

namespace subspace::io {

/// Shortest round-trip decimal representation (std::to_chars), so re-running
/// a config reproduces byte-identical files.
std::string format_double(double v);

/// Trajectory schema shared by simulate/predict/compare:
/// experiment_id,t,direction,statistic,value
void write_trajectory_csv(const std::string& path, const std::string& id,
                          const std::vector<double>& times,
                          const std::map<std::string, Matrix>& stats);

struct ParsedTrajectory {
  std::string id;
  std::vector<double> times;
  int d = 0;
  std::map<std::string, Matrix> stats;  // statistic -> times x d
};

ParsedTrajectory read_trajectory_csv(const std::string& path);

/// Raw per-trial data: experiment_id,trial,t,direction,value
void write_trials_csv(const std::string& path, const std::string& id,
                      const harness::TrajectoryRecord& rec);

/// experiment_id,n,mean_abs_err,stderr
void write_rate_csv(const std::string& path, const std::string& id,
                    const harness::RateSweep& sweep);

/// experiment_id,n,trial,abs_err
void write_rate_trials_csv(const std::string& path, const std::string& id,
                           const harness::RateSweep& sweep);

/// experiment_id,series,t,q2,g  (nullcline rows carry an empty t)
void write_portrait_csv(const std::string& path, const std::string& id,
                        const harness::PhasePortrait& portrait);

/// experiment_id,mu,snr,mean_q2,std_q2
void write_heatmap_csv(const std::string& path, const std::string& id,
                       const harness::PhaseHeatmap& map);

/// experiment_id,snr,critical_mu
void write_boundary_csv(const std::string& path, const std::string& id,
                        const harness::PhaseHeatmap& map);

/// experiment_id,mu,snr,trial,q2
void write_heatmap_trials_csv(const std::string& path, const std::string& id,
                              const harness::PhaseHeatmap& map);

/// experiment_id,n,t,statistic,value with statistic in {mean,std,limit};
/// the n-independent limit curve is emitted with n = 0.
void write_demo_csv(const std::string& path, const std::string& id,
                    const harness::ToyScalingDemo& demo);

/// experiment_id,n,trial,t,value
void write_demo_trials_csv(const std::string& path, const std::string& id,
                           const harness::ToyScalingDemo& demo);

}  // namespace subspace::io

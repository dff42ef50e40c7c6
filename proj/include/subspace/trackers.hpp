#pragma once

#include <vector>

#include "subspace/model.hpp"
#include "subspace/schedule.hpp"
#include "subspace/types.hpp"

namespace subspace {

enum class Algo { kOja, kGrouse, kPetrels };

const char* algo_name(Algo a);

struct TrackerParams {
  StepSchedule tau;          // step-size schedule (Oja / GROUSE)
  double mu = 5.0;           // rescaled discount, gamma = 1 - mu/n (PETRELS)
  double delta = 10.0;       // R_0 = (delta/n) I
  double alpha = 0.5;        // subsampling ratio used by the PETRELS R update
  double eps = 0.25;         // lambda_min(X^T Omega X) guard; must be < alpha
  double eps_prime = 0.1;    // Oja post-update Gram guard, in (0,1)
  int reorth_every = 1000;   // GROUSE drift control; <= 0 disables
  bool debug_checks = false; // verify the PETRELS Woodbury update per step

  void validate() const;
};

/// Streaming state of one algorithm: ingest one observation at a time,
/// expose an orthonormal basis for the current estimate.
class Tracker {
 public:
  Tracker(Algo algo, MatrixRM x0, TrackerParams params);

  void step(const PackedSample& sample);
  void step(const Observation& obs);

  /// Orthonormal basis of the current estimate. For Oja/GROUSE this is X
  /// itself; PETRELS symmetrically orthogonalizes its (non-orthonormal) X.
  MatrixRM estimate() const;

  const MatrixRM& raw_basis() const { return x_; }
  const Matrix& gain() const { return r_; }  // PETRELS R_k
  Algo algo() const { return algo_; }
  const TrackerParams& params() const { return params_; }
  long steps_taken() const { return k_; }
  long skips() const { return skips_; }

 private:
  void oja_step(const PackedSample& s);
  void grouse_step(const PackedSample& s);
  void petrels_step(const PackedSample& s);
  void petrels_step_rank1(const PackedSample& s);

  // lambda_min(X^T Omega X) guard shared by all three algorithms; fills
  // w with the masked least-squares coefficients when it passes.
  bool masked_coefficients(const PackedSample& s, Vector& w);

  Algo algo_;
  MatrixRM x_;
  Matrix r_;  // PETRELS only
  TrackerParams params_;
  long k_ = 0;
  long skips_ = 0;
  long accepted_ = 0;
  int n_ = 0, d_ = 0;

  // scratch, reused across steps
  Vector w_, p_, scratch_;
  MatrixRM xt_;
};

/// Time-indexed principal cosines of a single streaming run.
struct TrialTrajectory {
  std::vector<double> times;  // rescaled times actually recorded
  Matrix cosines;             // times x d, sorted descending per row
  std::vector<Matrix> q_matrices;  // full Q at each record time (optional)
  long steps = 0;
  long skips = 0;
};

/// Drives one tracker over steps draws from the model, recording the
/// principal cosines at k = floor(n t) for each requested rescaled time.
TrialTrajectory run_stream(Tracker& tracker, const SubspaceModel& model,
                           long steps, const std::vector<double>& record_times,
                           Rng& rng, bool store_q = false);

}  // namespace subspace

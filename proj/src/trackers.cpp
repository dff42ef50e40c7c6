#include "subspace/trackers.hpp"

#include <cmath>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "subspace/linalg.hpp"

namespace subspace {

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kOja: return "oja";
    case Algo::kGrouse: return "grouse";
    case Algo::kPetrels: return "petrels";
  }
  return "?";
}

void TrackerParams::validate() const {
  if (!(eps > 0.0 && eps < alpha))
    throw ParameterError("TrackerParams: eps must satisfy 0 < eps < alpha");
  if (!(eps_prime > 0.0 && eps_prime < 1.0))
    throw ParameterError("TrackerParams: eps_prime must lie in (0,1)");
  if (!(mu > 0.0)) throw ParameterError("TrackerParams: mu must be positive");
  if (!(delta > 0.0)) throw ParameterError("TrackerParams: delta must be positive");
}

Tracker::Tracker(Algo algo, MatrixRM x0, TrackerParams params)
    : algo_(algo), x_(std::move(x0)), params_(std::move(params)) {
  params_.validate();
  n_ = static_cast<int>(x_.rows());
  d_ = static_cast<int>(x_.cols());
  if (algo_ == Algo::kPetrels) {
    r_ = (params_.delta / n_) * Matrix::Identity(d_, d_);
  } else {
    const Matrix gram = x_.transpose() * x_;
    if ((gram - Matrix::Identity(d_, d_)).cwiseAbs().maxCoeff() > 1e-8)
      throw ParameterError("Tracker: X0 must be orthonormal for Oja/GROUSE");
  }
  w_.resize(d_);
  p_.resize(n_);
  scratch_.resize(n_);
  xt_.resize(n_, d_);
}

bool Tracker::masked_coefficients(const PackedSample& s, Vector& w) {
  std::span<const double> y(s.y_obs.data(), s.y_obs.size());
  std::span<const std::int32_t> idx(s.observed.data(), s.observed.size());
  auto [wfit, ok] = masked_least_squares(x_, idx, y, params_.eps);
  if (ok) w = wfit;
  return ok;
}

void Tracker::step(const Observation& obs) {
  PackedSample s;
  s.k = obs.k;
  s.observed = obs.observed;
  s.y_obs.resize(obs.observed.size());
  for (size_t t = 0; t < obs.observed.size(); ++t)
    s.y_obs[t] = obs.y(obs.observed[t]);
  step(s);
}

void Tracker::step(const PackedSample& s) {
  switch (algo_) {
    case Algo::kOja: oja_step(s); break;
    case Algo::kGrouse: grouse_step(s); break;
    case Algo::kPetrels:
      if (d_ == 1) petrels_step_rank1(s);
      else petrels_step(s);
      break;
  }
  ++k_;
}

void Tracker::oja_step(const PackedSample& s) {
  if (!masked_coefficients(s, w_)) {
    ++skips_;
    return;
  }
  const double tau = params_.tau(static_cast<double>(k_) / n_);
  const double c = tau / n_;
  // imputed sample: y on observed coordinates, X w elsewhere
  p_.noalias() = x_ * w_;
  for (size_t t = 0; t < s.observed.size(); ++t) p_(s.observed[t]) = s.y_obs[t];
  xt_ = x_;
  xt_.noalias() += c * p_ * w_.transpose();
  const Matrix gram = xt_.transpose() * xt_;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success || eig.eigenvalues()(0) <= params_.eps_prime) {
    ++skips_;  // degenerate Gram, drop the sample
    return;
  }
  const Matrix inv_sqrt = eig.eigenvectors() *
                          eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                          eig.eigenvectors().transpose();
  x_.noalias() = xt_ * inv_sqrt;
  ++accepted_;
}

void Tracker::grouse_step(const PackedSample& s) {
  if (!masked_coefficients(s, w_)) {
    ++skips_;
    return;
  }
  p_.noalias() = x_ * w_;
  const double pnorm = p_.norm();
  double r2 = 0.0;
  for (size_t t = 0; t < s.observed.size(); ++t) {
    const double r = s.y_obs[t] - p_(s.observed[t]);
    scratch_(t) = r;
    r2 += r * r;
  }
  const double rnorm = std::sqrt(r2);
  const double wnorm = w_.norm();
  if (pnorm < 1e-14 || rnorm < 1e-14 || wnorm < 1e-14) {
    ++skips_;  // degenerate rotation
    return;
  }
  const double tau = params_.tau(static_cast<double>(k_) / n_);
  const double theta = tau / n_ * rnorm * pnorm;
  const double cp = (std::cos(theta) - 1.0) / pnorm;
  const double cr = std::sin(theta) / rnorm;
  w_ /= wnorm;
  x_.noalias() += (cp * p_) * w_.transpose();
  for (size_t t = 0; t < s.observed.size(); ++t)
    x_.row(s.observed[t]) += (cr * scratch_(t)) * w_.transpose();
  ++accepted_;
  if (params_.reorth_every > 0 && accepted_ % params_.reorth_every == 0)
    x_ = orthonormalize(x_);
}

void Tracker::petrels_step(const PackedSample& s) {
  if (!masked_coefficients(s, w_)) {
    ++skips_;  // freeze both X and R
    return;
  }
  const Matrix r_prev = params_.debug_checks ? r_ : Matrix();
  const Vector g = r_ * w_;
  for (size_t t = 0; t < s.observed.size(); ++t) {
    const auto i = s.observed[t];
    const double resid = s.y_obs[t] - x_.row(i).dot(w_);
    x_.row(i) += resid * g.transpose();
  }
  const double gamma = 1.0 - params_.mu / n_;
  const Vector v = g / gamma;
  const double beta = 1.0 + params_.alpha * w_.dot(v);
  if (beta <= 1e-14)
    throw std::runtime_error("petrels_step: beta underflow, state corrupted");
  r_ = r_ / gamma - (params_.alpha / beta) * (v * v.transpose());
  if (params_.debug_checks) {
    const Matrix direct =
        (gamma * r_prev.inverse() +
         params_.alpha * (w_ * w_.transpose())).inverse();
    if ((r_ - direct).cwiseAbs().maxCoeff() > 1e-8)
      throw std::logic_error("petrels_step: Woodbury update drifted from direct inverse");
  }
  ++accepted_;
}

// d == 1 scalar recursion; this is the hot loop of the phase-map sweeps.
void Tracker::petrels_step_rank1(const PackedSample& s) {
  double* x = x_.data();
  const double* y = s.y_obs.data();
  const std::int32_t* idx = s.observed.data();
  const size_t m = s.observed.size();
  double z = 0.0, q = 0.0;
  size_t t = 0;
#if defined(__AVX512F__)
  {
    __m512d vz = _mm512_setzero_pd(), vq = _mm512_setzero_pd();
    for (; t + 8 <= m; t += 8) {
      const __m256i vi =
          _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + t));
      const __m512d vx = _mm512_i32gather_pd(vi, x, 8);
      const __m512d vy = _mm512_loadu_pd(y + t);
      vz = _mm512_fmadd_pd(vx, vx, vz);
      vq = _mm512_fmadd_pd(vx, vy, vq);
    }
    z = _mm512_reduce_add_pd(vz);
    q = _mm512_reduce_add_pd(vq);
  }
#endif
  for (; t < m; ++t) {
    const double xi = x[idx[t]];
    z += xi * xi;
    q += xi * y[t];
  }
  if (z <= params_.eps) {
    ++skips_;
    return;
  }
  const double w = q / z;
  const double r = r_(0, 0);
  const double gw = r * w;
  // x <- (1 - w gw) x + gw y on the observed rows
  const double keep = 1.0 - w * gw;
  t = 0;
#if defined(__AVX512F__)
  {
    const __m512d vk = _mm512_set1_pd(keep);
    const __m512d vg = _mm512_set1_pd(gw);
    for (; t + 8 <= m; t += 8) {
      const __m256i vi =
          _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + t));
      const __m512d vx = _mm512_i32gather_pd(vi, x, 8);
      const __m512d vy = _mm512_loadu_pd(y + t);
      const __m512d vnew =
          _mm512_fmadd_pd(vk, vx, _mm512_mul_pd(vg, vy));
      _mm512_i32scatter_pd(x, vi, vnew, 8);
    }
  }
#endif
  for (; t < m; ++t) x[idx[t]] = keep * x[idx[t]] + gw * y[t];
  const double gamma = 1.0 - params_.mu / n_;
  const double v = gw / gamma;
  const double beta = 1.0 + params_.alpha * w * v;
  if (beta <= 1e-14)
    throw std::runtime_error("petrels_step: beta underflow, state corrupted");
  const double r_next = r / gamma - params_.alpha * v * v / beta;
  if (params_.debug_checks) {
    const double direct = 1.0 / (gamma / r + params_.alpha * w * w);
    if (std::abs(r_next - direct) > 1e-8)
      throw std::logic_error("petrels_step: Woodbury update drifted from direct inverse");
  }
  r_(0, 0) = r_next;
  ++accepted_;
}

MatrixRM Tracker::estimate() const {
  if (algo_ == Algo::kPetrels) return orthonormalize(x_);
  return x_;
}

TrialTrajectory run_stream(Tracker& tracker, const SubspaceModel& model,
                           long steps, const std::vector<double>& record_times,
                           Rng& rng, bool store_q) {
  const int n = model.n;
  std::vector<long> targets;
  targets.reserve(record_times.size());
  for (size_t i = 0; i < record_times.size(); ++i) {
    if (i > 0 && record_times[i] < record_times[i - 1])
      throw ParameterError("run_stream: record_times must be ascending");
    const long k = static_cast<long>(std::floor(record_times[i] * n));
    if (k > steps)
      throw ParameterError("run_stream: record time beyond the stream horizon");
    targets.push_back(k);
  }

  TrialTrajectory out;
  out.times = record_times;
  out.cosines.resize(static_cast<Eigen::Index>(record_times.size()), model.d);
  if (store_q) out.q_matrices.reserve(record_times.size());

  PackedSample sample;
  size_t next = 0;
  for (long k = 0; k <= steps; ++k) {
    while (next < targets.size() && targets[next] == k) {
      const CosineSimilarity cs = cosine_similarity(model.basis, tracker.estimate());
      out.cosines.row(static_cast<Eigen::Index>(next)) = cs.cosines.transpose();
      if (store_q) out.q_matrices.push_back(cs.q);
      ++next;
    }
    if (k == steps) break;
    sample_packed(model, k, rng, sample);
    tracker.step(sample);
  }
  out.steps = tracker.steps_taken();
  out.skips = tracker.skips();
  return out;
}

}  // namespace subspace

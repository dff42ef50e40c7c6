#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "subspace/linalg.hpp"
#include "subspace/trackers.hpp"
#include "testutil.hpp"

using namespace subspace;
using testutil::max_abs_diff;

namespace {

MatrixRM unit_vector6() {
  MatrixRM x(6, 1);
  x << 0.6, 0.0, 0.48, 0.0, 0.64, 0.0;  // unit norm
  return x;
}

PackedSample fixed_sample6() {
  PackedSample s;
  s.observed = {0, 2, 4, 5};
  s.y_obs = {0.9, -0.2, 0.5, 0.3};
  s.k = 0;
  return s;
}

TrackerParams base_params(double tau, double alpha = 0.5) {
  TrackerParams p;
  p.tau = StepSchedule::constant(tau);
  p.alpha = alpha;
  p.eps = alpha / 2.0;
  return p;
}

}  // namespace

TEST_CASE("oja_step: zero step size leaves the estimate unchanged") {
  Tracker t(Algo::kOja, unit_vector6(), base_params(0.0));
  const MatrixRM before = t.raw_basis();
  t.step(fixed_sample6());
  CHECK(t.steps_taken() == 1);
  CHECK(t.skips() == 0);
  CHECK(max_abs_diff(t.raw_basis(), before) < 1e-12);
}

TEST_CASE("oja_step: empty mask only advances counters") {
  Tracker t(Algo::kOja, unit_vector6(), base_params(1.0));
  const MatrixRM before = t.raw_basis();
  PackedSample s;
  s.k = 0;
  t.step(s);
  CHECK(t.steps_taken() == 1);
  CHECK(t.skips() == 1);
  CHECK(max_abs_diff(t.raw_basis(), before) == 0.0);
}

TEST_CASE("oja_step: d=1 update matches the scalar arithmetic oracle") {
  const MatrixRM x0 = unit_vector6();
  Tracker t(Algo::kOja, x0, base_params(1.0));
  const PackedSample s = fixed_sample6();
  t.step(s);

  // oracle: explicit arithmetic on the masked scalar problem
  double z = 0, q = 0;
  for (size_t i = 0; i < s.observed.size(); ++i) {
    z += x0(s.observed[i], 0) * x0(s.observed[i], 0);
    q += x0(s.observed[i], 0) * s.y_obs[i];
  }
  REQUIRE(z > 0.25);  // guard passes
  const double w = q / z;
  Vector yhat(6);
  for (int i = 0; i < 6; ++i) yhat(i) = x0(i, 0) * w;  // imputed part
  for (size_t i = 0; i < s.observed.size(); ++i) yhat(s.observed[i]) = s.y_obs[i];
  Vector xt = Vector(x0.col(0)) + (1.0 / 6.0) * yhat * w;
  xt /= xt.norm();
  CHECK((Vector(t.raw_basis().col(0)) - xt).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oja_step: post-update Gram guard skips degenerate updates") {
  const MatrixRM x0 = unit_vector6();
  // With y = -x on the observed rows, w = -1 and yhat = -x, so
  // Xtilde = (1 + tau/6) X. A (legal, bounded) negative step tau = -5.8
  // shrinks the Gram to (1/30)^2, far below eps' = 0.1.
  PackedSample s;
  s.observed = {0, 2, 4};
  s.y_obs = {-x0(0, 0), -x0(2, 0), -x0(4, 0)};
  TrackerParams p = base_params(-5.8);
  p.eps = 0.25;
  Tracker t(Algo::kOja, x0, p);
  t.step(s);
  CHECK(t.skips() == 1);
  CHECK(max_abs_diff(t.raw_basis(), x0) == 0.0);
}

TEST_CASE("grouse_step: zero residual is a no-op") {
  const MatrixRM x0 = unit_vector6();
  Tracker t(Algo::kGrouse, x0, base_params(1.0));
  PackedSample s;
  s.observed = {0, 2, 4};
  // y = Omega X w for w = 2: residual is exactly zero
  s.y_obs = {2.0 * x0(0, 0), 2.0 * x0(2, 0), 2.0 * x0(4, 0)};
  t.step(s);
  CHECK(max_abs_diff(t.raw_basis(), x0) == 0.0);  // skip counted, X frozen
  CHECK(t.skips() == 1);
}

TEST_CASE("grouse_step: zero step size leaves X unchanged") {
  Tracker t(Algo::kGrouse, unit_vector6(), base_params(0.0));
  const MatrixRM before = t.raw_basis();
  t.step(fixed_sample6());
  CHECK(t.skips() == 0);
  CHECK(max_abs_diff(t.raw_basis(), before) < 1e-14);
}

TEST_CASE("grouse_step: d=1 rotation matches the closed-form oracle") {
  const MatrixRM x0 = unit_vector6();
  Tracker t(Algo::kGrouse, x0, base_params(1.0));
  const PackedSample s = fixed_sample6();
  t.step(s);

  double z = 0, q = 0;
  for (size_t i = 0; i < s.observed.size(); ++i) {
    z += x0(s.observed[i], 0) * x0(s.observed[i], 0);
    q += x0(s.observed[i], 0) * s.y_obs[i];
  }
  const double w = q / z;
  Vector p = Vector(x0.col(0)) * w;
  const double pnorm = p.norm();
  Vector r = Vector::Zero(6);
  double r2 = 0;
  for (size_t i = 0; i < s.observed.size(); ++i) {
    r(s.observed[i]) = s.y_obs[i] - p(s.observed[i]);
    r2 += r(s.observed[i]) * r(s.observed[i]);
  }
  const double rnorm = std::sqrt(r2);
  const double theta = (1.0 / 6.0) * rnorm * pnorm;
  const double sgn = w > 0 ? 1.0 : -1.0;
  Vector expected = Vector(x0.col(0)) +
                    ((std::cos(theta) - 1.0) / pnorm * p +
                     std::sin(theta) / rnorm * r) * sgn;
  CHECK((Vector(t.raw_basis().col(0)) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(t.raw_basis().col(0).norm() - 1.0) < 1e-12);
}

TEST_CASE("petrels_step: empty mask freezes X and R") {
  TrackerParams p = base_params(0.0);
  p.mu = 5.0;
  p.delta = 10.0;
  Tracker t(Algo::kPetrels, unit_vector6(), p);
  const MatrixRM bx = t.raw_basis();
  const Matrix br = t.gain();
  PackedSample s;
  t.step(s);
  CHECK(t.skips() == 1);
  CHECK(max_abs_diff(t.raw_basis(), bx) == 0.0);
  CHECK(max_abs_diff(t.gain(), br) == 0.0);
}

TEST_CASE("petrels_step: R update agrees with the direct inverse (debug mode)") {
  Rng rng(33);
  const int n = 40, d = 3;
  MatrixRM u = generate_subspace(n, d, rng);
  SubspaceModel m;
  m.n = n;
  m.d = d;
  m.basis = u;
  m.lambdas = Vector::Constant(d, 2.0);
  m.sigma = 1.0;
  m.alpha = 0.6;
  TrackerParams p = base_params(0.0, 0.6);
  p.mu = 2.0;
  p.delta = 5.0;
  p.debug_checks = true;  // throws if the Woodbury form drifts
  Tracker t(Algo::kPetrels, correlated_init(u, 0.6, rng), p);
  PackedSample s;
  for (long k = 0; k < 200; ++k) {
    sample_packed(m, k, rng, s);
    CHECK_NOTHROW(t.step(s));
  }
  // R stays symmetric positive definite
  const Matrix r = t.gain();
  CHECK(max_abs_diff(r, r.transpose()) < 1e-9);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
  CHECK(eig.eigenvalues()(0) > 0.0);
}

TEST_CASE("petrels_step: d=1 scalar recursion oracle with mu=5, delta=10") {
  const MatrixRM x0 = unit_vector6();
  TrackerParams p = base_params(0.0);
  p.mu = 5.0;
  p.delta = 10.0;
  Tracker t(Algo::kPetrels, x0, p);
  const PackedSample s = fixed_sample6();
  t.step(s);

  // scalar oracle
  const double n = 6.0;
  double r = 10.0 / n;
  double z = 0, q = 0;
  for (size_t i = 0; i < s.observed.size(); ++i) {
    z += x0(s.observed[i], 0) * x0(s.observed[i], 0);
    q += x0(s.observed[i], 0) * s.y_obs[i];
  }
  const double w = q / z;
  Vector x = x0.col(0);
  for (size_t i = 0; i < s.observed.size(); ++i) {
    const int idx = s.observed[i];
    x(idx) += (s.y_obs[i] - x(idx) * w) * w * r;
  }
  const double gamma = 1.0 - 5.0 / n;
  const double v = r * w / gamma;
  const double beta = 1.0 + 0.5 * w * v;
  const double r_next = r / gamma - 0.5 * v * v / beta;

  CHECK((Vector(t.raw_basis().col(0)) - x).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(t.gain()(0, 0) == doctest::Approx(r_next).epsilon(1e-14));
}

TEST_CASE("estimate: Oja returns X, PETRELS removes scale") {
  Rng rng(41);
  MatrixRM u = generate_subspace(12, 2, rng);
  Tracker oja(Algo::kOja, u, base_params(0.5));
  CHECK(max_abs_diff(oja.estimate(), u) == 0.0);

  TrackerParams p = base_params(0.0);
  Tracker pet(Algo::kPetrels, MatrixRM(3.0 * u), p);
  CHECK(max_abs_diff(pet.estimate(), u) < 1e-10);
  const MatrixRM est = pet.estimate();
  CHECK(max_abs_diff(est.transpose() * est, Matrix::Identity(2, 2)) < 1e-10);
}

TEST_CASE("run_stream: zero steps records only t = 0") {
  Rng rng(50);
  SubspaceModel m;
  m.n = 30;
  m.d = 2;
  m.basis = generate_subspace(30, 2, rng);
  m.lambdas = Vector::Constant(2, 2.0);
  m.sigma = 1.0;
  m.alpha = 0.5;
  Tracker t(Algo::kGrouse, correlated_init(m.basis, 0.5, rng), base_params(0.5));
  auto traj = run_stream(t, m, 0, {0.0}, rng);
  REQUIRE(traj.times.size() == 1);
  CHECK(traj.times[0] == 0.0);
}

TEST_CASE("run_stream: noiseless full observation from X0 = U is a fixed point") {
  for (Algo algo : {Algo::kOja, Algo::kGrouse, Algo::kPetrels}) {
    Rng rng(60);
    SubspaceModel m;
    m.n = 60;
    m.d = 2;
    m.basis = generate_subspace(60, 2, rng);
    m.lambdas = Vector::Constant(2, 3.0);
    m.sigma = 1e-155;  // effectively noiseless while keeping sigma > 0
    m.alpha = 1.0 - 1e-12;
    TrackerParams p = base_params(0.5, m.alpha);
    p.mu = 2.0;
    p.delta = 10.0;
    Tracker t(algo, m.basis, p);
    auto traj = run_stream(t, m, 120, {0.0, 1.0, 2.0}, rng);
    for (Eigen::Index i = 0; i < traj.cosines.rows(); ++i)
      for (Eigen::Index j = 0; j < traj.cosines.cols(); ++j)
        CHECK(traj.cosines(i, j) > 1.0 - 1e-8);
  }
}

TEST_CASE("run_stream: deterministic given (seed, config)") {
  auto run_once = [] {
    Rng rng = Rng::for_trial(123, 0);
    SubspaceModel m;
    m.n = 100;
    m.d = 2;
    m.basis = generate_subspace(100, 2, rng);
    m.lambdas = Vector::Constant(2, 2.5);
    m.sigma = 1.0;
    m.alpha = 0.5;
    Tracker t(Algo::kOja, correlated_init(m.basis, 0.5, rng), base_params(0.5));
    return run_stream(t, m, 200, {0.0, 1.0, 2.0}, rng);
  };
  auto a = run_once(), b = run_once();
  for (Eigen::Index i = 0; i < a.cosines.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cosines.cols(); ++j)
      CHECK(a.cosines(i, j) == b.cosines(i, j));
}

TEST_CASE("run_stream: skip fraction stays under 1% for eps < alpha") {
  for (Algo algo : {Algo::kOja, Algo::kGrouse, Algo::kPetrels}) {
    Rng rng = Rng::for_trial(7, 1);
    SubspaceModel m;
    m.n = 500;
    m.d = 2;
    m.basis = generate_subspace(500, 2, rng);
    m.lambdas = Vector(2);
    m.lambdas << 4.0, 2.0;
    m.sigma = 1.0;
    m.alpha = 0.5;
    TrackerParams p = base_params(0.5);
    p.mu = 2.0;
    p.delta = 10.0;
    Tracker t(algo, correlated_init(m.basis, 0.5, rng), p);
    auto traj = run_stream(t, m, 500, {1.0}, rng);
    CHECK(static_cast<double>(traj.skips) / 500.0 <= 0.01);
  }
}

TEST_CASE("orthonormality drift stays below 1e-8 for Oja and GROUSE") {
  for (Algo algo : {Algo::kOja, Algo::kGrouse}) {
    Rng rng = Rng::for_trial(11, 2);
    SubspaceModel m;
    m.n = 300;
    m.d = 3;
    m.basis = generate_subspace(300, 3, rng);
    m.lambdas = Vector(3);
    m.lambdas << 5.0, 4.0, 3.0;
    m.sigma = 1.0;
    m.alpha = 0.5;
    TrackerParams p = base_params(0.5);
    p.reorth_every = 1000;
    Tracker t(algo, correlated_init(m.basis, 0.5, rng), p);
    PackedSample s;
    for (long k = 0; k < 3000; ++k) {
      sample_packed(m, k, rng, s);
      t.step(s);
      if (k % 500 == 0) {
        const Matrix gram = t.raw_basis().transpose() * t.raw_basis();
        CHECK(max_abs_diff(gram, Matrix::Identity(3, 3)) <= 1e-8);
      }
    }
  }
}

TEST_CASE("Oja and GROUSE track each other on identical data streams") {
  // Asymptotic equivalence at desk scale: identical seeds, mean gap <= 0.05.
  const int trials = 50;
  const int n = 2000;
  Matrix gaps = Matrix::Zero(trials, 2);  // record times {0.5, 1.0}
  Matrix oja_cos = Matrix::Zero(trials, 2), grouse_cos = Matrix::Zero(trials, 2);
  for (int trial = 0; trial < trials; ++trial) {
    Matrix cos_by_algo[2];
    for (int a = 0; a < 2; ++a) {
      Rng rng = Rng::for_trial(202, trial);
      SubspaceModel m;
      m.n = n;
      m.d = 1;
      m.basis = generate_subspace(n, 1, rng);
      m.lambdas = Vector::Constant(1, 5.0);
      m.sigma = 1.0;
      m.alpha = 0.5;
      Tracker t(a == 0 ? Algo::kOja : Algo::kGrouse,
                correlated_init(m.basis, 0.5, rng), base_params(0.5));
      auto traj = run_stream(t, m, n, {0.5, 1.0}, rng);
      cos_by_algo[a] = traj.cosines;
    }
    gaps(trial, 0) = cos_by_algo[0](0, 0) - cos_by_algo[1](0, 0);
    gaps(trial, 1) = cos_by_algo[0](1, 0) - cos_by_algo[1](1, 0);
    oja_cos.row(trial) = cos_by_algo[0].transpose();
    grouse_cos.row(trial) = cos_by_algo[1].transpose();
  }
  CHECK(std::abs(gaps.col(0).mean()) <= 0.05);
  CHECK(std::abs(gaps.col(1).mean()) <= 0.05);
  // and the two mean curves sit within overlapping 2-SEM bands
  for (int t = 0; t < 2; ++t) {
    auto sem = [&](const Matrix& m) {
      const double mean = m.col(t).mean();
      double var = 0.0;
      for (int r = 0; r < trials; ++r)
        var += (m(r, t) - mean) * (m(r, t) - mean);
      return std::sqrt(var / (trials - 1) / trials);
    };
    const double sep = std::abs(oja_cos.col(t).mean() - grouse_cos.col(t).mean());
    CHECK(sep <= 2.0 * (sem(oja_cos) + sem(grouse_cos)));
  }
}

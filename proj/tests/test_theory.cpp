#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "subspace/rng.hpp"
#include "subspace/theory.hpp"
#include "testutil.hpp"

using namespace subspace;
using namespace subspace::theory;
using testutil::max_abs_diff;

namespace {

OdeParams scalar_params(double lambda, double sigma, double alpha, double tau,
                        double mu = 0.0) {
  OdeParams p;
  p.lambdas = Vector::Constant(1, lambda);
  p.sigma = sigma;
  p.alpha = alpha;
  p.tau = StepSchedule::constant(tau);
  p.mu = mu;
  return p;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST_CASE("rhs_F vanishes at Q = 0 and at G = 0") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  p.lambdas = Vector(3);
  p.lambdas << 5, 4, 3;
  Rng rng(1);
  Matrix g = Matrix::Identity(3, 3) * 0.7;
  CHECK(rhs_F(Matrix::Zero(3, 3), g, p).cwiseAbs().maxCoeff() == 0.0);
  Matrix q = Matrix::Identity(3, 3) * 0.4;
  CHECK(rhs_F(q, Matrix::Zero(3, 3), p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rhs_F scalar oracle") {
  // d=1, Q=0.5, G=0.5, alpha=0.5, lambda=5, sigma=1:
  //   [12.5*0.5 - 0.5*0.5*0.5 - 0.5*1.25*0.5*12.5*0.5] * 0.5
  // = (6.25 - 0.125 - 1.953125) * 0.5 = 2.0859375
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  const double f = rhs_F(scalar(0.5), scalar(0.5), p)(0, 0);
  CHECK(f == doctest::Approx(2.0859375).epsilon(1e-15));
}

TEST_CASE("rhs_H vanishes at G = 0 and matches the scalar oracle") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 5.0);
  CHECK(rhs_H(scalar(0.5), scalar(0.0), p).cwiseAbs().maxCoeff() == 0.0);
  // H = 0.5 [5 - 0.5*1.5*(0.25*12.5 + 1)] = 0.953125
  const double h = rhs_H(scalar(0.5), scalar(0.5), p)(0, 0);
  CHECK(h == doctest::Approx(0.953125).epsilon(1e-15));
}

TEST_CASE("rhs_H root at Q = 0 solves G(sigma^2 G + 1) sigma^2 = mu") {
  OdeParams p = scalar_params(2.0, 1.3, 0.4, 0.0, 3.0);
  const double s2 = p.sigma * p.sigma;
  // root of s2 G (s2 G + 1) = mu
  const double x = (-1.0 + std::sqrt(1.0 + 4.0 * p.mu)) / 2.0;
  const double g_root = x / s2;
  CHECK(std::abs(rhs_H(scalar(0.0), scalar(g_root), p)(0, 0)) < 1e-12);
}

TEST_CASE("rhs_petrels_full scalar oracle and structure") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 5.0);
  auto d = rhs_petrels_full(scalar(1.0), scalar(0.5), scalar(1.0), p);
  CHECK(d.da(0, 0) == doctest::Approx(-0.875).epsilon(1e-15));
  CHECK(d.dk(0, 0) == doctest::Approx(4.6875).epsilon(1e-15));
  CHECK(d.dw(0, 0) == doctest::Approx(4.125).epsilon(1e-15));
}

TEST_CASE("rhs_petrels_full: J2 vanishes at K = 0, J3 symmetric PSD") {
  OdeParams p;
  p.lambdas = Vector(3);
  p.lambdas << 4, 3, 2;
  p.sigma = 1.2;
  p.alpha = 0.4;
  p.mu = 2.0;
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix b1 = Matrix::NullaryExpr(3, 3, [&] { return rng.normal(); });
    Matrix b2 = Matrix::NullaryExpr(3, 3, [&] { return rng.normal(); });
    Matrix k = Matrix::NullaryExpr(3, 3, [&] { return 0.3 * rng.normal(); });
    Matrix a = b1 * b1.transpose() + 0.5 * Matrix::Identity(3, 3);
    Matrix w = b2 * b2.transpose() + 0.5 * Matrix::Identity(3, 3);
    auto dz = rhs_petrels_full(a, Matrix::Zero(3, 3), w, p);
    CHECK(dz.dk.cwiseAbs().maxCoeff() == 0.0);
    auto d = rhs_petrels_full(a, k, w, p);
    CHECK(max_abs_diff(d.dw, d.dw.transpose()) < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(d.dw);
    CHECK(eig.eigenvalues()(0) > -1e-12);
  }
}

TEST_CASE("rhs_petrels_full rejects singular A or W") {
  OdeParams p = scalar_params(2.0, 1.0, 0.5, 0.0, 1.0);
  CHECK_THROWS_AS(rhs_petrels_full(scalar(0.0), scalar(0.5), scalar(1.0), p),
                  SingularMatrixError);
  CHECK_THROWS_AS(rhs_petrels_full(scalar(1.0), scalar(0.5), scalar(0.0), p),
                  SingularMatrixError);
}

TEST_CASE("rk4_path: zero rhs holds the state constant") {
  auto path = rk4_path([](double, const Vector& y) { return Vector::Zero(y.size()); },
                       Vector::Constant(2, 1.5), 0.0, 2.0, 1e-2, 0.5);
  for (const auto& [t, y] : path) CHECK(y(0) == 1.5);
  CHECK(path.back().first == 2.0);
}

TEST_CASE("rk4_path: dq/dt = -q reproduces the exponential") {
  auto path = rk4_path(
      [](double, const Vector& y) -> Vector { return -y; },
      Vector::Constant(1, 1.0), 0.0, 1.0, 1e-3, 1.0);
  CHECK(path.back().second(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));
}

TEST_CASE("rk4_path shows fourth-order convergence") {
  auto err_at = [](double h) {
    auto path = rk4_path([](double, const Vector& y) -> Vector { return -y; },
                         Vector::Constant(1, 1.0), 0.0, 1.0, h, 1.0);
    return std::abs(path.back().second(0) - std::exp(-1.0));
  };
  const double e1 = err_at(0.1);
  const double e2 = err_at(0.05);
  CHECK(e1 / e2 >= 12.0);  // nominal 16
}

TEST_CASE("closed form: t = 0 and tau = 0 return P(0)") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  Matrix p0(2, 2);
  p0 << 4.0, 0.5, 0.5, 3.0;
  OdeParams p2 = p;
  p2.lambdas = Vector(2);
  p2.lambdas << 5, 4;
  CHECK(max_abs_diff(oja_grouse_closed_form(p0, p2, 0.0), p0) < 1e-14);
  OdeParams pz = p2;
  pz.tau = StepSchedule::constant(0.0);
  CHECK(max_abs_diff(oja_grouse_closed_form(p0, pz, 7.0), p0) < 1e-14);
}

TEST_CASE("closed form: steady state matches 1/P(inf) = 0.784") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  const Matrix pt = oja_grouse_closed_form(scalar(4.0), p, 200.0);
  CHECK(1.0 / pt(0, 0) == doctest::Approx(24.5 / 31.25).epsilon(1e-12));
  CHECK(steady_state_cos2(5.0, p) == doctest::Approx(0.784).epsilon(1e-12));
}

TEST_CASE("closed form agrees with RK4 on the P-ODE (exponent sign oracle)") {
  // This pins the sign of the exponent in z_l(t): the bounded variant is the
  // one that reproduces the ODE dP/dt = A - PB - BP.
  Rng rng(17);
  OdeParams p;
  p.lambdas = Vector(3);
  p.lambdas << 5, 4, 3;
  p.sigma = 1.0;
  p.alpha = 0.5;
  p.tau = StepSchedule::constant(0.5);
  Matrix b = Matrix::NullaryExpr(3, 3, [&] { return rng.normal(); });
  Matrix p0 = b * b.transpose() + 2.0 * Matrix::Identity(3, 3);
  auto rhs = [&](double t, const Vector& y) -> Vector {
    const Matrix pm = Eigen::Map<const Matrix>(y.data(), 3, 3);
    const Matrix d = rhs_P(t, pm, p);
    return Eigen::Map<const Vector>(d.data(), 9);
  };
  Vector y0 = Eigen::Map<const Vector>(p0.data(), 9);
  auto path = rk4_path(rhs, y0, 0.0, 10.0, 1e-3, 1.0);
  for (const auto& [t, y] : path) {
    const Matrix ode_p = Eigen::Map<const Matrix>(y.data(), 3, 3);
    const Matrix cf = oja_grouse_closed_form(p0, p, t);
    CHECK(max_abs_diff(ode_p, cf) < 1e-6);
  }
}

TEST_CASE("closed form general quadrature specializes to the constant form") {
  OdeParams p;
  p.lambdas = Vector(2);
  p.lambdas << 4, 2;
  p.sigma = 1.0;
  p.alpha = 0.5;
  p.tau = StepSchedule::constant(0.4);
  Matrix p0(2, 2);
  p0 << 5.0, 1.0, 1.0, 6.0;
  const Matrix general = oja_grouse_closed_form_general(p0, p, 2.0, 400);
  const Matrix constant = oja_grouse_closed_form(p0, p, 2.0);
  CHECK(max_abs_diff(general, constant) < 1e-8);

  OdeParams pz = p;
  pz.tau = StepSchedule::from_function([](double) { return 0.0; });
  CHECK(max_abs_diff(oja_grouse_closed_form_general(p0, pz, 3.0, 100), p0) < 1e-12);
}

TEST_CASE("closed form general handles a decaying schedule (RK4 oracle)") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  p.tau = StepSchedule::from_function([](double t) { return 0.5 / (1.0 + t); });
  const Matrix p0 = scalar(4.0);
  auto rhs = [&](double t, const Vector& y) -> Vector {
    return Vector::Constant(1, rhs_P(t, scalar(y(0)), p)(0, 0));
  };
  auto path = rk4_path(rhs, Vector::Constant(1, 4.0), 0.0, 2.0, 1e-4, 2.0);
  const Matrix cf = oja_grouse_closed_form_general(p0, p, 2.0, 2000);
  CHECK(std::abs(cf(0, 0) - path.back().second(0)) < 1e-5);
}

TEST_CASE("steady_state_cos2 limits and threshold behavior") {
  OdeParams p0 = scalar_params(3.0, 1.0, 0.5, 0.0);
  CHECK(steady_state_cos2(3.0, p0) == doctest::Approx(1.0));
  // below threshold: 2 alpha lambda^2 = 0.4 < tau sigma^4 = 0.5
  OdeParams pb = scalar_params(std::sqrt(0.4), 1.0, 0.5, 0.5);
  CHECK(steady_state_cos2(pb.lambdas(0), pb) == 0.0);
}

TEST_CASE("oja_grouse_critical_tau oracle values") {
  OdeParams p;
  p.lambdas = Vector(4);
  p.lambdas << 5, 4, 3, 2;
  p.sigma = 1.0;
  p.alpha = 0.5;
  CHECK(oja_grouse_critical_tau(p) == doctest::Approx(4.0).epsilon(1e-14));

  OdeParams p2 = scalar_params(5.0, std::sqrt(std::sqrt(100.0)), 0.5, 0.0);
  CHECK(oja_grouse_critical_tau(p2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("alpha-Lambda^2 equivalence holds across the theory surface") {
  OdeParams a = scalar_params(5.0, 1.0, 0.5, 0.5, 5.0);
  OdeParams b = scalar_params(5.0 * std::sqrt(2.0), 1.0, 0.25, 0.5, 5.0);
  const Matrix q = scalar(0.37), g = scalar(0.81);
  CHECK(std::abs(rhs_F(q, g, a)(0, 0) - rhs_F(q, g, b)(0, 0)) < 1e-12);
  CHECK(std::abs(rhs_H(q, g, a)(0, 0) - rhs_H(q, g, b)(0, 0)) < 1e-12);
  auto da = rhs_petrels_full(scalar(1.1), scalar(0.4), scalar(1.2), a);
  auto db = rhs_petrels_full(scalar(1.1), scalar(0.4), scalar(1.2), b);
  CHECK(std::abs(da.da(0, 0) - db.da(0, 0)) < 1e-12);
  CHECK(std::abs(da.dk(0, 0) - db.dk(0, 0)) < 1e-12);
  CHECK(std::abs(da.dw(0, 0) - db.dw(0, 0)) < 1e-12);
  CHECK(std::abs(oja_grouse_critical_tau(a) - oja_grouse_critical_tau(b)) < 1e-12);
  CHECK(std::abs(petrels_critical_mu(a.lambdas(0), a) -
                 petrels_critical_mu(b.lambdas(0), b)) < 1e-12);
  CHECK(std::abs(steady_state_cos2(a.lambdas(0), a) -
                 steady_state_cos2(b.lambdas(0), b)) < 1e-12);
  const Matrix cfa = oja_grouse_closed_form(scalar(4.0), a, 1.7);
  const Matrix cfb = oja_grouse_closed_form(scalar(4.0), b, 1.7);
  CHECK(max_abs_diff(cfa, cfb) < 1e-12);
}

TEST_CASE("petrels_critical_mu oracle values") {
  // alpha lambda^2 / sigma^2 = 1 -> 2.5^2 - 0.25 = 6
  OdeParams p1 = scalar_params(std::sqrt(2.0), 1.0, 0.5, 0.0, 1.0);
  CHECK(petrels_critical_mu(p1.lambdas(0), p1) == doctest::Approx(6.0).epsilon(1e-14));
  OdeParams p2 = scalar_params(5.0, 1.0, 0.5, 0.0, 1.0);
  CHECK(petrels_critical_mu(5.0, p2) == doctest::Approx(650.0).epsilon(1e-14));
  // alpha lambda^2 -> 0 collapses the threshold to zero
  OdeParams p3 = scalar_params(1e-12, 1.0, 0.5, 0.0, 1.0);
  CHECK(petrels_critical_mu(p3.lambdas(0), p3) == doctest::Approx(0.0).epsilon(1e-10));
  OdeParams pd;
  pd.lambdas = Vector::Constant(2, 1.0);
  CHECK_THROWS_AS(petrels_critical_mu(1.0, pd), DimensionError);
}

TEST_CASE("petrels_fixed_point: uninformative root solves G(G+1) = mu at sigma = 1") {
  OdeParams p = scalar_params(1.0, 1.0, 0.5, 0.0, 6.0);
  // critical mu = (2*0.5*1/1 + 0.5)^2 - 0.25 = 2  < 6 -> uninformative
  auto fp = petrels_fixed_point(p);
  CHECK_FALSE(fp.informative);
  CHECK(fp.q2 == 0.0);
  CHECK(fp.g == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("petrels_fixed_point just below threshold is barely informative") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 650.0 - 1e-9);
  auto fp = petrels_fixed_point(p);
  CHECK(fp.informative);
  CHECK(fp.q2 >= 0.0);
  CHECK(fp.q2 < 1e-3);
}

TEST_CASE("petrels_fixed_point matches the long-time limit of the (Q^2, G) ODE") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 5.0);
  auto fp = petrels_fixed_point(p);
  REQUIRE(fp.informative);
  auto rhs = [&](double, const Vector& y) -> Vector {
    return rhs_q2g(Eigen::Vector2d(y(0), y(1)), p);
  };
  Vector y0(2);
  y0 << 0.25, 10.0;
  auto path = rk4_path(rhs, y0, 0.0, 60.0, 1e-3, 60.0);
  CHECK(std::abs(path.back().second(0) - fp.q2) < 1e-4);
  CHECK(std::abs(path.back().second(1) - fp.g) < 1e-4);
}

TEST_CASE("predicted_cosines across state variants") {
  OdeState s1{OjaGrouseState{Matrix::Identity(3, 3)}, 0.0};
  CHECK(predicted_cosines(s1).minCoeff() == doctest::Approx(1.0));
  OdeState s2{OjaGrouseState{Matrix::Zero(3, 3)}, 0.0};
  CHECK(predicted_cosines(s2).maxCoeff() == 0.0);
  OdeState s3{PetrelsFullState{Matrix::Identity(2, 2), 0.5 * Matrix::Identity(2, 2),
                               Matrix::Identity(2, 2)},
              0.0};
  CHECK(predicted_cosines(s3)(0) == doctest::Approx(0.5));
  CHECK(predicted_cosines(s3)(1) == doctest::Approx(0.5));
}

TEST_CASE("integrate: Q(0) = 0 stays exactly at zero") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.5);
  OdeState s0{OjaGrouseState{Matrix::Zero(1, 1)}, 0.0};
  auto path = integrate(p, s0, 5.0, 1e-2, 1.0);
  for (const auto& st : path)
    CHECK(std::get<OjaGrouseState>(st.value).q(0, 0) == 0.0);
}

TEST_CASE("integrate: closed form vs RK4 on the Q-ODE at d = 2") {
  OdeParams p;
  p.lambdas = Vector(2);
  p.lambdas << 5, 3;
  p.sigma = 1.0;
  p.alpha = 0.5;
  p.tau = StepSchedule::constant(0.5);
  OdeState s0{OjaGrouseState{0.5 * Matrix::Identity(2, 2)}, 0.0};
  auto path = integrate(p, s0, 3.0, 1e-3, 1.0);
  const Matrix p0 = 4.0 * Matrix::Identity(2, 2);
  for (const auto& st : path) {
    const Vector from_ode = predicted_cosines(st);
    const Vector from_cf = cosines_from_p(oja_grouse_closed_form(p0, p, st.t));
    CHECK((from_ode - from_cf).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("integrate: reduced and full PETRELS representations agree (d = 1)") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 5.0);
  const double q0 = 0.5, delta = 10.0;
  OdeState full{PetrelsFullState{scalar(1.0 / delta), scalar(q0), scalar(1.0)}, 0.0};
  OdeState reduced{PetrelsReducedState{scalar(q0), scalar(delta)}, 0.0};
  auto pf = integrate(p, full, 10.0, 1e-3, 0.5);
  auto pr = integrate(p, reduced, 10.0, 1e-3, 0.5);
  REQUIRE(pf.size() == pr.size());
  for (size_t i = 0; i < pf.size(); ++i) {
    const Vector cf = predicted_cosines(pf[i]);
    const Vector cr = predicted_cosines(pr[i]);
    CHECK((cf - cr).cwiseAbs().maxCoeff() < 1e-6);
  }
  // W never drops below W(0) in the PSD order (scalar here)
  for (const auto& st : pf)
    CHECK(std::get<PetrelsFullState>(st.value).w(0, 0) >= 1.0 - 1e-12);
}

TEST_CASE("integrate reports a breakdown time when W loses definiteness") {
  OdeParams p = scalar_params(5.0, 1.0, 0.5, 0.0, 5.0);
  OdeState s0{PetrelsFullState{scalar(1.0), scalar(0.5), scalar(1e-13)}, 0.0};
  try {
    integrate(p, s0, 1.0, 1e-2, 1.0);
    FAIL("expected IntegrationBreakdown");
  } catch (const IntegrationBreakdown& e) {
    CHECK(e.t == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("integrate rejects a non-diagonal reduced state") {
  OdeParams p;
  p.lambdas = Vector(2);
  p.lambdas << 3, 2;
  p.sigma = 1.0;
  p.alpha = 0.5;
  p.mu = 2.0;
  Matrix q(2, 2);
  q << 0.5, 0.1, 0.0, 0.5;
  OdeState s0{PetrelsReducedState{q, Matrix::Identity(2, 2)}, 0.0};
  CHECK_THROWS_AS(integrate(p, s0, 1.0, 1e-2, 1.0), ParameterError);
}

TEST_CASE("steady state of the integrated Q-ODE matches the formula per direction") {
  OdeParams p;
  p.lambdas = Vector(3);
  p.lambdas << 5, 4, 3;
  p.sigma = 1.0;
  p.alpha = 0.5;
  p.tau = StepSchedule::constant(0.5);
  OdeState s0{OjaGrouseState{0.5 * Matrix::Identity(3, 3)}, 0.0};
  auto path = integrate(p, s0, 50.0, 1e-3, 50.0);
  const Vector cos_end = predicted_cosines(path.back());
  for (int l = 0; l < 3; ++l) {
    const double expected = std::sqrt(steady_state_cos2(p.lambdas(l), p));
    CHECK(std::abs(cos_end(l) - expected) < 1e-3);
  }
}

#pragma once

#include <functional>
#include <utility>
#include <variant>
#include <vector>

#include "subspace/schedule.hpp"
#include "subspace/types.hpp"

namespace subspace::theory {

/// Parameters of the deterministic scaling limits.
struct OdeParams {
  Vector lambdas;
  double sigma = 1.0;
  double alpha = 0.5;
  StepSchedule tau;  // Oja / GROUSE step-size schedule
  double mu = 0.0;   // PETRELS rescaled discount

  int d() const { return static_cast<int>(lambdas.size()); }
  /// alpha * lambda_l^2; the ODEs depend on alpha and Lambda only through
  /// this product.
  Vector alpha_lambda2() const { return alpha * lambdas.array().square().matrix(); }
};

struct IntegrationBreakdown : std::runtime_error {
  IntegrationBreakdown(const std::string& what, double when)
      : std::runtime_error(what), t(when) {}
  double t;
};

// --- right-hand sides -------------------------------------------------

/// F(Q,G) = [alpha L^2 Q - (sigma^4/2) Q G - Q (I + (sigma^2/2) G) Q^T alpha L^2 Q] G
Matrix rhs_F(const Matrix& q, const Matrix& g, const OdeParams& p);

/// H(Q,G) = G [mu - G (sigma^2 G + I) (Q^T alpha L^2 Q + sigma^2 I)]
Matrix rhs_H(const Matrix& q, const Matrix& g, const OdeParams& p);

struct PetrelsFullDeriv {
  Matrix da, dk, dw;
};

/// The coupled (A, K, W) system: dA = J1, dK = J2, dW = J3.
PetrelsFullDeriv rhs_petrels_full(const Matrix& a, const Matrix& k,
                                  const Matrix& w, const OdeParams& p);

/// dP/dt = A(t) - P B(t) - B(t) P for P = (Q Q^T)^{-1}; kept as an
/// independent right-hand side so the closed form below has a same-variable
/// numerical oracle.
Matrix rhs_P(double t, const Matrix& pmat, const OdeParams& p);

/// d=1 (Q^2, G) system used for phase portraits; y = (q2, g).
Eigen::Vector2d rhs_q2g(const Eigen::Vector2d& y, const OdeParams& p);

// --- states and the integrator ----------------------------------------

struct OjaGrouseState {
  Matrix q;
};
struct PetrelsReducedState {
  Matrix q;  // diagonal
  Matrix g;  // diagonal
};
struct PetrelsFullState {
  Matrix a, k, w;
};

struct OdeState {
  std::variant<OjaGrouseState, PetrelsReducedState, PetrelsFullState> value;
  double t = 0.0;
};

/// Principal cosines predicted by a theory state, sorted descending:
/// singular values of Q, or of K W^{-1/2} for the full PETRELS state.
Vector predicted_cosines(const OdeState& state);

/// Classical fixed-step RK4. Records the state at every multiple of
/// sample_dt (plus t_end, hit exactly by shortening the last step).
std::vector<std::pair<double, Vector>> rk4_path(
    const std::function<Vector(double, const Vector&)>& rhs, Vector y0,
    double t0, double t_end, double h, double sample_dt);

/// RK4 on an OdeState; dispatches the right-hand side on the variant.
/// Throws IntegrationBreakdown when the state leaves its validity region
/// (A or W losing positive definiteness, cosines exceeding 1 beyond 1e-8).
std::vector<OdeState> integrate(const OdeParams& p, const OdeState& s0,
                                double t_end, double h, double sample_dt);

// --- closed forms and steady states (Oja / GROUSE) ---------------------

/// Constant-tau analytical solution of the P-ODE:
/// P(t) = e^{-tB} P(0) e^{-tB} + Z(t). Predicted squared cosines are the
/// eigenvalues of P(t)^{-1}.
Matrix oja_grouse_closed_form(const Matrix& p0, const OdeParams& p, double t);

/// General-schedule solution with the integrals evaluated by composite
/// Simpson quadrature on quad_steps panel pairs.
Matrix oja_grouse_closed_form_general(const Matrix& p0, const OdeParams& p,
                                      double t, int quad_steps);

/// Cosines (descending) implied by a P-variable value.
Vector cosines_from_p(const Matrix& pmat);

/// lim_{t->inf} cos^2 for one direction, clamped at zero:
/// max{0, (2 alpha l^2 - tau sigma^4) / (alpha l^2 (2 + tau sigma^2))}.
double steady_state_cos2(double lambda_l, const OdeParams& p);

/// Informative-solution threshold (2 alpha / sigma^4) min_l lambda_l^2.
double oja_grouse_critical_tau(const OdeParams& p);

// --- PETRELS steady state, d = 1 ---------------------------------------

/// Informative-solution threshold (2 alpha lambda^2 / sigma^2 + 1/2)^2 - 1/4.
double petrels_critical_mu(double lambda, const OdeParams& p);

/// Nullcline of dQ^2/dt = 0 as a function of G.
double petrels_nullcline_f(double g, const OdeParams& p);
/// Nullcline of dG/dt = 0 as a function of G.
double petrels_nullcline_h(double g, const OdeParams& p);

struct PetrelsFixedPoint {
  bool informative = false;
  double q2 = 0.0;
  double g = 0.0;
};

/// Stable fixed point of the d=1 (Q^2, G) system: the nullcline
/// intersection below the critical mu, the Q^2 = 0 root above it.
PetrelsFixedPoint petrels_fixed_point(const OdeParams& p);

}  // namespace subspace::theory

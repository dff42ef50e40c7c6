#include "subspace/theory.hpp"

#include <algorithm>
#include <cmath>

#include "subspace/linalg.hpp"

namespace subspace::theory {

namespace {

Matrix checked_spd_inverse(const Matrix& m, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success || eig.eigenvalues()(0) <= 1e-12)
    throw SingularMatrixError(std::string(who) + ": matrix lost positive definiteness");
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

Vector predicted_cosines_checked(const OdeState& st, double t);

Matrix rhs_F(const Matrix& q, const Matrix& g, const OdeParams& p) {
  const Vector al2 = p.alpha_lambda2();
  const double s2 = p.sigma * p.sigma;
  const double s4 = s2 * s2;
  const auto d = q.rows();
  const Matrix al2q = al2.asDiagonal() * q;
  Matrix bracket = al2q - 0.5 * s4 * (q * g) -
                   q * (Matrix::Identity(d, d) + 0.5 * s2 * g) * q.transpose() * al2q;
  return bracket * g;
}

Matrix rhs_H(const Matrix& q, const Matrix& g, const OdeParams& p) {
  const Vector al2 = p.alpha_lambda2();
  const double s2 = p.sigma * p.sigma;
  const auto d = q.rows();
  const Matrix inner = q.transpose() * (al2.asDiagonal() * q) +
                       s2 * Matrix::Identity(d, d);
  return g * (p.mu * Matrix::Identity(d, d) -
              g * (s2 * g + Matrix::Identity(d, d)) * inner);
}

PetrelsFullDeriv rhs_petrels_full(const Matrix& a, const Matrix& k,
                                  const Matrix& w, const OdeParams& p) {
  const Vector al2 = p.alpha_lambda2();
  const double s2 = p.sigma * p.sigma;
  const auto d = k.rows();
  const Matrix w_inv = checked_spd_inverse(w, "rhs_petrels_full(W)");
  const Matrix a_inv = checked_spd_inverse(a, "rhs_petrels_full(A)");
  const Matrix m = k.transpose() * (al2.asDiagonal() * k) + s2 * w;
  const Matrix wmw = w_inv * m * w_inv;
  PetrelsFullDeriv out;
  out.da = symmetrized(wmw - p.mu * a);
  out.dk = (Matrix(al2.asDiagonal()) + s2 * Matrix::Identity(d, d)) * k * w_inv * a_inv -
           k * wmw * a_inv;
  out.dw = symmetrized(s2 * a_inv * wmw * a_inv);
  return out;
}

Matrix rhs_P(double t, const Matrix& pmat, const OdeParams& p) {
  const Vector al2 = p.alpha_lambda2();
  const double tau = p.tau(t);
  const double s2 = p.sigma * p.sigma;
  const Vector a = tau * (2.0 + tau * s2) * al2;
  const Vector b = tau * (al2.array() - 0.5 * tau * s2 * s2).matrix();
  return Matrix(a.asDiagonal()) - pmat * b.asDiagonal() -
         b.asDiagonal() * pmat;
}

Eigen::Vector2d rhs_q2g(const Eigen::Vector2d& y, const OdeParams& p) {
  const double al2 = p.alpha_lambda2()(0);
  const double s2 = p.sigma * p.sigma;
  const double q2 = y(0), g = y(1);
  Eigen::Vector2d dy;
  dy(0) = g * q2 * (2.0 * al2 - s2 * s2 * g - 2.0 * q2 * (1.0 + 0.5 * s2 * g) * al2);
  dy(1) = g * (p.mu - g * (s2 * g + 1.0) * (q2 * al2 + s2));
  return dy;
}

Vector predicted_cosines(const OdeState& state) {
  Matrix q;
  if (const auto* og = std::get_if<OjaGrouseState>(&state.value)) {
    q = og->q;
  } else if (const auto* red = std::get_if<PetrelsReducedState>(&state.value)) {
    q = red->q;
  } else {
    const auto& full = std::get<PetrelsFullState>(state.value);
    q = full.k * psd_inv_sqrt(full.w);
  }
  Eigen::JacobiSVD<Matrix> svd(q);
  Vector cos = svd.singularValues();
  for (int i = 0; i < cos.size(); ++i) cos(i) = std::clamp(cos(i), 0.0, 1.0);
  return cos;
}

std::vector<std::pair<double, Vector>> rk4_path(
    const std::function<Vector(double, const Vector&)>& rhs, Vector y0,
    double t0, double t_end, double h, double sample_dt) {
  if (!(h > 0.0)) throw ParameterError("rk4_path: h must be positive");
  if (t_end < t0) throw ParameterError("rk4_path: t_end must be >= t0");
  if (!(sample_dt > 0.0)) sample_dt = t_end - t0;

  std::vector<std::pair<double, Vector>> out;
  out.emplace_back(t0, y0);
  Vector y = std::move(y0);
  double t = t0;
  const double span = t_end - t0;
  const long n_samples = span > 0 ? static_cast<long>(std::ceil(span / sample_dt - 1e-9)) : 0;
  for (long s = 1; s <= n_samples; ++s) {
    const double target = s == n_samples ? t_end : t0 + s * sample_dt;
    while (t < target - 1e-12 * std::max(1.0, std::abs(target))) {
      const double step = std::min(h, target - t);
      const Vector k1 = rhs(t, y);
      const Vector k2 = rhs(t + 0.5 * step, y + 0.5 * step * k1);
      const Vector k3 = rhs(t + 0.5 * step, y + 0.5 * step * k2);
      const Vector k4 = rhs(t + step, y + step * k3);
      y += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += step;
    }
    t = target;
    out.emplace_back(t, y);
  }
  return out;
}

namespace {

// Flatten/unflatten the variant states for the generic integrator.
Vector pack_state(const OdeState& s) {
  if (const auto* og = std::get_if<OjaGrouseState>(&s.value)) {
    return Eigen::Map<const Vector>(og->q.data(), og->q.size());
  }
  if (const auto* red = std::get_if<PetrelsReducedState>(&s.value)) {
    Vector y(red->q.size() + red->g.size());
    y << Eigen::Map<const Vector>(red->q.data(), red->q.size()),
        Eigen::Map<const Vector>(red->g.data(), red->g.size());
    return y;
  }
  const auto& full = std::get<PetrelsFullState>(s.value);
  Vector y(3 * full.a.size());
  y << Eigen::Map<const Vector>(full.a.data(), full.a.size()),
      Eigen::Map<const Vector>(full.k.data(), full.k.size()),
      Eigen::Map<const Vector>(full.w.data(), full.w.size());
  return y;
}

OdeState unpack_state(const OdeState& proto, const Vector& y, double t) {
  OdeState out = proto;
  out.t = t;
  if (auto* og = std::get_if<OjaGrouseState>(&out.value)) {
    og->q = Eigen::Map<const Matrix>(y.data(), og->q.rows(), og->q.cols());
  } else if (auto* red = std::get_if<PetrelsReducedState>(&out.value)) {
    const auto m = red->q.size();
    red->q = Eigen::Map<const Matrix>(y.data(), red->q.rows(), red->q.cols());
    red->g = Eigen::Map<const Matrix>(y.data() + m, red->g.rows(), red->g.cols());
  } else {
    auto& full = std::get<PetrelsFullState>(out.value);
    const auto m = full.a.size();
    full.a = Eigen::Map<const Matrix>(y.data(), full.a.rows(), full.a.cols());
    full.k = Eigen::Map<const Matrix>(y.data() + m, full.k.rows(), full.k.cols());
    full.w = Eigen::Map<const Matrix>(y.data() + 2 * m, full.w.rows(), full.w.cols());
  }
  return out;
}

bool is_diagonal(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

}  // namespace

std::vector<OdeState> integrate(const OdeParams& p, const OdeState& s0,
                                double t_end, double h, double sample_dt) {
  if (const auto* red = std::get_if<PetrelsReducedState>(&s0.value)) {
    if (!is_diagonal(red->q) || !is_diagonal(red->g))
      throw ParameterError(
          "integrate: the reduced PETRELS system requires diagonal Q and G");
  }
  double t_now = s0.t;
  auto rhs = [&](double t, const Vector& y) -> Vector {
    t_now = t;
    const OdeState st = unpack_state(s0, y, t);
    if (const auto* og = std::get_if<OjaGrouseState>(&st.value)) {
      Matrix g = p.tau(t) * Matrix::Identity(og->q.rows(), og->q.rows());
      Matrix dq = rhs_F(og->q, g, p);
      return Eigen::Map<const Vector>(dq.data(), dq.size());
    }
    if (const auto* red = std::get_if<PetrelsReducedState>(&st.value)) {
      Matrix dq = rhs_F(red->q, red->g, p);
      Matrix dg = rhs_H(red->q, red->g, p);
      Vector dy(dq.size() + dg.size());
      dy << Eigen::Map<const Vector>(dq.data(), dq.size()),
          Eigen::Map<const Vector>(dg.data(), dg.size());
      return dy;
    }
    const auto& full = std::get<PetrelsFullState>(st.value);
    const PetrelsFullDeriv d = rhs_petrels_full(full.a, full.k, full.w, p);
    Vector dy(3 * d.da.size());
    dy << Eigen::Map<const Vector>(d.da.data(), d.da.size()),
        Eigen::Map<const Vector>(d.dk.data(), d.dk.size()),
        Eigen::Map<const Vector>(d.dw.data(), d.dw.size());
    return dy;
  };

  std::vector<std::pair<double, Vector>> path;
  try {
    path = rk4_path(rhs, pack_state(s0), s0.t, t_end, h, sample_dt);
  } catch (const SingularMatrixError& e) {
    throw IntegrationBreakdown(std::string("integrate: ") + e.what(), t_now);
  }

  std::vector<OdeState> out;
  out.reserve(path.size());
  for (const auto& [t, y] : path) {
    OdeState st = unpack_state(s0, y, t);
    const Vector cos = predicted_cosines_checked(st, t);
    (void)cos;
    out.push_back(std::move(st));
  }
  return out;
}

Vector predicted_cosines_checked(const OdeState& st, double t) {
  Matrix q;
  if (const auto* og = std::get_if<OjaGrouseState>(&st.value)) {
    q = og->q;
  } else if (const auto* red = std::get_if<PetrelsReducedState>(&st.value)) {
    q = red->q;
  } else {
    const auto& full = std::get<PetrelsFullState>(st.value);
    try {
      q = full.k * psd_inv_sqrt(full.w);
    } catch (const std::exception& e) {
      throw IntegrationBreakdown(std::string("integrate: ") + e.what(), t);
    }
  }
  Eigen::JacobiSVD<Matrix> svd(q);
  if (svd.singularValues().size() > 0 && svd.singularValues()(0) > 1.0 + 1e-8)
    throw IntegrationBreakdown("integrate: cosine exceeded 1 beyond tolerance", t);
  Vector cos = svd.singularValues();
  for (int i = 0; i < cos.size(); ++i) cos(i) = std::clamp(cos(i), 0.0, 1.0);
  return cos;
}

Matrix oja_grouse_closed_form(const Matrix& p0, const OdeParams& p, double t) {
  const auto tau_opt = p.tau.constant_value();
  if (!tau_opt)
    throw ParameterError("oja_grouse_closed_form: requires a constant step size");
  const double tau = *tau_opt;
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(p0);
    const double asym = (p0 - p0.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(1.0, p0.cwiseAbs().maxCoeff()) ||
        eig.info() != Eigen::Success || eig.eigenvalues()(0) <= 0.0)
      throw ParameterError("oja_grouse_closed_form: P(0) must be symmetric positive definite");
  }
  const Vector al2 = p.alpha_lambda2();
  const double s2 = p.sigma * p.sigma;
  const double s4 = s2 * s2;
  const int d = p.d();
  Matrix out(d, d);
  for (int i = 0; i < d; ++i) {
    const double bi = tau * (al2(i) - 0.5 * tau * s4);
    for (int j = 0; j < d; ++j) {
      const double bj = tau * (al2(j) - 0.5 * tau * s4);
      out(i, j) = std::exp(-(bi + bj) * t) * p0(i, j);
    }
    // z_l(t) = a_l (1 - e^{-2 b_l t}) / (2 b_l); the sign of the exponent is
    // fixed by the requirement that z stays bounded when 2 b_l > 0, which the
    // tests pin against RK4 integration of the P-ODE.
    const double a = tau * (2.0 + tau * s2) * al2(i);
    const double two_b = tau * (2.0 * al2(i) - tau * s4);
    const double z = std::abs(two_b) < 1e-12
                         ? a * t
                         : a * (-std::expm1(-two_b * t)) / two_b;
    out(i, i) += z;
  }
  return out;
}

Matrix oja_grouse_closed_form_general(const Matrix& p0, const OdeParams& p,
                                      double t, int quad_steps) {
  if (quad_steps < 1) throw ParameterError("closed_form_general: quad_steps >= 1");
  const Vector al2 = p.alpha_lambda2();
  const double s2 = p.sigma * p.sigma;
  const double s4 = s2 * s2;
  const int d = p.d();
  const int nodes = 2 * quad_steps + 1;
  const double hq = t / (nodes - 1);

  // cumulative integral of b_l on the node grid, per direction
  std::vector<Vector> b(d), ib(d), av(d);
  for (int l = 0; l < d; ++l) {
    b[l].resize(nodes);
    ib[l].resize(nodes);
    av[l].resize(nodes);
    for (int j = 0; j < nodes; ++j) {
      const double tau = p.tau(j * hq);
      b[l](j) = tau * (al2(l) - 0.5 * tau * s4);
      av[l](j) = tau * (2.0 + tau * s2) * al2(l);
    }
    ib[l](0) = 0.0;
    for (int j = 0; 2 * j + 2 < nodes; ++j) {
      const double f0 = b[l](2 * j), f1 = b[l](2 * j + 1), f2 = b[l](2 * j + 2);
      ib[l](2 * j + 1) = ib[l](2 * j) + hq / 12.0 * (5.0 * f0 + 8.0 * f1 - f2);
      ib[l](2 * j + 2) = ib[l](2 * j) + hq / 3.0 * (f0 + 4.0 * f1 + f2);
    }
  }

  Matrix out(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      out(i, j) = std::exp(-(ib[i](nodes - 1) + ib[j](nodes - 1))) * p0(i, j);

  // convolution term: Simpson over g(s) = a(s) e^{-2 (IB(t) - IB(s))}
  for (int l = 0; l < d; ++l) {
    const double ib_t = ib[l](nodes - 1);
    auto g = [&](int j) { return av[l](j) * std::exp(-2.0 * (ib_t - ib[l](j))); };
    double sum = 0.0;
    for (int j = 0; 2 * j + 2 < nodes; ++j)
      sum += hq / 3.0 * (g(2 * j) + 4.0 * g(2 * j + 1) + g(2 * j + 2));
    out(l, l) += sum;
  }
  return out;
}

Vector cosines_from_p(const Matrix& pmat) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(pmat);
  if (eig.info() != Eigen::Success || eig.eigenvalues()(0) <= 0.0)
    throw SingularMatrixError("cosines_from_p: P must be positive definite");
  Vector cos(pmat.rows());
  for (int i = 0; i < cos.size(); ++i) {
    const double c2 = 1.0 / eig.eigenvalues()(i);  // eigenvalues ascending
    cos(i) = std::sqrt(std::clamp(c2, 0.0, 1.0));
  }
  return cos;  // descending
}

double steady_state_cos2(double lambda_l, const OdeParams& p) {
  const auto tau_opt = p.tau.constant_value();
  if (!tau_opt)
    throw ParameterError("steady_state_cos2: requires a constant step size");
  const double tau = *tau_opt;
  if (tau < 0.0) throw ParameterError("steady_state_cos2: tau must be >= 0");
  const double al2 = p.alpha * lambda_l * lambda_l;
  const double s2 = p.sigma * p.sigma;
  const double value = (2.0 * al2 - tau * s2 * s2) / (al2 * (2.0 + tau * s2));
  return std::max(0.0, value);
}

double oja_grouse_critical_tau(const OdeParams& p) {
  const double s2 = p.sigma * p.sigma;
  return 2.0 * p.alpha * p.lambdas.array().square().minCoeff() / (s2 * s2);
}

double petrels_critical_mu(double lambda, const OdeParams& p) {
  if (p.d() != 1)
    throw DimensionError("petrels_critical_mu: only the d = 1 system has a scalar threshold");
  const double x = 2.0 * p.alpha * lambda * lambda / (p.sigma * p.sigma);
  return (x + 0.5) * (x + 0.5) - 0.25;
}

double petrels_nullcline_f(double g, const OdeParams& p) {
  const double al2 = p.alpha_lambda2()(0);
  const double s2 = p.sigma * p.sigma;
  return (al2 - 0.5 * s2 * s2 * g) / (al2 * (1.0 + 0.5 * s2 * g));
}

double petrels_nullcline_h(double g, const OdeParams& p) {
  const double al2 = p.alpha_lambda2()(0);
  const double s2 = p.sigma * p.sigma;
  return (p.mu / (g * (s2 * g + 1.0)) - s2) / al2;
}

PetrelsFixedPoint petrels_fixed_point(const OdeParams& p) {
  if (p.d() != 1)
    throw DimensionError("petrels_fixed_point: only d = 1 is supported");
  if (!(p.mu > 0.0)) throw ParameterError("petrels_fixed_point: mu must be positive");
  const double s2 = p.sigma * p.sigma;
  const double al2 = p.alpha_lambda2()(0);
  const double critical = petrels_critical_mu(p.lambdas(0), p);

  PetrelsFixedPoint out;
  if (p.mu < critical) {
    // informative branch: bisect f(G) = h(G) on (0, G_f]
    const double hi0 = 2.0 * al2 / (s2 * s2);
    auto phi = [&](double g) {
      return petrels_nullcline_f(g, p) - petrels_nullcline_h(g, p);
    };
    double hi = hi0, lo = hi0;
    for (int i = 0; i < 120 && phi(lo) > 0.0; ++i) lo *= 0.5;
    if (lo < 1e-12 || phi(lo) > 0.0 || phi(hi) < 0.0)
      throw std::runtime_error("petrels_fixed_point: bisection bracket not found");
    for (int i = 0; i < 400; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double v = phi(mid);
      if (std::abs(v) <= 1e-12) {
        lo = hi = mid;
        break;
      }
      (v < 0.0 ? lo : hi) = mid;
    }
    out.g = 0.5 * (lo + hi);
    out.q2 = std::max(0.0, petrels_nullcline_f(out.g, p));
    out.informative = true;
    return out;
  }

  // uninformative branch: sigma^2 G (sigma^2 G + 1) = mu
  auto psi = [&](double g) { return s2 * g * (s2 * g + 1.0) - p.mu; };
  double lo = 1e-12, hi = 1e6;
  if (psi(lo) > 0.0 || psi(hi) < 0.0)
    throw std::runtime_error("petrels_fixed_point: bisection bracket not found");
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double v = psi(mid);
    if (std::abs(v) <= 1e-12) {
      lo = hi = mid;
      break;
    }
    (v < 0.0 ? lo : hi) = mid;
  }
  out.g = 0.5 * (lo + hi);
  out.q2 = 0.0;
  out.informative = false;
  return out;
}

}  // namespace subspace::theory

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <utility>

#include "subspace/types.hpp"

namespace subspace {

/// Cosine similarity matrix Q = U^T X (X^T X)^{-1/2} together with its
/// singular values (the cosines of the principal angles), sorted descending.
struct CosineSimilarity {
  Matrix q;
  Vector cosines;
};

namespace detail {

// Eigendecomposition of a small symmetric matrix with a floor check.
// Returns (V, eigenvalues ascending).
template <typename Derived>
std::pair<Matrix, Vector> checked_selfadjoint_eig(
    const Eigen::MatrixBase<Derived>& m, double floor, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success)
    throw SingularMatrixError(std::string(who) + ": eigendecomposition failed");
  if (eig.eigenvalues()(0) <= floor)
    throw SingularMatrixError(std::string(who) + ": matrix is singular to working precision");
  return {eig.eigenvectors(), eig.eigenvalues()};
}

}  // namespace detail

/// Inverse principal square root of a symmetric positive definite matrix:
/// V diag(1/sqrt(mu_i)) V^T.
template <typename Derived>
Matrix psd_inv_sqrt(const Eigen::MatrixBase<Derived>& m) {
  const Matrix sym = m;
  const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ParameterError("psd_inv_sqrt: matrix is not symmetric");
  auto [v, mu] = detail::checked_selfadjoint_eig(sym, 1e-12, "psd_inv_sqrt");
  return v * mu.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
}

/// Symmetric orthogonalization X (X^T X)^{-1/2}. Unlike a QR factor this is
/// the polar-orthonormal basis: it preserves the column span and is the
/// closest orthonormal matrix to X.
template <typename Derived>
MatrixRM orthonormalize(const Eigen::MatrixBase<Derived>& x) {
  const Matrix gram = x.transpose() * x;
  const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
  auto [v, mu] =
      detail::checked_selfadjoint_eig(gram, 1e-24 * scale, "orthonormalize");
  return x * (v * mu.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose());
}

/// Cosines of the principal angles between span(U) and span(X).
/// U must be orthonormal; X full column rank (not necessarily orthonormal).
template <typename DU, typename DX>
CosineSimilarity cosine_similarity(const Eigen::MatrixBase<DU>& u,
                                   const Eigen::MatrixBase<DX>& x) {
  const Matrix gram = x.transpose() * x;
  const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
  auto [v, mu] =
      detail::checked_selfadjoint_eig(gram, 1e-24 * scale, "cosine_similarity");
  CosineSimilarity cs;
  cs.q = (u.transpose() * x) *
         (v * mu.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose());
  Eigen::JacobiSVD<Matrix> svd(cs.q);
  cs.cosines = svd.singularValues();  // already sorted descending
  for (int i = 0; i < cs.cosines.size(); ++i) {
    if (cs.cosines(i) > 1.0 + 1e-9)
      throw SingularMatrixError("cosine_similarity: singular value exceeds 1 beyond roundoff");
    cs.cosines(i) = std::clamp(cs.cosines(i), 0.0, 1.0);
  }
  return cs;
}

/// Least squares fit of the observed coordinates: solves
/// min_w ||y - Omega X w||^2 over the rows listed in `observed`.
/// Returns ok = false when lambda_min(X^T Omega X) <= eps, in which case the
/// caller skips the update (the else-branch of all three algorithms).
inline std::pair<Vector, bool> masked_least_squares(
    const MatrixRM& x, std::span<const std::int32_t> observed,
    std::span<const double> y_obs, double eps) {
  const auto d = x.cols();
  Matrix z = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (size_t j = 0; j < observed.size(); ++j) {
    const auto row = x.row(observed[j]);
    z.selfadjointView<Eigen::Lower>().rankUpdate(row.transpose());
    rhs += y_obs[j] * row.transpose();
  }
  const Matrix zfull = z.selfadjointView<Eigen::Lower>();
  double lambda_min;
  if (d == 1) {
    lambda_min = zfull(0, 0);
  } else {
    lambda_min =
        Eigen::SelfAdjointEigenSolver<Matrix>(zfull, Eigen::EigenvaluesOnly)
            .eigenvalues()(0);
  }
  if (lambda_min <= eps) return {Vector::Zero(d), false};
  return {zfull.llt().solve(rhs), true};
}

inline std::pair<Vector, bool> masked_least_squares(const MatrixRM& x,
                                                    const Observation& obs,
                                                    double eps) {
  std::vector<double> y_obs(obs.observed.size());
  for (size_t j = 0; j < obs.observed.size(); ++j)
    y_obs[j] = obs.y(obs.observed[j]);
  return masked_least_squares(x, obs.observed, y_obs, eps);
}

}  // namespace subspace

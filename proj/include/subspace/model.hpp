#pragma once

#include <string>

#include "subspace/rng.hpp"
#include "subspace/types.hpp"

namespace subspace {

/// Ground-truth generative model: s_k = U c_k + a_k observed through an
/// i.i.d. Bernoulli(alpha) coordinate mask. c_k ~ N(0, diag(lambdas^2)),
/// a_k ~ N(0, sigma^2 I). Immutable after construction.
struct SubspaceModel {
  int n = 0;
  int d = 0;
  MatrixRM basis;   // U, n x d orthonormal
  Vector lambdas;   // per-direction signal strength, non-increasing
  double sigma = 1.0;
  double alpha = 0.5;

  /// Throws ParameterError / DimensionError when the invariants fail:
  /// U^T U = I within 1e-10, lambdas positive non-increasing, alpha in (0,1).
  void validate() const;
};

/// Draws an n x d basis uniformly from the Grassmannian: the symmetric
/// orthogonalization of an i.i.d. standard normal matrix.
MatrixRM generate_subspace(int n, int d, Rng& rng);

SubspaceModel make_model(int n, int d, Vector lambdas, double sigma,
                         double alpha, Rng& rng);

/// Draws one masked sample into `out`, reusing its buffers. Only observed
/// coordinates consume noise draws.
void sample_packed(const SubspaceModel& model, long k, Rng& rng,
                   PackedSample& out);

/// Same stream of draws as sample_packed, materialized as a full-length
/// Observation with explicit zeros at unobserved coordinates.
Observation sample_observation(const SubspaceModel& model, long k, Rng& rng);

/// Orthonormal X0 whose principal cosines against U concentrate near q0:
/// orthonormalize(q0 U + sqrt(1-q0^2) Gperp) with Gperp an i.i.d. Gaussian
/// matrix projected off span(U) and column-normalized. Any construction
/// giving a deterministic invertible limit of U^T X0 would do; this one is
/// the simplest.
MatrixRM correlated_init(const MatrixRM& u, double q0, Rng& rng);

/// Incoherence statistic sum_{i,j} M_ij^4.
double incoherence_statistic(const Eigen::Ref<const MatrixRM>& m);

/// Flat binary persistence for a basis: 16-byte header (magic "SUBF",
/// u32 n, u32 d, 4 reserved bytes), then row-major little-endian f64 data.
void save_subspace(const std::string& path, const MatrixRM& u);
MatrixRM load_subspace(const std::string& path);

}  // namespace subspace

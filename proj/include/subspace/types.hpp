#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace subspace {

// Estimates and bases are tall-and-skinny (n x d) and are traversed row by
// row in all masked operations, so rows are kept contiguous.
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// One partially observed sample y_k = Omega_k (U c_k + a_k).
/// Unobserved coordinates of y are stored as explicit zeros; the diagonal of
/// Omega_k is kept both as a boolean vector and as the sorted list of
/// observed indices.
struct Observation {
  Vector y;
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> observed;
  long k = 0;
};

/// Compact form of an Observation used by the streaming loops: values of y
/// at the observed coordinates only, aligned with `observed`.
struct PackedSample {
  std::vector<std::int32_t> observed;
  std::vector<double> y_obs;
  long k = 0;
};

}  // namespace subspace

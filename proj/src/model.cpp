#include "subspace/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "subspace/linalg.hpp"

namespace subspace {

void SubspaceModel::validate() const {
  if (n < 1 || d < 1 || d > n)
    throw DimensionError("SubspaceModel: need 1 <= d <= n");
  if (basis.rows() != n || basis.cols() != d)
    throw DimensionError("SubspaceModel: basis shape mismatch");
  if (lambdas.size() != d)
    throw DimensionError("SubspaceModel: lambdas size mismatch");
  const Matrix gram = basis.transpose() * basis;
  if ((gram - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-10)
    throw ParameterError("SubspaceModel: basis is not orthonormal");
  for (int i = 0; i < d; ++i) {
    if (!(lambdas(i) > 0.0))
      throw ParameterError("SubspaceModel: lambdas must be positive");
    if (i > 0 && lambdas(i) > lambdas(i - 1))
      throw ParameterError("SubspaceModel: lambdas must be non-increasing");
  }
  if (!(sigma > 0.0)) throw ParameterError("SubspaceModel: sigma must be positive");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError("SubspaceModel: alpha must lie in (0,1)");
}

MatrixRM generate_subspace(int n, int d, Rng& rng) {
  if (d < 1 || d > n) throw DimensionError("generate_subspace: need 1 <= d <= n");
  MatrixRM x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  return orthonormalize(x);
}

SubspaceModel make_model(int n, int d, Vector lambdas, double sigma,
                         double alpha, Rng& rng) {
  SubspaceModel m;
  m.n = n;
  m.d = d;
  m.basis = generate_subspace(n, d, rng);
  m.lambdas = std::move(lambdas);
  m.sigma = sigma;
  m.alpha = alpha;
  m.validate();
  return m;
}

void sample_packed(const SubspaceModel& model, long k, Rng& rng,
                   PackedSample& out) {
  out.k = k;
  rng.sample_mask_indices(model.n, model.alpha, out.observed);
  const size_t m = out.observed.size();
  out.y_obs.resize(m);
  const int d = model.d;
  double c_stack[16];
  const bool small = d <= 16;
  std::unique_ptr<double[]> c_heap;
  double* c = c_stack;
  if (!small) {
    c_heap.reset(new double[d]);
    c = c_heap.get();
  }
  for (int j = 0; j < d; ++j) c[j] = model.lambdas(j) * rng.normal();
  // noise first (batched), then the signal added on top
  rng.fill_normal(out.y_obs.data(), static_cast<int>(m), model.sigma);
  const double* u = model.basis.data();
  const std::int32_t* idx = out.observed.data();
  double* y = out.y_obs.data();
  if (d == 1) {
    const double c0 = c[0];
    size_t t = 0;
#if defined(__AVX512F__)
    const __m512d vc = _mm512_set1_pd(c0);
    for (; t + 8 <= m; t += 8) {
      const __m256i vi =
          _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + t));
      const __m512d vu = _mm512_i32gather_pd(vi, u, 8);
      const __m512d vy = _mm512_loadu_pd(y + t);
      _mm512_storeu_pd(y + t, _mm512_fmadd_pd(vc, vu, vy));
    }
#endif
    for (; t < m; ++t) y[t] += c0 * u[idx[t]];
  } else {
    for (size_t t = 0; t < m; ++t) {
      const double* row = u + static_cast<size_t>(idx[t]) * d;
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += row[j] * c[j];
      y[t] += s;
    }
  }
}

Observation sample_observation(const SubspaceModel& model, long k, Rng& rng) {
  PackedSample p;
  sample_packed(model, k, rng, p);
  Observation obs;
  obs.k = k;
  obs.y = Vector::Zero(model.n);
  obs.mask.assign(model.n, 0);
  obs.observed = p.observed;
  for (size_t t = 0; t < p.observed.size(); ++t) {
    obs.y(p.observed[t]) = p.y_obs[t];
    obs.mask[p.observed[t]] = 1;
  }
  return obs;
}

MatrixRM correlated_init(const MatrixRM& u, double q0, Rng& rng) {
  if (!(q0 > 0.0 && q0 <= 1.0))
    throw ParameterError("correlated_init: q0 must lie in (0,1]");
  const auto n = u.rows();
  const auto d = u.cols();
  MatrixRM g(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  MatrixRM gperp = g - u * (u.transpose() * g).eval();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double norm = gperp.col(j).norm();
    if (norm > 0.0) gperp.col(j) /= norm;
  }
  return orthonormalize(q0 * u + std::sqrt(1.0 - q0 * q0) * gperp);
}

double incoherence_statistic(const Eigen::Ref<const MatrixRM>& m) {
  return m.array().square().square().sum();
}

namespace {
constexpr char kMagic[4] = {'S', 'U', 'B', 'F'};
static_assert(std::endian::native == std::endian::little,
              "SUBF persistence assumes a little-endian host");

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void save_subspace(const std::string& path, const MatrixRM& u) {
  FileHandle f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("save_subspace: cannot open " + path);
  unsigned char header[16] = {0};
  std::memcpy(header, kMagic, 4);
  const std::uint32_t n = static_cast<std::uint32_t>(u.rows());
  const std::uint32_t d = static_cast<std::uint32_t>(u.cols());
  std::memcpy(header + 4, &n, 4);
  std::memcpy(header + 8, &d, 4);
  if (std::fwrite(header, 1, 16, f.get()) != 16 ||
      std::fwrite(u.data(), sizeof(double), u.size(), f.get()) !=
          static_cast<size_t>(u.size()))
    throw std::runtime_error("save_subspace: short write to " + path);
}

MatrixRM load_subspace(const std::string& path) {
  FileHandle f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("load_subspace: cannot open " + path);
  unsigned char header[16];
  if (std::fread(header, 1, 16, f.get()) != 16)
    throw std::runtime_error("load_subspace: short header in " + path);
  if (std::memcmp(header, kMagic, 4) != 0)
    throw std::runtime_error("load_subspace: bad magic in " + path);
  std::uint32_t n = 0, d = 0;
  std::memcpy(&n, header + 4, 4);
  std::memcpy(&d, header + 8, 4);
  MatrixRM u(n, d);
  if (std::fread(u.data(), sizeof(double), u.size(), f.get()) !=
      static_cast<size_t>(u.size()))
    throw std::runtime_error("load_subspace: short payload in " + path);
  return u;
}

}  // namespace subspace

#include "subspace/rng.hpp"

#include <cmath>

namespace subspace {

double Rng::normal_tail(std::int32_t hz, std::uint32_t iz) {
  constexpr double r = 3.442619855899;  // start of the right tail
  constexpr double r_inv = 1.0 / r;
  while (true) {
    double x = hz * detail::kZigWn[iz];
    if (iz == 0) {
      // base strip: exact exponential tail sampling
      double y;
      do {
        x = -std::log(uniform_positive()) * r_inv;
        y = -std::log(uniform_positive());
      } while (y + y < x * x);
      return hz > 0 ? r + x : -r - x;
    }
    if (detail::kZigFn[iz] +
            uniform() * (detail::kZigFn[iz - 1] - detail::kZigFn[iz]) <
        std::exp(-0.5 * x * x))
      return x;
    hz = static_cast<std::int32_t>(next_u64() >> 32);
    iz = static_cast<std::uint32_t>(hz) & 127u;
    const auto mag =
        static_cast<std::uint64_t>(std::abs(static_cast<std::int64_t>(hz)));
    if (mag < detail::kZigKn[iz]) return hz * detail::kZigWn[iz];
  }
}

void Rng::fill_normal(double* dst, int count, double stddev) {
  std::uint64_t s0 = s_[0], s1 = s_[1], s2 = s_[2], s3 = s_[3];
  auto rot = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  for (int i = 0; i < count; ++i) {
    const std::uint64_t u = rot(s0 + s3, 23) + s0;
    const std::uint64_t t = s1 << 17;
    s2 ^= s0;
    s3 ^= s1;
    s1 ^= s2;
    s0 ^= s3;
    s2 ^= t;
    s3 = rot(s3, 45);
    const std::int32_t hz = static_cast<std::int32_t>(u >> 32);
    const std::uint32_t iz = static_cast<std::uint32_t>(hz) & 127u;
    const auto mag =
        static_cast<std::uint64_t>(std::abs(static_cast<std::int64_t>(hz)));
    if (mag < detail::kZigKn[iz]) [[likely]] {
      dst[i] = hz * detail::kZigWn[iz];
    } else {
      s_[0] = s0;
      s_[1] = s1;
      s_[2] = s2;
      s_[3] = s3;
      dst[i] = normal_tail(hz, iz);
      s0 = s_[0];
      s1 = s_[1];
      s2 = s_[2];
      s3 = s_[3];
    }
  }
  s_[0] = s0;
  s_[1] = s1;
  s_[2] = s2;
  s_[3] = s3;
  if (stddev != 1.0)
    for (int i = 0; i < count; ++i) dst[i] *= stddev;
}

void Rng::sample_mask_indices(int n, double alpha,
                              std::vector<std::int32_t>& out) {
  out.resize(n);  // upper bound; shrunk below without reallocation
  std::int32_t* dst = out.data();
  std::size_t count = 0;
  if (alpha == 0.5) {
    std::uint64_t s0 = s_[0], s1 = s_[1], s2 = s_[2], s3 = s_[3];
    auto rot = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    int base = 0;
    while (base < n) {
      const int block = n - base < 64 ? n - base : 64;
      std::uint64_t bits = rot(s0 + s3, 23) + s0;
      const std::uint64_t t = s1 << 17;
      s2 ^= s0;
      s3 ^= s1;
      s1 ^= s2;
      s0 ^= s3;
      s2 ^= t;
      s3 = rot(s3, 45);
      if (block < 64) bits &= (std::uint64_t{1} << block) - 1;
      while (bits) {
        dst[count++] = base + __builtin_ctzll(bits);
        bits &= bits - 1;
      }
      base += block;
    }
    s_[0] = s0;
    s_[1] = s1;
    s_[2] = s2;
    s_[3] = s3;
  } else {
    const std::uint64_t threshold =
        alpha >= 1.0 ? ~std::uint64_t{0}
                     : static_cast<std::uint64_t>(alpha * 0x1.0p64);
    std::uint64_t s0 = s_[0], s1 = s_[1], s2 = s_[2], s3 = s_[3];
    auto rot = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    for (int i = 0; i < n; ++i) {
      const std::uint64_t u = rot(s0 + s3, 23) + s0;
      const std::uint64_t t = s1 << 17;
      s2 ^= s0;
      s3 ^= s1;
      s1 ^= s2;
      s0 ^= s3;
      s2 ^= t;
      s3 = rot(s3, 45);
      dst[count] = i;  // branch-free append
      count += u < threshold;
    }
    s_[0] = s0;
    s_[1] = s1;
    s_[2] = s2;
    s_[3] = s3;
  }
  out.resize(count);
}

}  // namespace subspace

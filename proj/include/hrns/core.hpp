// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace hrns {

template <typename Real>
using Vec3 = Eigen::Matrix<Real, 3, 1>;
template <typename Real>
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64, used to derive independent stream seeds from a base seed.
inline uint64_t split_mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// PCG32 (O'Neill). We avoid <random> distributions because their output is
// implementation-defined; all randomized results in this project must be
// reproducible from the seed alone.
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed, uint64_t stream = 0) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += split_mix64(seed);
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
  }

  // Unbiased integer in [0, bound).
  uint32_t next_below(uint32_t bound) {
    uint32_t threshold = (~bound + 1u) % bound;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform in [0, 1) with 32 bits of mantissa input.
  double next_double() { return next_u32() * 0x1p-32; }

  template <typename Real>
  Real uniform(Real lo, Real hi) {
    return lo + static_cast<Real>(next_double()) * (hi - lo);
  }

  // Standard normal via Box-Muller (one value per call, deterministic).
  double next_normal() {
    double u1 = (next_u32() + 1.0) * 0x1p-32;  // (0,1]
    double u2 = next_u32() * 0x1p-32;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform direction on the unit sphere.
  template <typename Real>
  Vec3<Real> unit_vector() {
    double z = 2.0 * next_double() - 1.0;
    double phi = 2.0 * kPi * next_double();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3<Real>(static_cast<Real>(r * std::cos(phi)),
                      static_cast<Real>(r * std::sin(phi)), static_cast<Real>(z));
  }

  // Uniform point in the unit ball.
  template <typename Real>
  Vec3<Real> in_unit_ball() {
    Vec3<Real> dir = unit_vector<Real>();
    Real r = static_cast<Real>(std::cbrt(next_double()));
    return dir * r;
  }

 private:
  uint64_t state_;
  uint64_t inc_;
};

// Static contiguous partition of [0, n) across up to `threads` workers.
// Work assignment depends only on (n, threads), never on scheduling, so a
// deterministic merge of per-worker results is possible afterwards.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (threads < 1) threads = 1;
  std::size_t workers = std::min<std::size_t>(threads, n == 0 ? 1 : n);
  if (workers <= 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = n * w / workers;
    std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, static_cast<int>(w)); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hrns

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "hrns/core.hpp"

namespace hrns {

// Frequency encoding: [sin(x), cos(x), sin(2x), cos(2x), ..., sin(2^(N-1) x),
// cos(2^(N-1) x)], each term applied componentwise, bands outermost.
// Output length 2*N*dim.
template <typename Real>
void positional_encode(const Real* x, int dim, int bands, Real* out) {
  assert(bands >= 1);
  int k = 0;
  Real freq = 1;
  for (int b = 0; b < bands; ++b) {
    for (int i = 0; i < dim; ++i) out[k++] = std::sin(freq * x[i]);
    for (int i = 0; i < dim; ++i) out[k++] = std::cos(freq * x[i]);
    freq *= 2;
  }
}

// Grid resolution that matches positional frequency band n over [-1, 1]:
// band n has 2^(n-1)/pi periods in the interval, four lattice points per
// period, so 2^(n+1)/pi points overall.
inline double band_equivalent_resolution(int band) {
  if (band < 1) throw std::invalid_argument("band index must be >= 1");
  return std::ldexp(1.0, band + 1) / kPi;
}

// Per-level activation gate for coarse-to-fine annealing.
// Level i (1-based) is fully active once beta >= i, fully inactive while
// beta <= i - 1, and ramps through a raised cosine in between.
template <typename Real>
Real anneal_weight(int level, Real beta) {
  Real t = std::clamp<Real>(beta - static_cast<Real>(level) + 1, 0, 1);
  return (1 - std::cos(static_cast<Real>(kPi) * t)) / 2;
}

struct HashGridConfig {
  int num_levels = 16;
  int base_resolution = 8;
  int feature_dim = 4;
  uint32_t max_table_size = 1u << 22;
  // per-level growth factor is fixed at 2; domain is the cube [-1,1]^3

  void validate() const {
    if (num_levels < 1) throw std::invalid_argument("num_levels must be >= 1");
    if (base_resolution < 2) throw std::invalid_argument("base_resolution must be >= 2");
    if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
    if (max_table_size < 1) throw std::invalid_argument("max_table_size must be >= 1");
  }
};

// Lattice points per axis at level l (1-based): N_min * 2^(l-1).
inline int64_t grid_resolution(int level, const HashGridConfig& cfg) {
  if (level < 1 || level > cfg.num_levels) throw std::out_of_range("grid level out of range");
  return static_cast<int64_t>(cfg.base_resolution) << (level - 1);
}

// Number of distinct feature fragments stored for a level.
inline uint32_t level_table_length(int level, const HashGridConfig& cfg) {
  int64_t n = grid_resolution(level, cfg);
  // n^3 can overflow 64 bits for very fine levels only in theory; compare in
  // floating point first.
  double dense = static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(n);
  if (dense <= static_cast<double>(cfg.max_table_size)) return static_cast<uint32_t>(n * n * n);
  return cfg.max_table_size;
}

inline bool level_is_dense(int level, const HashGridConfig& cfg) {
  int64_t n = grid_resolution(level, cfg);
  double dense = static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(n);
  return dense <= static_cast<double>(cfg.max_table_size);
}

// Table row for a lattice corner. Dense row-major indexing when the whole
// level fits in the table budget, otherwise the three-prime XOR spatial hash
// used by the reference multiresolution-hash implementations.
inline uint32_t lattice_index(int cx, int cy, int cz, int level, const HashGridConfig& cfg) {
  int64_t n = grid_resolution(level, cfg);
  if (cx < 0 || cy < 0 || cz < 0 || cx >= n || cy >= n || cz >= n)
    throw std::out_of_range("lattice corner out of range");
  if (level_is_dense(level, cfg)) {
    return static_cast<uint32_t>(cx + n * (cy + n * cz));
  }
  constexpr uint32_t kP1 = 1u;
  constexpr uint32_t kP2 = 2654435761u;
  constexpr uint32_t kP3 = 805459861u;
  uint32_t h = (static_cast<uint32_t>(cx) * kP1) ^ (static_cast<uint32_t>(cy) * kP2) ^
               (static_cast<uint32_t>(cz) * kP3);
  return h % cfg.max_table_size;
}

// Cell lookup for one level: base corner, fractional offset and the 8
// (index, weight) pairs of trilinear interpolation. Exposed on its own so
// tests can assert the partition-of-unity property directly.
struct LevelLookup {
  uint32_t idx[8];
  double w[8];
  int cell[3];
  double frac[3];
};

inline LevelLookup level_lookup(const Vec3d& x, int level, const HashGridConfig& cfg) {
  LevelLookup out;
  int64_t n = grid_resolution(level, cfg);
  for (int k = 0; k < 3; ++k) {
    double u = (x[k] + 1.0) * 0.5 * static_cast<double>(n - 1);
    // clamp boundary round-off into the valid cell range
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    int c = static_cast<int>(std::floor(u));
    c = std::min<int>(c, static_cast<int>(n) - 2);
    out.cell[k] = c;
    out.frac[k] = u - c;
  }
  for (int corner = 0; corner < 8; ++corner) {
    int dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
    double w = (dx ? out.frac[0] : 1.0 - out.frac[0]) * (dy ? out.frac[1] : 1.0 - out.frac[1]) *
               (dz ? out.frac[2] : 1.0 - out.frac[2]);
    out.w[corner] = w;
    out.idx[corner] =
        lattice_index(out.cell[0] + dx, out.cell[1] + dy, out.cell[2] + dz, level, cfg);
  }
  return out;
}

// Sink for gradients w.r.t. hash-table entries. `grads` mirrors the table
// layout; `touched` marks entries that received a contribution this step
// (needed by the sparse optimizer even when the contribution is zero).
template <typename Real>
struct TableGradSink {
  std::vector<std::vector<Real>>* grads = nullptr;
  std::vector<std::vector<uint8_t>>* touched = nullptr;
};

// Interface for the spatial encoders the SDF/color networks consume. `beta`
// is the annealing parameter; encoders without an annealing notion ignore it.
template <typename Real>
class SpatialEncoding {
 public:
  virtual ~SpatialEncoding() = default;
  virtual int dim() const = 0;
  virtual int num_levels() const = 0;
  virtual void encode(const Vec3<Real>& x, Real beta, Real* out) const = 0;
  // Accumulates upstream^T * d(encode)/d(tables) into `sink` and, when `dx`
  // is non-null, writes d(upstream . encode)/dx.
  virtual void backward(const Vec3<Real>& x, Real beta, const Real* upstream,
                        const TableGradSink<Real>* sink, Vec3<Real>* dx) const = 0;
  virtual std::vector<std::vector<Real>>* tables() { return nullptr; }
  virtual const std::vector<std::vector<Real>>* tables() const { return nullptr; }
};

// Multi-resolution hash encoding with trilinear interpolation and learnable
// feature tables.
template <typename Real>
class HashEncoding final : public SpatialEncoding<Real> {
 public:
  explicit HashEncoding(const HashGridConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    tables_.resize(cfg_.num_levels);
    for (int l = 1; l <= cfg_.num_levels; ++l)
      tables_[l - 1].assign(static_cast<size_t>(level_table_length(l, cfg_)) * cfg_.feature_dim,
                            Real(0));
  }

  void init_tables(Pcg32& rng, Real scale = Real(1e-4)) {
    for (auto& t : tables_)
      for (auto& v : t) v = rng.uniform<Real>(-scale, scale);
  }

  const HashGridConfig& config() const { return cfg_; }
  int dim() const override { return cfg_.num_levels * cfg_.feature_dim; }
  int num_levels() const override { return cfg_.num_levels; }
  std::vector<std::vector<Real>>* tables() override { return &tables_; }
  const std::vector<std::vector<Real>>* tables() const override { return &tables_; }

  void encode(const Vec3<Real>& x, Real beta, Real* out) const override {
    if (!x.allFinite()) throw std::invalid_argument("non-finite encoding input");
    const int d = cfg_.feature_dim;
    Vec3d xd = x.template cast<double>();
    for (int l = 1; l <= cfg_.num_levels; ++l) {
      Real* dst = out + (l - 1) * d;
      Real wl = anneal_weight(l, beta);
      if (wl == Real(0)) {
        std::fill(dst, dst + d, Real(0));
        continue;
      }
      LevelLookup lk = level_lookup(xd, l, cfg_);
      const std::vector<Real>& table = tables_[l - 1];
      for (int f = 0; f < d; ++f) dst[f] = Real(0);
      for (int corner = 0; corner < 8; ++corner) {
        Real w = wl * static_cast<Real>(lk.w[corner]);
        const Real* frag = table.data() + static_cast<size_t>(lk.idx[corner]) * d;
        for (int f = 0; f < d; ++f) dst[f] += w * frag[f];
      }
    }
  }

  void backward(const Vec3<Real>& x, Real beta, const Real* upstream,
                const TableGradSink<Real>* sink, Vec3<Real>* dx) const override {
    const int d = cfg_.feature_dim;
    Vec3d xd = x.template cast<double>();
    if (dx) dx->setZero();
    for (int l = 1; l <= cfg_.num_levels; ++l) {
      Real wl = anneal_weight(l, beta);
      if (wl == Real(0)) continue;
      const Real* up = upstream + (l - 1) * d;
      LevelLookup lk = level_lookup(xd, l, cfg_);
      if (sink) {
        std::vector<Real>& g = (*sink->grads)[l - 1];
        std::vector<uint8_t>& touched = (*sink->touched)[l - 1];
        for (int corner = 0; corner < 8; ++corner) {
          Real w = wl * static_cast<Real>(lk.w[corner]);
          Real* slot = g.data() + static_cast<size_t>(lk.idx[corner]) * d;
          for (int f = 0; f < d; ++f) slot[f] += w * up[f];
          touched[lk.idx[corner]] = 1;
        }
      }
      if (dx) {
        // d(trilinear)/du_k, chain u = (x+1)/2 * (n-1). At cell faces the
        // containing (lower) cell supplies the one-sided derivative.
        int64_t n = grid_resolution(l, cfg_);
        double scale = 0.5 * static_cast<double>(n - 1);
        const std::vector<Real>& table = tables_[l - 1];
        for (int k = 0; k < 3; ++k) {
          double acc = 0;
          for (int corner = 0; corner < 8; ++corner) {
            int bits[3] = {corner & 1, (corner >> 1) & 1, (corner >> 2) & 1};
            double dw = bits[k] ? 1.0 : -1.0;
            for (int j = 0; j < 3; ++j)
              if (j != k) dw *= bits[j] ? lk.frac[j] : 1.0 - lk.frac[j];
            const Real* frag = table.data() + static_cast<size_t>(lk.idx[corner]) * d;
            double dot = 0;
            for (int f = 0; f < d; ++f) dot += static_cast<double>(frag[f]) * up[f];
            acc += dw * dot;
          }
          (*dx)[k] += static_cast<Real>(static_cast<double>(wl) * acc * scale);
        }
      }
    }
  }

 private:
  HashGridConfig cfg_;
  std::vector<std::vector<Real>> tables_;
};

// Frequency encoding of 3D position, as the fixed (non-learnable) spatial
// encoder arm of the encoder comparison harness. Annealing does not apply.
template <typename Real>
class PositionalEncoding final : public SpatialEncoding<Real> {
 public:
  explicit PositionalEncoding(int bands) : bands_(bands) {
    if (bands < 1) throw std::invalid_argument("bands must be >= 1");
  }

  int bands() const { return bands_; }
  int dim() const override { return 6 * bands_; }
  int num_levels() const override { return bands_; }

  void encode(const Vec3<Real>& x, Real, Real* out) const override {
    if (!x.allFinite()) throw std::invalid_argument("non-finite encoding input");
    positional_encode(x.data(), 3, bands_, out);
  }

  void backward(const Vec3<Real>& x, Real, const Real* upstream, const TableGradSink<Real>*,
                Vec3<Real>* dx) const override {
    if (!dx) return;
    dx->setZero();
    Real freq = 1;
    int k = 0;
    for (int b = 0; b < bands_; ++b) {
      for (int i = 0; i < 3; ++i) (*dx)[i] += upstream[k + i] * freq * std::cos(freq * x[i]);
      for (int i = 0; i < 3; ++i) (*dx)[i] -= upstream[k + 3 + i] * freq * std::sin(freq * x[i]);
      k += 6;
      freq *= 2;
    }
  }

 private:
  int bands_;
};

// Concatenated per-level features of `x` with every level gated by its
// annealing weight. At beta == L this is exactly the plain encoding.
template <typename Real>
VecX<Real> annealed_encode(const SpatialEncoding<Real>& enc, const Vec3<Real>& x, Real beta) {
  VecX<Real> out(enc.dim());
  enc.encode(x, beta, out.data());
  return out;
}

}  // namespace hrns

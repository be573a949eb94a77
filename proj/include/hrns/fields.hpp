// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <utility>

#include "hrns/encoding.hpp"
#include "hrns/mlp.hpp"

namespace hrns {

struct FieldConfig {
  int sdf_width = 256;
  int sdf_hidden = 4;  // skip connection enters the middle hidden layer
  int color_width = 256;
  int color_hidden = 4;
  int dir_bands = 4;
  double geometric_radius = 0.5;
  double deviation_init = 0.3;
  double normal_step = 1e-4;
};

template <typename Real>
struct NormalResult {
  Vec3<Real> unit = Vec3<Real>::Zero();
  Vec3<Real> raw = Vec3<Real>::Zero();
  bool degenerate = false;
};

// Central-difference spatial gradient of an arbitrary scalar field, then
// normalized. A vanishing gradient is flagged instead of producing NaNs;
// callers drop flagged samples from normal-dependent terms.
template <typename Real, typename F>
NormalResult<Real> normal_from_fd(F&& sdf, const Vec3<Real>& x, Real h) {
  NormalResult<Real> out;
  for (int k = 0; k < 3; ++k) {
    Vec3<Real> xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    out.raw[k] = (sdf(xp) - sdf(xm)) / (2 * h);
  }
  Real n = out.raw.norm();
  if (n < Real(1e-12)) {
    out.degenerate = true;
    return out;
  }
  out.unit = out.raw / n;
  return out;
}

// The trainable scene representation: spatial encoder, SDF network (scalar
// distance plus a geometry feature vector), color network, and the logistic
// sharpness used by the SDF-to-opacity conversion.
template <typename Real>
struct FieldModel {
  FieldConfig cfg;
  std::unique_ptr<SpatialEncoding<Real>> encoding;
  Mlp<Real> sdf_net;
  Mlp<Real> color_net;
  Real deviation_v = Real(0.3);

  int enc_dim() const { return encoding->dim(); }
  int sdf_in_dim() const { return 3 + enc_dim(); }
  int color_in_dim() const { return enc_dim() + 3 + 6 * cfg.dir_bands + cfg.sdf_width; }
  int feature_dim() const { return cfg.sdf_width; }
  Real beta_max() const { return static_cast<Real>(encoding->num_levels()); }

  Real deviation_s() const { return std::exp(Real(10) * deviation_v); }

  void build(std::unique_ptr<SpatialEncoding<Real>> enc) {
    encoding = std::move(enc);
    sdf_net.build(sdf_in_dim(), cfg.sdf_width, cfg.sdf_hidden, cfg.sdf_width + 1,
                  cfg.sdf_hidden / 2);
    sdf_net.act = Act::kSoftplus;
    sdf_net.act_scale = Real(100);
    sdf_net.sigmoid_out = false;
    color_net.build(color_in_dim(), cfg.color_width, cfg.color_hidden, 3, -1);
    color_net.act = Act::kRelu;
    color_net.sigmoid_out = true;
  }

  void init(uint64_t seed) {
    Pcg32 rng_geo(seed, 1);
    geometric_init(sdf_net, 3, static_cast<Real>(cfg.geometric_radius), rng_geo);
    Pcg32 rng_col(seed, 2);
    he_init(color_net, rng_col);
    if (auto* t = encoding->tables()) {
      (void)t;
      Pcg32 rng_tab(seed, 3);
      static_cast<HashEncoding<Real>*>(encoding.get())->init_tables(rng_tab);
    }
    deviation_v = static_cast<Real>(cfg.deviation_init);
  }

  void refresh() {
    sdf_net.refresh();
    color_net.refresh();
  }

  void fill_sdf_input(const Vec3<Real>& x, Real beta, Real* col) const {
    col[0] = x[0];
    col[1] = x[1];
    col[2] = x[2];
    encoding->encode(x, beta, col + 3);
  }

  // Column layout: [encoding, normal, dir encoding, geometry feature].
  void fill_color_input(const Real* enc, const Vec3<Real>& normal, const Real* dir_enc,
                        const Real* feature, Real* col) const {
    const int e = enc_dim();
    std::copy(enc, enc + e, col);
    col[e] = normal[0];
    col[e + 1] = normal[1];
    col[e + 2] = normal[2];
    std::copy(dir_enc, dir_enc + 6 * cfg.dir_bands, col + e + 3);
    std::copy(feature, feature + cfg.sdf_width, col + e + 3 + 6 * cfg.dir_bands);
  }

  std::pair<Real, VecX<Real>> sdf_forward(const Vec3<Real>& x, Real beta) const {
    if (!x.allFinite()) throw std::invalid_argument("non-finite SDF input");
    MatX<Real> in(sdf_in_dim(), 1);
    fill_sdf_input(x, beta, in.data());
    MatX<Real> out = sdf_net.forward(in);
    return {out(0, 0), out.col(0).tail(cfg.sdf_width)};
  }

  Real sdf_value(const Vec3<Real>& x, Real beta) const { return sdf_forward(x, beta).first; }

  NormalResult<Real> sdf_normal(const Vec3<Real>& x, Real beta, Real h = Real(0)) const {
    if (h <= Real(0)) h = static_cast<Real>(cfg.normal_step);
    return normal_from_fd([&](const Vec3<Real>& p) { return sdf_value(p, beta); }, x, h);
  }

  Vec3<Real> color_forward(const Vec3<Real>& x, const Vec3<Real>& normal,
                           const Vec3<Real>& view_dir, const VecX<Real>& feature,
                           Real beta) const {
    if (!x.allFinite() || !normal.allFinite() || !view_dir.allFinite())
      throw std::invalid_argument("non-finite color input");
    VecX<Real> enc(enc_dim());
    encoding->encode(x, beta, enc.data());
    VecX<Real> dir_enc(6 * cfg.dir_bands);
    positional_encode(view_dir.data(), 3, cfg.dir_bands, dir_enc.data());
    MatX<Real> in(color_in_dim(), 1);
    fill_color_input(enc.data(), normal, dir_enc.data(), feature.data(), in.data());
    MatX<Real> out = color_net.forward(in);
    return out.col(0);
  }
};

}  // namespace hrns

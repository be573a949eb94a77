// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hrns/core.hpp"

namespace hrns {

enum class Act { kSoftplus, kRelu };

template <typename Real>
Real softplus_scaled(Real x, Real s) {
  Real sx = s * x;
  if (sx > Real(30)) return x;
  if (sx < Real(-30)) return std::exp(sx) / s;
  return std::log1p(std::exp(sx)) / s;
}

// Derivative of the scaled softplus recovered from its stored output:
// a = log(1+e^{sx})/s implies sigmoid(sx) = 1 - e^{-s a}.
template <typename Real>
Real softplus_deriv_from_output(Real a, Real s) {
  Real sa = s * a;
  if (sa > Real(30)) return Real(1);
  return -std::expm1(-sa);
}

// Fully connected layer with weight normalization: each effective weight row
// is g_r * v_r / |v_r|. `w` caches the effective matrix and must be refreshed
// whenever v or g change.
template <typename Real>
struct WnLinear {
  MatX<Real> v;
  VecX<Real> g;
  VecX<Real> b;
  MatX<Real> w;

  int in_dim() const { return static_cast<int>(v.cols()); }
  int out_dim() const { return static_cast<int>(v.rows()); }

  void resize(int out, int in) {
    v.setZero(out, in);
    g.setZero(out);
    b.setZero(out);
    w.setZero(out, in);
  }

  void refresh() {
    for (int r = 0; r < v.rows(); ++r) {
      Real n = v.row(r).norm();
      w.row(r) = (g[r] / std::max(n, Real(1e-30))) * v.row(r);
    }
  }

  // Sets g to the row norms of v so the effective weights equal v exactly.
  void absorb_norms() {
    for (int r = 0; r < v.rows(); ++r) g[r] = v.row(r).norm();
    refresh();
  }
};

// Gradients w.r.t. one layer, accumulated in effective-weight space. The
// conversion to (dv, dg) happens once per optimizer step.
template <typename Real>
struct WnLinearGrads {
  MatX<Real> dw;
  VecX<Real> db;

  void match(const WnLinear<Real>& l) {
    dw.setZero(l.v.rows(), l.v.cols());
    db.setZero(l.v.rows());
  }
  void zero() {
    dw.setZero();
    db.setZero();
  }
  void add(const WnLinearGrads& o) {
    dw += o.dw;
    db += o.db;
  }
};

// dL/dv and dL/dg from dL/dW for a weight-normalized layer.
template <typename Real>
void wn_param_grads(const WnLinear<Real>& layer, const MatX<Real>& dw, MatX<Real>& dv,
                    VecX<Real>& dg) {
  dv.resize(layer.v.rows(), layer.v.cols());
  dg.resize(layer.v.rows());
  for (int r = 0; r < layer.v.rows(); ++r) {
    Real n = std::max(layer.v.row(r).norm(), Real(1e-30));
    auto vhat = layer.v.row(r) / n;
    Real proj = dw.row(r).dot(vhat);
    dg[r] = proj;
    dv.row(r) = (layer.g[r] / n) * (dw.row(r) - proj * vhat);
  }
}

template <typename Real>
struct MlpWorkspace {
  std::vector<MatX<Real>> inputs;  // input matrix per layer
  MatX<Real> out;                  // final output, post-squash when enabled
};

template <typename Real>
struct MlpGrads {
  std::vector<WnLinearGrads<Real>> layers;

  void match(const std::vector<WnLinear<Real>>& ls) {
    layers.resize(ls.size());
    for (size_t i = 0; i < ls.size(); ++i) layers[i].match(ls[i]);
  }
  void zero() {
    for (auto& l : layers) l.zero();
  }
  void add(const MlpGrads& o) {
    for (size_t i = 0; i < layers.size(); ++i) layers[i].add(o.layers[i]);
  }
};

// Plain MLP with an optional skip connection: the input of layer `skip_layer`
// is [prev_activation, original_input] / sqrt(2). Hidden activations are
// either scaled softplus or ReLU; the output is linear with an optional
// sigmoid squash.
template <typename Real>
struct Mlp {
  std::vector<WnLinear<Real>> layers;
  int skip_layer = -1;
  Act act = Act::kSoftplus;
  Real act_scale = Real(100);
  bool sigmoid_out = false;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  // hidden_count hidden layers of width `width`, skip into the middle layer
  // when requested.
  void build(int in, int width, int hidden_count, int out, int skip_at = -1) {
    if (hidden_count < 1) throw std::invalid_argument("need at least one hidden layer");
    layers.clear();
    skip_layer = skip_at;
    for (int l = 0; l < hidden_count; ++l) {
      int li = l == 0 ? in : width;
      if (l == skip_at) li = width + in;
      layers.emplace_back();
      layers.back().resize(width, li);
    }
    layers.emplace_back();
    layers.back().resize(out, width);
  }

  void refresh() {
    for (auto& l : layers) l.refresh();
  }

  MatX<Real> forward(const MatX<Real>& x, MlpWorkspace<Real>* ws = nullptr) const {
    assert(x.rows() == in_dim());
    const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
    if (ws) {
      ws->inputs.resize(layers.size());
      ws->inputs[0] = x;
    }
    MatX<Real> a = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      if (static_cast<int>(l) == skip_layer) {
        MatX<Real> cat(a.rows() + x.rows(), a.cols());
        cat.topRows(a.rows()) = a;
        cat.bottomRows(x.rows()) = x;
        cat *= inv_sqrt2;
        a = std::move(cat);
      }
      if (ws && l > 0) ws->inputs[l] = a;
      MatX<Real> z = layers[l].w * a;
      z.colwise() += layers[l].b;
      if (l + 1 < layers.size()) {
        if (act == Act::kSoftplus) {
          a = z.unaryExpr([s = act_scale](Real t) { return softplus_scaled(t, s); });
        } else {
          a = z.cwiseMax(Real(0));
        }
      } else {
        if (sigmoid_out)
          a = z.unaryExpr([](Real t) { return Real(1) / (Real(1) + std::exp(-t)); });
        else
          a = std::move(z);
      }
    }
    if (ws) ws->out = a;
    return a;
  }

  // Accumulates parameter gradients into `sink` and, when dx is non-null,
  // writes the gradient w.r.t. the original input (including the skip path).
  void backward(const MatX<Real>& dy, const MlpWorkspace<Real>& ws, MlpGrads<Real>& sink,
                MatX<Real>* dx = nullptr) const {
    const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
    MatX<Real> delta;  // dL/dz of current layer
    if (sigmoid_out) {
      delta = dy.cwiseProduct(
          ws.out.unaryExpr([](Real y) { return y * (Real(1) - y); }));
    } else {
      delta = dy;
    }
    MatX<Real> dskip;  // gradient landing on the original input via the skip
    bool have_dskip = false;
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
      const MatX<Real>& input = ws.inputs[l];
      sink.layers[l].dw.noalias() += delta * input.transpose();
      sink.layers[l].db += delta.rowwise().sum();
      if (l == 0 && !dx) break;
      MatX<Real> dinput = layers[l].w.transpose() * delta;
      bool concat_here = l == skip_layer;
      if (concat_here) {
        int prev_rows = static_cast<int>(dinput.rows()) - in_dim();
        dskip = dinput.bottomRows(in_dim()) * inv_sqrt2;
        have_dskip = true;
        dinput = (dinput.topRows(prev_rows) * inv_sqrt2).eval();
      }
      if (l == 0) {
        if (dx) {
          *dx = dinput;
          if (have_dskip) *dx += dskip;
        }
        break;
      }
      // Chain through the activation of layer l-1 using its stored output.
      // At the skip layer the stored input holds the concat scaled by
      // 1/sqrt(2), so the raw activation is the top block times sqrt(2).
      Real unscale = concat_here ? std::sqrt(Real(2)) : Real(1);
      auto a_prev = input.topRows(dinput.rows());
      if (act == Act::kSoftplus) {
        delta = dinput.cwiseProduct(a_prev.unaryExpr([s = act_scale, unscale](Real a) {
          return softplus_deriv_from_output(a * unscale, s);
        }));
      } else {
        delta = dinput.cwiseProduct(
            a_prev.unaryExpr([](Real a) { return a > Real(0) ? Real(1) : Real(0); }));
      }
    }
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.v.size() + l.g.size() + l.b.size();
    return n;
  }
};

// SAL-style geometric initialization: the network, fed [x, encoding(x)] with
// near-zero encodings, starts out approximating |x| - radius. Encoding
// columns start at zero so the raw coordinates dominate; weight-norm scales
// absorb the row norms so effective weights equal the drawn values.
template <typename Real>
void geometric_init(Mlp<Real>& net, int raw_dim, Real radius, Pcg32& rng) {
  const int n_layers = static_cast<int>(net.layers.size());
  for (int l = 0; l < n_layers; ++l) {
    WnLinear<Real>& lin = net.layers[l];
    const int out = lin.out_dim();
    const int in = lin.in_dim();
    if (l == n_layers - 1) {
      Real mean = std::sqrt(Real(kPi)) / std::sqrt(Real(in));
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c)
          lin.v(r, c) = mean + Real(1e-4) * Real(rng.next_normal());
      lin.b.setZero();
      lin.b[0] = -radius;
    } else if (l == net.skip_layer) {
      // input is [hidden, x, encoding]; zero the encoding block
      int hidden = in - net.in_dim();
      Real std_ = std::sqrt(Real(2)) / std::sqrt(Real(out));
      lin.v.setZero();
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < hidden + raw_dim; ++c) lin.v(r, c) = std_ * Real(rng.next_normal());
      lin.b.setZero();
    } else if (l == 0) {
      Real std_ = std::sqrt(Real(2)) / std::sqrt(Real(out));
      lin.v.setZero();
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < raw_dim; ++c) lin.v(r, c) = std_ * Real(rng.next_normal());
      lin.b.setZero();
    } else {
      Real std_ = std::sqrt(Real(2)) / std::sqrt(Real(out));
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) lin.v(r, c) = std_ * Real(rng.next_normal());
      lin.b.setZero();
    }
    lin.absorb_norms();
  }
  // The softplus offset accumulated across the hidden units shifts the whole
  // field by a seed-dependent constant. Recenter the output bias so the zero
  // level actually sits at the requested radius (encoding inputs are treated
  // as zero here; they start near zero anyway).
  Pcg32 dirs(12345);
  const int probes = 128;
  MatX<Real> in = MatX<Real>::Zero(net.in_dim(), probes);
  for (int i = 0; i < probes; ++i)
    in.template block<3, 1>(0, i) = dirs.unit_vector<Real>() * radius;
  MatX<Real> out = net.forward(in);
  net.layers.back().b[0] -= out.row(0).mean();
}

// Kaiming-style initialization for the ReLU color network; the final layer is
// drawn small so the initial output sits near mid-gray after the sigmoid.
template <typename Real>
void he_init(Mlp<Real>& net, Pcg32& rng) {
  const int n_layers = static_cast<int>(net.layers.size());
  for (int l = 0; l < n_layers; ++l) {
    WnLinear<Real>& lin = net.layers[l];
    const int in = lin.in_dim();
    Real std_ = l == n_layers - 1 ? Real(0.1) : std::sqrt(Real(2) / Real(in));
    for (int r = 0; r < lin.out_dim(); ++r)
      for (int c = 0; c < in; ++c) lin.v(r, c) = std_ * Real(rng.next_normal());
    lin.b.setZero();
    lin.absorb_norms();
  }
}

}  // namespace hrns

// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/math.hpp"
#include "trilift/rng.hpp"
#include "trilift/tensor.hpp"

namespace trilift {

// Latent-conditioned tri-plane generator:
//   z --mapping MLP--> per-layer styles w --modulated conv stack--> 3 feature
//   planes; a point feature is the sum of three bilinear plane samples, decoded
//   by one sinusoidal layer (conditioned on mean(w)) into density and color.
// Forward passes record the activations needed by the hand-written backward
// passes; gradients are checked against central finite differences in tests.

struct GeneratorConfig {
  int latent_dim = 64;   // d_z
  int style_dim = 64;    // d_w
  int style_layers = 8;  // number of per-layer style vectors
  int mapping_layers = 8;
  int mapping_hidden = 64;
  int plane_resolution = 64;  // N
  int plane_channels = 16;    // C per plane
  int base_resolution = 8;
  int base_channels = 32;
  std::vector<int> stage_channels = {32, 24, 16};  // one per 2x upsampling stage
  int decoder_hidden = 32;
  double omega0 = 30.0;        // sinusoidal layer frequency
  double sigma_bias_init = -1.0;

  int num_stages() const {
    int n = 0, r = base_resolution;
    while (r < plane_resolution) {
      r *= 2;
      ++n;
    }
    return n;
  }

  void validate() const {
    if (latent_dim < 1 || style_dim < 1 || style_layers < 1 || mapping_layers < 1)
      throw ConfigError("generator dims must be positive");
    int r = base_resolution;
    for (size_t i = 0; i < stage_channels.size(); ++i) r *= 2;
    if (r != plane_resolution)
      throw ConfigError("stage_channels must double base_resolution up to plane_resolution");
    if (plane_channels < 1 || decoder_hidden < 1) throw ConfigError("bad channel config");
    if (static_cast<int>(stage_channels.size()) + 1 > style_layers)
      throw ConfigError("need style_layers > number of synthesis stages");
  }
};

struct Dense {
  Tensor w;  // [out][in]
  Tensor b;  // [out]
  Dense() = default;
  Dense(int out, int in) : w({out, in}), b({out}) {}
  int out_dim() const { return w.shape[0]; }
  int in_dim() const { return w.shape[1]; }
};

inline void dense_forward(const Dense& d, const double* x, double* y) {
  int out = d.out_dim(), in = d.in_dim();
  const double* wp = d.w.data();
  for (int o = 0; o < out; ++o) {
    double s = d.b[o];
    const double* row = wp + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// Accumulates dW += dy x^T, db += dy and, when dx != nullptr, dx += W^T dy.
inline void dense_backward(const Dense& d, const double* x, const double* dy, Dense& grad,
                           double* dx) {
  int out = d.out_dim(), in = d.in_dim();
  for (int o = 0; o < out; ++o) {
    double g = dy[o];
    grad.b[o] += g;
    double* grow = grad.w.data() + static_cast<size_t>(o) * in;
    const double* row = d.w.data() + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      grow[i] += g * x[i];
      if (dx) dx[i] += g * row[i];
    }
  }
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_deriv(double x) {
  double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_deriv(double x) { return sigmoid(x); }

// ---------------------------------------------------------------------------
// Parameters

struct MappingParams {
  std::vector<Dense> layers;   // mapping_layers, SiLU between
  std::vector<Dense> affines;  // style_layers, linear heads off the last hidden
};

struct SynthStage {
  Dense conv;       // weights reshaped [Cout][Cin*k*k], bias [Cout]
  int kernel = 3;   // 3 for upsampling stages, 1 for the plane head
  bool upsample = true;
  bool activate = true;
  Dense mod_gain;   // style -> per-channel gain offset (gain = 1 + .)
  Dense mod_bias;   // style -> per-channel shift
  int in_channels = 0, out_channels = 0;
};

struct SynthesisParams {
  Tensor base;  // [C0][R][R] learned constant input
  std::vector<SynthStage> stages;  // upsampling stages then the 1x1 plane head
};

struct DecoderParams {
  Tensor w_feat;   // [H][C] sinusoidal layer, feature half
  Tensor w_style;  // [H][d_w] sinusoidal layer, mean(w) half
  Tensor b;        // [H]
  Tensor sigma_w;  // [H]
  Tensor sigma_b;  // [1]
  Tensor color_w;  // [3][H]
  Tensor color_b;  // [3]
};

struct GeneratorParams {
  GeneratorConfig config;
  MappingParams mapping;
  SynthesisParams synth;
  DecoderParams decoder;
};

// Visits every parameter tensor in a fixed declared order; the order defines
// the checkpoint layout and the optimizer slot assignment.
template <typename P, typename F>
void for_each_tensor(P& params, F&& fn) {
  auto& m = params.mapping;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    fn("map/l" + std::to_string(i) + "/w", m.layers[i].w);
    fn("map/l" + std::to_string(i) + "/b", m.layers[i].b);
  }
  for (size_t i = 0; i < m.affines.size(); ++i) {
    fn("map/a" + std::to_string(i) + "/w", m.affines[i].w);
    fn("map/a" + std::to_string(i) + "/b", m.affines[i].b);
  }
  fn("synth/base", params.synth.base);
  for (size_t i = 0; i < params.synth.stages.size(); ++i) {
    auto& s = params.synth.stages[i];
    std::string p = "synth/s" + std::to_string(i) + "/";
    fn(p + "conv_w", s.conv.w);
    fn(p + "conv_b", s.conv.b);
    fn(p + "gain_w", s.mod_gain.w);
    fn(p + "gain_b", s.mod_gain.b);
    fn(p + "bias_w", s.mod_bias.w);
    fn(p + "bias_b", s.mod_bias.b);
  }
  auto& d = params.decoder;
  fn("dec/w_feat", d.w_feat);
  fn("dec/w_style", d.w_style);
  fn("dec/b", d.b);
  fn("dec/sigma_w", d.sigma_w);
  fn("dec/sigma_b", d.sigma_b);
  fn("dec/color_w", d.color_w);
  fn("dec/color_b", d.color_b);
}

inline GeneratorParams make_generator(const GeneratorConfig& cfg, uint64_t init_seed) {
  cfg.validate();
  GeneratorParams p;
  p.config = cfg;
  Rng root = Rng(init_seed).stream("generator-init");

  int in = cfg.latent_dim;
  for (int i = 0; i < cfg.mapping_layers; ++i) {
    Dense d(cfg.mapping_hidden, in);
    Rng r = root.stream("map", i);
    d.w.fill_fan_in_uniform(r, in);
    p.mapping.layers.push_back(std::move(d));
    in = cfg.mapping_hidden;
  }
  for (int i = 0; i < cfg.style_layers; ++i) {
    Dense d(cfg.style_dim, cfg.mapping_hidden);
    Rng r = root.stream("affine", i);
    d.w.fill_fan_in_uniform(r, cfg.mapping_hidden);
    p.mapping.affines.push_back(std::move(d));
  }

  p.synth.base = Tensor({cfg.base_channels, cfg.base_resolution, cfg.base_resolution});
  {
    Rng r = root.stream("base");
    p.synth.base.fill_normal(r, 0.0, 0.02);
  }
  int cin = cfg.base_channels;
  int n_stage = cfg.num_stages();
  for (int s = 0; s <= n_stage; ++s) {
    SynthStage st;
    bool head = (s == n_stage);
    st.kernel = head ? 1 : 3;
    st.upsample = !head;
    st.activate = !head;
    st.in_channels = cin;
    st.out_channels = head ? 3 * cfg.plane_channels : cfg.stage_channels[s];
    st.conv = Dense(st.out_channels, cin * st.kernel * st.kernel);
    Rng r = root.stream("stage", s);
    st.conv.w.fill_fan_in_uniform(r, cin * st.kernel * st.kernel);
    st.mod_gain = Dense(st.out_channels, cfg.style_dim);
    st.mod_bias = Dense(st.out_channels, cfg.style_dim);
    double mg = 0.25 * std::sqrt(6.0 / cfg.style_dim);
    st.mod_gain.w.fill_uniform(r, -mg, mg);
    st.mod_bias.w.fill_uniform(r, -mg, mg);
    cin = st.out_channels;
    p.synth.stages.push_back(std::move(st));
  }

  auto& d = p.decoder;
  d.w_feat = Tensor({cfg.decoder_hidden, cfg.plane_channels});
  d.w_style = Tensor({cfg.decoder_hidden, cfg.style_dim});
  d.b = Tensor({cfg.decoder_hidden});
  d.sigma_w = Tensor({cfg.decoder_hidden});
  d.sigma_b = Tensor({1});
  d.color_w = Tensor({3, cfg.decoder_hidden});
  d.color_b = Tensor({3});
  {
    // Sinusoidal first-layer init: U(+-1/fan_in) over the joint fan-in.
    Rng r = root.stream("decoder");
    double fan = cfg.plane_channels + cfg.style_dim;
    d.w_feat.fill_uniform(r, -1.0 / fan, 1.0 / fan);
    d.w_style.fill_uniform(r, -1.0 / fan, 1.0 / fan);
    d.sigma_w.fill_fan_in_uniform(r, cfg.decoder_hidden);
    d.color_w.fill_fan_in_uniform(r, cfg.decoder_hidden);
    d.sigma_b[0] = cfg.sigma_bias_init;
  }
  return p;
}

// Gradient accumulator with the same tensor tree as GeneratorParams.
inline GeneratorParams make_zero_like(const GeneratorParams& p) {
  GeneratorParams g = p;
  for_each_tensor(g, [](const std::string&, Tensor& t) { t.zero(); });
  return g;
}

// ---------------------------------------------------------------------------
// Mapping network

struct StyleVector {
  Tensor w;  // [L][d_w]
  int layers() const { return w.shape[0]; }
  int dim() const { return w.shape[1]; }

  Tensor mean() const {
    Tensor m({dim()});
    for (int l = 0; l < layers(); ++l)
      for (int i = 0; i < dim(); ++i) m[i] += w.at2(l, i);
    for (int i = 0; i < dim(); ++i) m[i] /= layers();
    return m;
  }
};

struct MappingActs {
  Tensor z;                    // input
  std::vector<Tensor> pre;     // pre-activation per mapping layer
  Tensor hidden;               // final activated hidden vector
};

inline StyleVector map_latent(const GeneratorParams& params, const Tensor& z,
                              MappingActs* acts = nullptr) {
  const auto& cfg = params.config;
  if (static_cast<int>(z.numel()) != cfg.latent_dim)
    throw ConfigError("latent dimension mismatch: got " + std::to_string(z.numel()) +
                      ", expected " + std::to_string(cfg.latent_dim));
  if (acts) {
    acts->z = z;
    acts->pre.clear();
  }
  Tensor cur = z;
  for (const auto& layer : params.mapping.layers) {
    Tensor pre({layer.out_dim()});
    dense_forward(layer, cur.data(), pre.data());
    if (acts) acts->pre.push_back(pre);
    Tensor post({layer.out_dim()});
    for (int i = 0; i < layer.out_dim(); ++i) post[i] = silu(pre[i]);
    cur = std::move(post);
  }
  if (acts) acts->hidden = cur;
  StyleVector sv;
  sv.w = Tensor({cfg.style_layers, cfg.style_dim});
  for (int l = 0; l < cfg.style_layers; ++l)
    dense_forward(params.mapping.affines[l], cur.data(), sv.w.data() + static_cast<size_t>(l) * cfg.style_dim);
  return sv;
}

inline void map_latent_backward(const GeneratorParams& params, const MappingActs& acts,
                                const Tensor& d_w, GeneratorParams& grad, Tensor* d_z) {
  const auto& cfg = params.config;
  Tensor d_hidden({cfg.mapping_hidden});
  for (int l = 0; l < cfg.style_layers; ++l)
    dense_backward(params.mapping.affines[l], acts.hidden.data(),
                   d_w.data() + static_cast<size_t>(l) * cfg.style_dim,
                   grad.mapping.affines[l], d_hidden.data());
  Tensor d_post = d_hidden;
  for (int i = cfg.mapping_layers - 1; i >= 0; --i) {
    const Tensor& pre = acts.pre[i];
    Tensor d_pre({static_cast<int>(pre.numel())});
    for (size_t k = 0; k < pre.numel(); ++k) d_pre[k] = d_post[k] * silu_deriv(pre[k]);
    const double* input =
        (i == 0) ? acts.z.data()
                 : nullptr;  // activated output of layer i-1, recomputed below
    Tensor prev_post;
    if (i > 0) {
      const Tensor& prev_pre = acts.pre[i - 1];
      prev_post = Tensor({static_cast<int>(prev_pre.numel())});
      for (size_t k = 0; k < prev_pre.numel(); ++k) prev_post[k] = silu(prev_pre[k]);
      input = prev_post.data();
    }
    Tensor d_in({params.mapping.layers[i].in_dim()});
    dense_backward(params.mapping.layers[i], input, d_pre.data(), grad.mapping.layers[i],
                   d_in.data());
    d_post = std::move(d_in);
  }
  if (d_z) {
    for (size_t k = 0; k < d_z->numel(); ++k) (*d_z)[k] += d_post[k];
  }
}

// ---------------------------------------------------------------------------
// Synthesis network

// Feature maps are [C][H][W] row-major.
inline void upsample2_nearest(const Tensor& x, Tensor& y) {
  int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i) {
      const double* row = x.data() + (static_cast<size_t>(ch) * h + i) * w;
      double* o0 = y.data() + (static_cast<size_t>(ch) * 2 * h + 2 * i) * 2 * w;
      double* o1 = o0 + 2 * w;
      for (int j = 0; j < w; ++j) {
        o0[2 * j] = o0[2 * j + 1] = row[j];
        o1[2 * j] = o1[2 * j + 1] = row[j];
      }
    }
}

inline void upsample2_nearest_vjp(const Tensor& dy, Tensor& dx) {
  int c = dx.shape[0], h = dx.shape[1], w = dx.shape[2];
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i) {
      double* row = dx.data() + (static_cast<size_t>(ch) * h + i) * w;
      const double* g0 = dy.data() + (static_cast<size_t>(ch) * 2 * h + 2 * i) * 2 * w;
      const double* g1 = g0 + 2 * w;
      for (int j = 0; j < w; ++j)
        row[j] += g0[2 * j] + g0[2 * j + 1] + g1[2 * j] + g1[2 * j + 1];
    }
}

// 3x3 (pad 1) or 1x1 convolution; weight layout [Cout][Cin*k*k].
inline void conv_forward(const Dense& conv, int kernel, const Tensor& x, Tensor& y) {
  int cin = x.shape[0], h = x.shape[1], w = x.shape[2];
  int cout = y.shape[0];
  int pad = kernel / 2;
  for (int co = 0; co < cout; ++co) {
    double* out = y.data() + static_cast<size_t>(co) * h * w;
    std::fill(out, out + static_cast<size_t>(h) * w, conv.b[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const double* in = x.data() + static_cast<size_t>(ci) * h * w;
      const double* wrow =
          conv.w.data() + (static_cast<size_t>(co) * cin + ci) * kernel * kernel;
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double wv = wrow[ky * kernel + kx];
          int dy = ky - pad, dx = kx - pad;
          int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int yy = y0; yy < y1; ++yy) {
            double* orow = out + static_cast<size_t>(yy) * w;
            const double* irow = in + static_cast<size_t>(yy + dy) * w + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
          }
        }
    }
  }
}

inline void conv_backward(const Dense& conv, int kernel, const Tensor& x, const Tensor& dy,
                          Dense& grad, Tensor* dx) {
  int cin = x.shape[0], h = x.shape[1], w = x.shape[2];
  int cout = dy.shape[0];
  int pad = kernel / 2;
  for (int co = 0; co < cout; ++co) {
    const double* g = dy.data() + static_cast<size_t>(co) * h * w;
    double bs = 0;
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) bs += g[i];
    grad.b[co] += bs;
    for (int ci = 0; ci < cin; ++ci) {
      const double* in = x.data() + static_cast<size_t>(ci) * h * w;
      double* dxp = dx ? dx->data() + static_cast<size_t>(ci) * h * w : nullptr;
      const double* wrow =
          conv.w.data() + (static_cast<size_t>(co) * cin + ci) * kernel * kernel;
      double* gwrow = grad.w.data() + (static_cast<size_t>(co) * cin + ci) * kernel * kernel;
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double wv = wrow[ky * kernel + kx];
          int dyo = ky - pad, dxo = kx - pad;
          int y0 = std::max(0, -dyo), y1 = std::min(h, h - dyo);
          int x0 = std::max(0, -dxo), x1 = std::min(w, w - dxo);
          // Four-lane accumulators keep the weight-gradient reduction
          // vectorizable without reassociating a single serial sum.
          double acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
          for (int yy = y0; yy < y1; ++yy) {
            const double* grow = g + static_cast<size_t>(yy) * w;
            const double* irow = in + static_cast<size_t>(yy + dyo) * w + dxo;
            double* drow = dxp ? dxp + static_cast<size_t>(yy + dyo) * w + dxo : nullptr;
            int xx = x0;
            for (; xx + 4 <= x1; xx += 4) {
              acc0 += grow[xx] * irow[xx];
              acc1 += grow[xx + 1] * irow[xx + 1];
              acc2 += grow[xx + 2] * irow[xx + 2];
              acc3 += grow[xx + 3] * irow[xx + 3];
              if (drow) {
                drow[xx] += wv * grow[xx];
                drow[xx + 1] += wv * grow[xx + 1];
                drow[xx + 2] += wv * grow[xx + 2];
                drow[xx + 3] += wv * grow[xx + 3];
              }
            }
            for (; xx < x1; ++xx) {
              acc0 += grow[xx] * irow[xx];
              if (drow) drow[xx] += wv * grow[xx];
            }
          }
          gwrow[ky * kernel + kx] += ((acc0 + acc1) + (acc2 + acc3));
        }
    }
  }
}

// ---------------------------------------------------------------------------
// Tri-plane field

// Plane p holds channels [N][N][C] in query-friendly layout, sampled at
//   p=0: (x, y)   p=1: (x, z)   p=2: (y, z)
// with the first coordinate along columns and the second along rows; grid node
// i sits at normalized coordinate -1 + 2i/(N-1), so [-1,1] exactly covers the
// plane content.
struct TriPlaneField {
  int resolution = 0, channels = 0;
  std::array<Tensor, 3> planes;

  TriPlaneField() = default;
  TriPlaneField(int n, int c) : resolution(n), channels(c) {
    for (auto& p : planes) p = Tensor({n, n, c});
  }
};

struct SynthesisActs {
  std::vector<Tensor> inputs;   // stage input (post-upsample) per stage
  std::vector<Tensor> conv_out; // conv output Y per stage
  std::vector<Tensor> mod_pre;  // modulated pre-activation M per stage
  std::vector<Tensor> gains;    // per-channel gain per stage
  Tensor raw_planes;            // [3C][N][N] head output
};

inline void stage_style_mod(const SynthStage& st, const double* w_s, Tensor& gain, Tensor& bias) {
  gain = Tensor({st.out_channels});
  bias = Tensor({st.out_channels});
  dense_forward(st.mod_gain, w_s, gain.data());
  dense_forward(st.mod_bias, w_s, bias.data());
  for (int c = 0; c < st.out_channels; ++c) gain[c] += 1.0;
}

// Style layer feeding synthesis stage s (the head uses the next layer).
inline const double* stage_style(const StyleVector& w, size_t s) {
  int l = std::min<int>(static_cast<int>(s), w.layers() - 1);
  return w.w.data() + static_cast<size_t>(l) * w.dim();
}

inline TriPlaneField synthesize_planes(const GeneratorParams& params, const StyleVector& w,
                                       SynthesisActs* acts = nullptr) {
  const auto& cfg = params.config;
  if (w.layers() != cfg.style_layers || w.dim() != cfg.style_dim)
    throw ConfigError("style vector shape mismatch");
  Tensor x = params.synth.base;
  if (acts) {
    acts->inputs.clear();
    acts->conv_out.clear();
    acts->mod_pre.clear();
    acts->gains.clear();
  }
  for (size_t s = 0; s < params.synth.stages.size(); ++s) {
    const auto& st = params.synth.stages[s];
    Tensor u;
    if (st.upsample) {
      u = Tensor({x.shape[0], x.shape[1] * 2, x.shape[2] * 2});
      upsample2_nearest(x, u);
    } else {
      u = std::move(x);
    }
    Tensor y({st.out_channels, u.shape[1], u.shape[2]});
    conv_forward(st.conv, st.kernel, u, y);
    Tensor gain, bias;
    stage_style_mod(st, stage_style(w, s), gain, bias);
    Tensor m({st.out_channels, u.shape[1], u.shape[2]});
    size_t hw = static_cast<size_t>(u.shape[1]) * u.shape[2];
    for (int c = 0; c < st.out_channels; ++c) {
      const double* yp = y.data() + c * hw;
      double* mp = m.data() + c * hw;
      double g = gain[c], bb = bias[c];
      for (size_t i = 0; i < hw; ++i) mp[i] = g * yp[i] + bb;
    }
    Tensor a;
    if (st.activate) {
      a = Tensor({st.out_channels, u.shape[1], u.shape[2]});
      for (size_t i = 0; i < m.numel(); ++i) a[i] = silu(m[i]);
    } else {
      a = m;
    }
    if (acts) {
      acts->inputs.push_back(std::move(u));
      acts->conv_out.push_back(std::move(y));
      acts->mod_pre.push_back(st.activate ? std::move(m) : a);
      acts->gains.push_back(std::move(gain));
    }
    x = std::move(a);
  }

  // Repack [3C][N][N] into per-plane [N][N][C].
  int n = cfg.plane_resolution, c = cfg.plane_channels;
  TriPlaneField field(n, c);
  for (int p = 0; p < 3; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (static_cast<size_t>(p) * c + ch) * n * n;
      for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col)
          field.planes[p].at3(row, col, ch) = src[static_cast<size_t>(row) * n + col];
    }
  if (acts) acts->raw_planes = std::move(x);
  return field;
}

// d_planes is in query layout; accumulates into grad and d_w.
inline void synthesize_planes_backward(const GeneratorParams& params, const StyleVector& w,
                                       const SynthesisActs& acts,
                                       const std::array<Tensor, 3>& d_planes,
                                       GeneratorParams& grad, Tensor& d_w) {
  const auto& cfg = params.config;
  int n = cfg.plane_resolution, c = cfg.plane_channels;
  Tensor dx({3 * c, n, n});
  for (int p = 0; p < 3; ++p)
    for (int ch = 0; ch < c; ++ch) {
      double* dst = dx.data() + (static_cast<size_t>(p) * c + ch) * n * n;
      for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col)
          dst[static_cast<size_t>(row) * n + col] = d_planes[p].at3(row, col, ch);
    }

  for (int s = static_cast<int>(params.synth.stages.size()) - 1; s >= 0; --s) {
    const auto& st = params.synth.stages[s];
    auto& gstage = grad.synth.stages[s];
    const Tensor& u = acts.inputs[s];
    const Tensor& y = acts.conv_out[s];
    const Tensor& m = acts.mod_pre[s];
    const Tensor& gain = acts.gains[s];
    size_t hw = static_cast<size_t>(u.shape[1]) * u.shape[2];

    // Through the activation.
    Tensor dm({st.out_channels, u.shape[1], u.shape[2]});
    if (st.activate) {
      for (size_t i = 0; i < dm.numel(); ++i) dm[i] = dx[i] * silu_deriv(m[i]);
    } else {
      dm = dx;
    }

    // Through the modulation: m = gain * y + bias.
    Tensor dgain({st.out_channels}), dbias({st.out_channels});
    Tensor dy({st.out_channels, u.shape[1], u.shape[2]});
    for (int ch = 0; ch < st.out_channels; ++ch) {
      const double* dmp = dm.data() + ch * hw;
      const double* yp = y.data() + ch * hw;
      double* dyp = dy.data() + ch * hw;
      double g = gain[ch], sg = 0, sb = 0;
      for (size_t i = 0; i < hw; ++i) {
        sg += dmp[i] * yp[i];
        sb += dmp[i];
        dyp[i] = g * dmp[i];
      }
      dgain[ch] = sg;
      dbias[ch] = sb;
    }
    const double* w_s = stage_style(w, s);
    int l = std::min<int>(s, w.layers() - 1);
    double* dws = d_w.data() + static_cast<size_t>(l) * w.dim();
    dense_backward(st.mod_gain, w_s, dgain.data(), gstage.mod_gain, dws);
    dense_backward(st.mod_bias, w_s, dbias.data(), gstage.mod_bias, dws);

    // Through the convolution and the upsample.
    Tensor du({u.shape[0], u.shape[1], u.shape[2]});
    conv_backward(st.conv, st.kernel, u, dy, gstage.conv, &du);
    if (st.upsample) {
      Tensor dprev({u.shape[0], u.shape[1] / 2, u.shape[2] / 2});
      upsample2_nearest_vjp(du, dprev);
      dx = std::move(dprev);
    } else {
      dx = std::move(du);
    }
  }
  axpy(1.0, dx, grad.synth.base);
}

// ---------------------------------------------------------------------------
// Decoder (single sinusoidal layer + density/color heads)

// Per-style context precomputed once per object: the style half of the
// sinusoidal layer's pre-activation is constant across samples.
struct StyleContext {
  Tensor wbar;       // [d_w] mean over style layers
  Tensor style_pre;  // [H] = w_style * wbar
};

inline StyleContext make_style_context(const GeneratorParams& params, const StyleVector& w) {
  StyleContext ctx;
  ctx.wbar = w.mean();
  ctx.style_pre = Tensor({params.config.decoder_hidden});
  const auto& d = params.decoder;
  int h = params.config.decoder_hidden, dw = params.config.style_dim;
  for (int i = 0; i < h; ++i) {
    double s = 0;
    const double* row = d.w_style.data() + static_cast<size_t>(i) * dw;
    for (int j = 0; j < dw; ++j) s += row[j] * ctx.wbar[j];
    ctx.style_pre[i] = s;
  }
  return ctx;
}

// Scratch space reused across samples of a ray batch.
struct QueryScratch {
  std::vector<double> feature;    // [C]
  std::vector<double> pre;        // [H] sinusoidal pre-activation (before omega0)
  std::vector<double> act;        // [H] sin(omega0 * pre)
  std::vector<double> d_act;      // [H]
  std::vector<double> d_pre;      // [H]
  std::vector<double> d_feature;  // [C]

  void resize(int c, int h) {
    feature.assign(c, 0.0);
    pre.assign(h, 0.0);
    act.assign(h, 0.0);
    d_act.assign(h, 0.0);
    d_pre.assign(h, 0.0);
    d_feature.assign(c, 0.0);
  }
};

struct BilinearTap {
  int i0, i1, j0, j1;     // column / row node indices
  double w00, w01, w10, w11;  // weights for (j,i) = (j0,i0),(j0,i1),(j1,i0),(j1,i1)
};

inline BilinearTap bilinear_tap(double a, double b, int n) {
  // a along columns, b along rows; both in [-1, 1].
  double u = (a + 1.0) * 0.5 * (n - 1);
  double v = (b + 1.0) * 0.5 * (n - 1);
  BilinearTap t;
  t.i0 = std::min(static_cast<int>(std::floor(u)), n - 2);
  t.j0 = std::min(static_cast<int>(std::floor(v)), n - 2);
  t.i0 = std::max(t.i0, 0);
  t.j0 = std::max(t.j0, 0);
  t.i1 = t.i0 + 1;
  t.j1 = t.j0 + 1;
  double fu = u - t.i0, fv = v - t.j0;
  t.w00 = (1 - fu) * (1 - fv);
  t.w01 = fu * (1 - fv);
  t.w10 = (1 - fu) * fv;
  t.w11 = fu * fv;
  return t;
}

inline void plane_coords(const Vec3& x, int p, double& a, double& b) {
  switch (p) {
    case 0: a = x.x; b = x.y; break;
    case 1: a = x.x; b = x.z; break;
    default: a = x.y; b = x.z; break;
  }
}

// Summed bilinear plane samples at normalized position x (must be in [-1,1]^3).
inline void gather_feature(const TriPlaneField& field, const Vec3& x, double* feature,
                           BilinearTap taps[3]) {
  int n = field.resolution, c = field.channels;
  for (int a = 0; a < 3; ++a)
    if (x[a] < -1.0 - 1e-9 || x[a] > 1.0 + 1e-9)
      throw std::domain_error("query point outside [-1,1]^3");
  std::fill(feature, feature + c, 0.0);
  for (int p = 0; p < 3; ++p) {
    double pa, pb;
    plane_coords(x, p, pa, pb);
    BilinearTap t = bilinear_tap(pa, pb, n);
    taps[p] = t;
    const Tensor& pl = field.planes[p];
    const double* r0 = pl.data() + (static_cast<size_t>(t.j0) * n + t.i0) * c;
    const double* r1 = pl.data() + (static_cast<size_t>(t.j0) * n + t.i1) * c;
    const double* r2 = pl.data() + (static_cast<size_t>(t.j1) * n + t.i0) * c;
    const double* r3 = pl.data() + (static_cast<size_t>(t.j1) * n + t.i1) * c;
    for (int ch = 0; ch < c; ++ch)
      feature[ch] += t.w00 * r0[ch] + t.w01 * r1[ch] + t.w10 * r2[ch] + t.w11 * r3[ch];
  }
}

// Decodes the gathered feature into (sigma, color); fills scratch for backward.
inline void decode_sample(const GeneratorParams& params, const StyleContext& ctx,
                          QueryScratch& ws, double& sigma, Vec3& color) {
  const auto& d = params.decoder;
  const auto& cfg = params.config;
  int h = cfg.decoder_hidden, c = cfg.plane_channels;
  for (int i = 0; i < h; ++i) {
    double s = d.b[i] + ctx.style_pre[i];
    const double* row = d.w_feat.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) s += row[j] * ws.feature[j];
    ws.pre[i] = s;
    ws.act[i] = std::sin(cfg.omega0 * s);
  }
  double sp = d.sigma_b[0];
  for (int i = 0; i < h; ++i) sp += d.sigma_w[i] * ws.act[i];
  sigma = softplus(sp);
  for (int k = 0; k < 3; ++k) {
    double cp = d.color_b[k];
    const double* row = d.color_w.data() + static_cast<size_t>(k) * h;
    for (int i = 0; i < h; ++i) cp += row[i] * ws.act[i];
    color[k] = sigmoid(cp);
  }
}

// Public single-point query.
struct FieldSample {
  double sigma = 0;
  Vec3 color;
  std::vector<double> feature;
};

inline FieldSample query_field(const GeneratorParams& params, const TriPlaneField& field,
                               const StyleContext& ctx, const Vec3& x) {
  QueryScratch ws;
  ws.resize(field.channels, params.config.decoder_hidden);
  BilinearTap taps[3];
  gather_feature(field, x, ws.feature.data(), taps);
  FieldSample out;
  decode_sample(params, ctx, ws, out.sigma, out.color);
  out.feature = ws.feature;
  return out;
}

// Gradient sinks for the per-sample backward pass.
struct FieldGrads {
  std::array<Tensor, 3> planes;  // query layout, same shapes as the field
  GeneratorParams* params_grad = nullptr;  // decoder tensors accumulate here
  Tensor d_style_pre;            // [H], folded into w_style / wbar at the end

  void init(const GeneratorParams& params) {
    int n = params.config.plane_resolution, c = params.config.plane_channels;
    for (auto& p : planes) p = Tensor({n, n, c});
    d_style_pre = Tensor({params.config.decoder_hidden});
  }
};

// Backward through decode + gather for one sample. `ws` must hold the forward
// state of this sample; d_sigma / d_color are adjoints of (sigma, color).
inline void decode_sample_backward(const GeneratorParams& params, const StyleContext& ctx,
                                   const Vec3& x, const BilinearTap taps[3], QueryScratch& ws,
                                   double sigma_pre_unused, double d_sigma, const Vec3& d_color,
                                   FieldGrads& sink) {
  (void)sigma_pre_unused;
  (void)x;
  const auto& d = params.decoder;
  auto& gd = sink.params_grad->decoder;
  const auto& cfg = params.config;
  int h = cfg.decoder_hidden, c = cfg.plane_channels;

  // Heads. sigma = softplus(sp), color_k = sigmoid(cp_k); recompute pre-sums.
  double sp = d.sigma_b[0];
  for (int i = 0; i < h; ++i) sp += d.sigma_w[i] * ws.act[i];
  double dsp = d_sigma * softplus_deriv(sp);
  gd.sigma_b[0] += dsp;
  std::fill(ws.d_act.begin(), ws.d_act.end(), 0.0);
  for (int i = 0; i < h; ++i) {
    gd.sigma_w[i] += dsp * ws.act[i];
    ws.d_act[i] += dsp * d.sigma_w[i];
  }
  for (int k = 0; k < 3; ++k) {
    double cp = d.color_b[k];
    const double* row = d.color_w.data() + static_cast<size_t>(k) * h;
    for (int i = 0; i < h; ++i) cp += row[i] * ws.act[i];
    double s = sigmoid(cp);
    double dcp = d_color[k] * s * (1.0 - s);
    gd.color_b[k] += dcp;
    double* grow = gd.color_w.data() + static_cast<size_t>(k) * h;
    for (int i = 0; i < h; ++i) {
      grow[i] += dcp * ws.act[i];
      ws.d_act[i] += dcp * row[i];
    }
  }

  // Sinusoidal layer: act = sin(omega0 * pre).
  for (int i = 0; i < h; ++i)
    ws.d_pre[i] = ws.d_act[i] * cfg.omega0 * std::cos(cfg.omega0 * ws.pre[i]);

  std::fill(ws.d_feature.begin(), ws.d_feature.end(), 0.0);
  for (int i = 0; i < h; ++i) {
    double dp = ws.d_pre[i];
    gd.b[i] += dp;
    sink.d_style_pre[i] += dp;
    const double* row = d.w_feat.data() + static_cast<size_t>(i) * c;
    double* grow = gd.w_feat.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      grow[j] += dp * ws.feature[j];
      ws.d_feature[j] += dp * row[j];
    }
  }

  // Scatter feature adjoint into the three planes.
  int n = params.config.plane_resolution;
  for (int p = 0; p < 3; ++p) {
    const BilinearTap& t = taps[p];
    Tensor& pl = sink.planes[p];
    double* r0 = pl.data() + (static_cast<size_t>(t.j0) * n + t.i0) * c;
    double* r1 = pl.data() + (static_cast<size_t>(t.j0) * n + t.i1) * c;
    double* r2 = pl.data() + (static_cast<size_t>(t.j1) * n + t.i0) * c;
    double* r3 = pl.data() + (static_cast<size_t>(t.j1) * n + t.i1) * c;
    for (int ch = 0; ch < c; ++ch) {
      double df = ws.d_feature[ch];
      r0[ch] += t.w00 * df;
      r1[ch] += t.w01 * df;
      r2[ch] += t.w10 * df;
      r3[ch] += t.w11 * df;
    }
  }
}

// Folds the accumulated style-path adjoints into w_style, wbar and then the
// per-layer style gradient d_w (mean over layers), after all samples ran.
inline void finalize_style_grads(const GeneratorParams& params, const StyleContext& ctx,
                                 const FieldGrads& sink, Tensor& d_w) {
  const auto& cfg = params.config;
  auto& gd = sink.params_grad->decoder;
  int h = cfg.decoder_hidden, dw = cfg.style_dim;
  Tensor d_wbar({dw});
  for (int i = 0; i < h; ++i) {
    double s = sink.d_style_pre[i];
    const double* row = params.decoder.w_style.data() + static_cast<size_t>(i) * dw;
    double* grow = gd.w_style.data() + static_cast<size_t>(i) * dw;
    for (int j = 0; j < dw; ++j) {
      grow[j] += s * ctx.wbar[j];
      d_wbar[j] += s * row[j];
    }
  }
  int layers = cfg.style_layers;
  for (int l = 0; l < layers; ++l) {
    double* dst = d_w.data() + static_cast<size_t>(l) * dw;
    for (int j = 0; j < dw; ++j) dst[j] += d_wbar[j] / layers;
  }
}

}  // namespace trilift

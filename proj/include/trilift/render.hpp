// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/generator.hpp"
#include "trilift/geometry.hpp"
#include "trilift/image.hpp"
#include "trilift/rng.hpp"

namespace trilift {

// Discretized volume rendering along rays clipped to an oriented box. The
// integral is approximated piecewise-constant:
//   alpha_i = 1 - exp(-sigma_i * delta_i),  T_i = prod_{j<i} (1 - alpha_j),
//   C = sum_i T_i alpha_i c_i,  opacity = 1 - T_far.
// Stratified jitter is used during optimization, midpoints during evaluation,
// so evaluation renders are exactly reproducible.

struct RaySampleSpec {
  int samples_per_ray = 64;
  bool stratified = false;
  uint64_t jitter_seed = 0;

  void validate() const {
    if (samples_per_ray < 2) throw ConfigError("samples_per_ray must be >= 2");
  }
};

struct RenderOutput {
  Image rgb;            // HxWx3
  Image transmittance;  // HxW, T(t_far)
  Image mask;           // HxW, 1 where opacity >= 0.5
  Image depth;          // HxW meters (expected termination), 0 where mask = 0
};

// Foreground test on the far transmittance: opaque rays are foreground, the
// 0.5 boundary included.
inline int mask_from_transmittance(double t_far) { return (1.0 - t_far) >= 0.5 ? 1 : 0; }

// Everything rendering needs about one object, with per-style precomputation.
struct FieldView {
  const GeneratorParams* params = nullptr;
  const TriPlaneField* field = nullptr;
  StyleContext ctx;
};

inline FieldView make_field_view(const GeneratorParams& params, const TriPlaneField& field,
                                 const StyleVector& w) {
  FieldView v;
  v.params = &params;
  v.field = &field;
  v.ctx = make_style_context(params, w);
  return v;
}

struct RayRadiance {
  Vec3 color;       // premultiplied (transparent background)
  double t_far = 1; // transmittance after the last sample
  double depth = 0; // opacity-weighted expected termination, meters
};

constexpr double kOpacityEps = 1e-6;
constexpr double kMaxOpticalDepth = 80.0;  // exp(-80) underflows any visible effect

// Per-ray sample positions within [t_near, t_far]; stratified jitter draws one
// uniform per segment from the ray's own stream.
inline void sample_ts(const Ray& ray, const RaySampleSpec& spec, uint64_t ray_id,
                      std::vector<double>& ts, std::vector<double>& deltas) {
  int n = spec.samples_per_ray;
  double span = ray.t_far - ray.t_near;
  double step = span / n;
  ts.resize(n);
  deltas.assign(n, step);
  if (spec.stratified) {
    Rng r = Rng(spec.jitter_seed).stream("jitter").stream(ray_id);
    double prev = ray.t_near;
    for (int i = 0; i < n; ++i) ts[i] = ray.t_near + (i + r.uniform()) * step;
    for (int i = 0; i + 1 < n; ++i) deltas[i] = ts[i + 1] - ts[i];
    deltas[n - 1] = ray.t_far - ts[n - 1];
    (void)prev;
  } else {
    for (int i = 0; i < n; ++i) ts[i] = ray.t_near + (i + 0.5) * step;
  }
}

// Scratch reused across rays.
struct RayScratch {
  std::vector<double> ts, deltas;
  std::vector<double> sigma, alpha, trans, dalpha;
  std::vector<Vec3> color;
  std::vector<Vec3> positions;  // normalized box coords
  QueryScratch query;
};

// Renders one ray already clipped to the box (ray.t_near/t_far set). The box
// maps world samples into the field's [-1,1]^3 domain.
inline RayRadiance render_ray(const FieldView& view, const BoxPose& box, const Ray& ray,
                              const RaySampleSpec& spec, RayScratch& ws, uint64_t ray_id = 0) {
  spec.validate();
  int n = spec.samples_per_ray;
  sample_ts(ray, spec, ray_id, ws.ts, ws.deltas);
  ws.query.resize(view.field->channels, view.params->config.decoder_hidden);

  RayRadiance out;
  double t_acc = 1.0;
  Vec3 c_acc{0, 0, 0};
  double depth_acc = 0;
  BilinearTap taps[3];
  for (int i = 0; i < n; ++i) {
    Vec3 p = ray.origin + ray.direction * ws.ts[i];
    Vec3 q = normalize_to_box(p, box, 1e-6);
    gather_feature(*view.field, q, ws.query.feature.data(), taps);
    double sigma;
    Vec3 col;
    decode_sample(*view.params, view.ctx, ws.query, sigma, col);
    if (!std::isfinite(sigma) || !std::isfinite(col.x) || !std::isfinite(col.y) ||
        !std::isfinite(col.z))
      throw NumericError("non-finite field output on ray " + std::to_string(ray_id));
    double od = std::min(sigma * ws.deltas[i], kMaxOpticalDepth);
    double a = -std::expm1(-od);
    double wgt = t_acc * a;
    c_acc += col * wgt;
    depth_acc += wgt * ws.ts[i];
    t_acc *= 1.0 - a;
  }
  out.color = c_acc;
  out.t_far = t_acc;
  double opacity = 1.0 - t_acc;
  out.depth = opacity > 0 ? depth_acc / std::max(opacity, kOpacityEps) : 0.0;
  return out;
}

// Backward for one ray: given adjoints of (color, opacity), recomputes the
// forward pass and accumulates gradients into `sink` (planes, decoder, style).
inline void render_ray_backward(const FieldView& view, const BoxPose& box, const Ray& ray,
                                const RaySampleSpec& spec, const Vec3& d_color,
                                double d_opacity, FieldGrads& sink, RayScratch& ws,
                                uint64_t ray_id = 0) {
  int n = spec.samples_per_ray;
  sample_ts(ray, spec, ray_id, ws.ts, ws.deltas);
  ws.query.resize(view.field->channels, view.params->config.decoder_hidden);
  ws.sigma.resize(n);
  ws.alpha.resize(n);
  ws.trans.resize(n);
  ws.color.resize(n);
  ws.positions.resize(n);

  double t_acc = 1.0;
  BilinearTap taps[3];
  for (int i = 0; i < n; ++i) {
    Vec3 p = ray.origin + ray.direction * ws.ts[i];
    ws.positions[i] = normalize_to_box(p, box, 1e-6);
    gather_feature(*view.field, ws.positions[i], ws.query.feature.data(), taps);
    double sigma;
    Vec3 col;
    decode_sample(*view.params, view.ctx, ws.query, sigma, col);
    double od = std::min(sigma * ws.deltas[i], kMaxOpticalDepth);
    ws.sigma[i] = sigma;
    ws.alpha[i] = -std::expm1(-od);
    ws.trans[i] = t_acc;  // transmittance before sample i
    ws.color[i] = col;
    t_acc *= 1.0 - ws.alpha[i];
  }

  // d w_i for weight w_i = T_i alpha_i: from color and opacity terms.
  // dL/dalpha_i = T_i g_i - (1 / (1-alpha_i)) sum_{j>i} w_j g_j, where
  // g_i = dot(d_color, c_i) + d_opacity.
  double suffix = 0.0;  // sum_{j>i} w_j g_j
  ws.dalpha.resize(n);
  for (int i = n - 1; i >= 0; --i) {
    double g = dot(d_color, ws.color[i]) + d_opacity;
    double w_i = ws.trans[i] * ws.alpha[i];
    double denom = std::max(1.0 - ws.alpha[i], 1e-300);
    ws.dalpha[i] = ws.trans[i] * g - suffix / denom;
    suffix += w_i * g;
  }

  // Second sweep: per-sample VJP into the field.
  for (int i = 0; i < n; ++i) {
    double od = ws.sigma[i] * ws.deltas[i];
    double d_od = od < kMaxOpticalDepth ? ws.dalpha[i] * std::exp(-od) : 0.0;
    double d_sigma = d_od * ws.deltas[i];
    double w_i = ws.trans[i] * ws.alpha[i];
    Vec3 d_col = d_color * w_i;
    if (d_sigma == 0.0 && d_col.x == 0.0 && d_col.y == 0.0 && d_col.z == 0.0) continue;
    gather_feature(*view.field, ws.positions[i], ws.query.feature.data(), taps);
    double sigma;
    Vec3 col;
    decode_sample(*view.params, view.ctx, ws.query, sigma, col);
    decode_sample_backward(*view.params, view.ctx, ws.positions[i], taps, ws.query, 0.0,
                           d_sigma, d_col, sink);
  }
}

// Renders a full image of the boxed object. Rays that miss the box are
// transparent: color 0, T_far 1, depth 0.
inline RenderOutput render_image(const FieldView& view, const CameraIntrinsics& cam,
                                 const RigidPose& cam_pose, const BoxPose& box,
                                 const RaySampleSpec& spec) {
  spec.validate();
  RenderOutput out;
  out.rgb = Image(cam.width, cam.height, 3);
  out.transmittance = Image(cam.width, cam.height, 1);
  out.mask = Image(cam.width, cam.height, 1);
  out.depth = Image(cam.width, cam.height, 1);
  RayScratch ws;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Ray ray = pixel_ray(cam, cam_pose, {x + 0.5, y + 0.5});
      auto hit = ray_box(ray, box);
      double t_far = 1.0;
      if (hit) {
        ray.t_near = hit->first;
        ray.t_far = hit->second;
        uint64_t ray_id = static_cast<uint64_t>(y) * cam.width + x;
        RayRadiance r = render_ray(view, box, ray, spec, ws, ray_id);
        out.rgb.at(y, x, 0) = r.color.x;
        out.rgb.at(y, x, 1) = r.color.y;
        out.rgb.at(y, x, 2) = r.color.z;
        t_far = r.t_far;
        int m = mask_from_transmittance(t_far);
        out.mask.at(y, x, 0) = m;
        out.depth.at(y, x, 0) = m ? r.depth : 0.0;
      }
      out.transmittance.at(y, x, 0) = t_far;
    }
  return out;
}

// Canonical object box: the unit cube [-1,1]^3, where world coordinates and
// normalized field coordinates coincide.
inline BoxPose unit_cube_box() {
  BoxPose b;
  b.l = b.w = b.h = 2.0;
  return b;
}

}  // namespace trilift

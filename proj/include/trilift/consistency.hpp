// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trilift/geometry.hpp"
#include "trilift/image.hpp"
#include "trilift/losses.hpp"
#include "trilift/rng.hpp"

namespace trilift {

// Multi-view consistency: render two nearby views plus depth, forward-warp one
// into the other through the depth map, and measure the photometric gap on
// covered pixels. Low error means the renders describe one coherent 3D object.

struct ViewPairSpec {
  double radius = 4.0;
  double elevation_min_deg = 0.0, elevation_max_deg = 20.0;
  double offset_deg = 5.0;  // azimuth gap between the paired views
  int count = 100;
  uint64_t seed = 0;

  void validate() const {
    if (offset_deg <= 0 || count < 1) throw std::invalid_argument("bad view pair spec");
  }
};

struct RenderedView {
  Image rgb;    // HxWx3
  Image depth;  // HxW ray distance, 0 where invalid
};

struct WarpResult {
  Image rgb;       // warped colors
  Image validity;  // 1 where a source pixel landed
};

// Forward splat with nearest-pixel assignment and z-buffering. Pixels of A
// with depth > 0 are lifted along their rays, transformed into B, projected,
// and written to the nearest pixel; nearer points win.
inline WarpResult warp_view(const Image& rgb_a, const Image& depth_a, const RigidPose& pose_a,
                            const RigidPose& pose_b, const CameraIntrinsics& cam) {
  if (rgb_a.width != depth_a.width || rgb_a.height != depth_a.height)
    throw std::invalid_argument("warp_view shape mismatch");
  WarpResult out;
  out.rgb = Image(rgb_a.width, rgb_a.height, rgb_a.channels);
  out.validity = Image(rgb_a.width, rgb_a.height, 1);
  Image zbuf(rgb_a.width, rgb_a.height, 1);
  for (size_t i = 0; i < zbuf.numel(); ++i) zbuf.v[i] = 1e30;

  for (int y = 0; y < rgb_a.height; ++y)
    for (int x = 0; x < rgb_a.width; ++x) {
      double d = depth_a.at(y, x, 0);
      if (d <= 0) continue;
      Vec3 dir = pose_a.rotation * pixel_dir_cam(cam, {x + 0.5, y + 0.5});
      Vec3 p_world = pose_a.translation + dir * d;
      Vec3 p_b = pose_b.apply_inverse(p_world);
      if (p_b.z <= 1e-9) continue;
      double u = cam.fx * p_b.x / p_b.z + cam.cx;
      double v = cam.fy * p_b.y / p_b.z + cam.cy;
      int iu = static_cast<int>(std::lround(u - 0.5));
      int iv = static_cast<int>(std::lround(v - 0.5));
      if (iu < 0 || iu >= out.rgb.width || iv < 0 || iv >= out.rgb.height) continue;
      double dist_b = norm(p_world - pose_b.translation);
      if (dist_b >= zbuf.at(iv, iu, 0)) continue;
      zbuf.at(iv, iu, 0) = dist_b;
      for (int c = 0; c < rgb_a.channels; ++c) out.rgb.at(iv, iu, c) = rgb_a.at(y, x, c);
      out.validity.at(iv, iu, 0) = 1.0;
    }
  return out;
}

// Mean absolute RGB difference over valid pixels; empty validity is reported
// as missing rather than zero.
inline std::optional<double> reprojection_error(const Image& rendered_b, const Image& warped,
                                                const Image& validity) {
  if (!rendered_b.same_shape(warped) || validity.width != rendered_b.width ||
      validity.height != rendered_b.height)
    throw std::invalid_argument("reprojection_error shape mismatch");
  double acc = 0;
  size_t n = 0;
  for (int y = 0; y < rendered_b.height; ++y)
    for (int x = 0; x < rendered_b.width; ++x) {
      if (validity.at(y, x, 0) < 0.5) continue;
      for (int c = 0; c < rendered_b.channels; ++c)
        acc += std::abs(rendered_b.at(y, x, c) - warped.at(y, x, c));
      ++n;
    }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n * rendered_b.channels);
}

struct PairResult {
  int pair_id = 0;
  double azimuth_a_deg = 0, azimuth_b_deg = 0;
  std::optional<double> re;
  double valid_fraction = 0;
};

struct MetricReport {
  std::vector<PairResult> pairs;
  double mean_re = 0;
  int evaluated = 0;  // pairs with a defined error

  void finalize() {
    double acc = 0;
    evaluated = 0;
    for (const auto& p : pairs)
      if (p.re) {
        acc += *p.re;
        ++evaluated;
      }
    mean_re = evaluated ? acc / evaluated : 0.0;
  }
};

using ViewRenderer = std::function<RenderedView(const RigidPose&)>;

// Renders `count` random adjacent-view pairs and reports the reprojection
// error of warping A into B.
inline MetricReport evaluate_consistency(const ViewRenderer& render, const CameraIntrinsics& cam,
                                         const ViewPairSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).stream("consistency-pairs");
  MetricReport report;
  for (int k = 0; k < spec.count; ++k) {
    double az_a = rng.uniform(0.0, 360.0);
    double el = rng.uniform(spec.elevation_min_deg, spec.elevation_max_deg);
    double az_b = az_a + spec.offset_deg;
    RigidPose pose_a = pose_from_azel(deg2rad(az_a), deg2rad(el), spec.radius);
    RigidPose pose_b = pose_from_azel(deg2rad(az_b), deg2rad(el), spec.radius);
    RenderedView va = render(pose_a);
    RenderedView vb = render(pose_b);
    WarpResult warped = warp_view(va.rgb, va.depth, pose_a, pose_b, cam);
    PairResult pr;
    pr.pair_id = k;
    pr.azimuth_a_deg = az_a;
    pr.azimuth_b_deg = az_b;
    pr.re = reprojection_error(vb.rgb, warped.rgb, warped.validity);
    double valid = 0;
    for (double v : warped.validity.v) valid += v;
    pr.valid_fraction = valid / static_cast<double>(warped.validity.numel());
    report.pairs.push_back(pr);
  }
  report.finalize();
  return report;
}

// Per-view deterministic recolor used as the inconsistency-injected baseline:
// the underlying geometry is unchanged but each view's colors are scaled
// differently, which a consistent renderer would never produce.
inline ViewRenderer make_inconsistent_baseline(const ViewRenderer& render, double swing = 0.35) {
  return [render, swing](const RigidPose& pose) {
    RenderedView v = render(pose);
    uint64_t h = 0xcbf29ce484222325ull;
    for (double x : {pose.translation.x, pose.translation.y, pose.translation.z}) {
      uint64_t bits;
      std::memcpy(&bits, &x, 8);
      h = (h ^ bits) * 0x100000001b3ull;
    }
    double factor = (h & 1) ? 1.0 + swing : 1.0 - swing;
    for (int y = 0; y < v.rgb.height; ++y)
      for (int x = 0; x < v.rgb.width; ++x) {
        if (v.depth.at(y, x, 0) <= 0) continue;
        for (int c = 0; c < 3; ++c) v.rgb.at(y, x, c) = clamp01(v.rgb.at(y, x, c) * factor);
      }
    return v;
  };
}

inline std::string report_to_csv(const MetricReport& report) {
  std::string out = "pair_id,azimuth_a,azimuth_b,re,valid_fraction\n";
  char buf[256];
  for (const auto& p : report.pairs) {
    if (p.re)
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f\n", p.pair_id, p.azimuth_a_deg,
                    p.azimuth_b_deg, *p.re, p.valid_fraction);
    else
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,missing,%.6f\n", p.pair_id, p.azimuth_a_deg,
                    p.azimuth_b_deg, p.valid_fraction);
    out += buf;
  }
  return out;
}

}  // namespace trilift

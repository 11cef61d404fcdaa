// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trilift/math.hpp"
#include "trilift/rng.hpp"

namespace trilift {

// Axis conventions used throughout:
//   world: right-handed, +y up, ground planes are y = constant.
//   camera: +z forward (optical axis), +x right, +y down in the image;
//           pixel (u, v) has u growing rightward, v growing downward.
// RigidPose maps local (camera/box) coordinates into the parent frame:
// p_world = R * p_local + t, so t is the camera center in world coordinates.

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("focal lengths must be positive");
    if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
      throw std::invalid_argument("principal point must be inside the image");
  }

  CameraIntrinsics scaled(double s) const {
    return CameraIntrinsics(fx * s, fy * s, cx * s, cy * s,
                            static_cast<int>(std::lround(width * s)),
                            static_cast<int>(std::lround(height * s)));
  }
};

struct RigidPose {
  Mat3 rotation;
  Vec3 translation;

  RigidPose() = default;
  RigidPose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {
    if (max_abs_off_orthonormal(r) > 1e-9 || std::abs(r.det() - 1.0) > 1e-9)
      throw std::invalid_argument("rotation must be orthonormal with det +1");
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transposed() * (p - translation); }
  RigidPose inverse() const {
    Mat3 rt = rotation.transposed();
    RigidPose out;
    out.rotation = rt;
    out.translation = -(rt * translation);
    return out;
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  double t_near = 0, t_far = 0;
};

struct ViewSchedule {
  double azimuth_min_deg = 0, azimuth_max_deg = 360;
  double elevation_min_deg = 0, elevation_max_deg = 20;
  double radius = 4.0;
  int count = 1;
};

// Camera space direction of the ray through pixel center px.
inline Vec3 pixel_dir_cam(const CameraIntrinsics& cam, const Vec2& px) {
  return normalized(Vec3{(px.x - cam.cx) / cam.fx, (px.y - cam.cy) / cam.fy, 1.0});
}

// Ray through a pixel; origin is the camera center in world coordinates.
inline Ray pixel_ray(const CameraIntrinsics& cam, const RigidPose& pose, const Vec2& px) {
  if (px.x < 0 || px.x > cam.width || px.y < 0 || px.y > cam.height)
    throw std::domain_error("pixel outside image bounds");
  Ray r;
  r.origin = pose.translation;
  r.direction = pose.rotation * pixel_dir_cam(cam, px);
  return r;
}

// Projects a world point; returns empty when the point is at or behind the
// camera plane.
inline std::optional<Vec2> project(const CameraIntrinsics& cam, const RigidPose& pose,
                                   const Vec3& p_world) {
  Vec3 pc = pose.apply_inverse(p_world);
  if (pc.z <= 1e-12) return std::nullopt;
  return Vec2{cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy};
}

// Slab intersection of a ray (origin o, direction d, not necessarily unit)
// against the axis-aligned box [lo, hi]. Zero direction components are treated
// as parallel: inside the slab passes, outside misses. Entry is clamped to
// t >= 0; returns empty on miss.
inline std::optional<std::pair<double, double>> slab_intersect(const Vec3& o, const Vec3& d,
                                                               const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double inv = 1.0 / d[a];
    double ta = (lo[a] - o[a]) * inv;
    double tb = (hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t1 < 0.0 || t0 >= t1) return std::nullopt;
  return std::make_pair(t0, t1);
}

// 7-DoF box: center (x, y, z), dimensions l (local x), h (local y), w (local
// z), yaw about the local y axis. Lives in whichever frame the caller uses
// (camera frame during composition, world frame elsewhere).
struct BoxPose {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double theta = 0;

  Vec3 center() const { return {x, y, z}; }
  Mat3 yaw() const { return rotation_y(theta); }

  void validate() const {
    if (l <= 0 || w <= 0 || h <= 0) throw std::invalid_argument("box dimensions must be positive");
    if (!(theta > -kPi - 1e-12 && theta <= kPi + 1e-12))
      throw std::invalid_argument("yaw must lie in (-pi, pi]");
  }

  // Box-local metric coordinates (meters, yaw removed), origin at the center.
  Vec3 to_local(const Vec3& p_world) const { return yaw().transposed() * (p_world - center()); }
  Vec3 from_local(const Vec3& p_local) const { return yaw() * p_local + center(); }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    int i = 0;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) out[i++] = from_local({sx * l / 2, sy * h / 2, sz * w / 2});
    return out;
  }
};

// Maps a point inside the oriented box onto [-1,1]^3 (corners to corners).
inline Vec3 normalize_to_box(const Vec3& p_world, const BoxPose& box, double tol = 1e-9) {
  Vec3 q = box.to_local(p_world);
  Vec3 n{2.0 * q.x / box.l, 2.0 * q.y / box.h, 2.0 * q.z / box.w};
  for (int a = 0; a < 3; ++a)
    if (std::abs(n[a]) > 1.0 + tol) throw std::domain_error("point outside box");
  return n;
}

inline Vec3 denormalize_from_box(const Vec3& n, const BoxPose& box) {
  return box.from_local({n.x * box.l / 2.0, n.y * box.h / 2.0, n.z * box.w / 2.0});
}

// Ray vs oriented box. The ray is mapped into the normalized box frame and
// intersected with [-1,1]^3 by slabs; the affine map preserves the ray
// parameter, so the returned (t_near, t_far) are valid in the caller's frame.
inline std::optional<std::pair<double, double>> ray_box(const Ray& ray, const BoxPose& box) {
  box.validate();
  Vec3 scale{2.0 / box.l, 2.0 / box.h, 2.0 / box.w};
  Mat3 rt = box.yaw().transposed();
  Vec3 o = cwise_mul(rt * (ray.origin - box.center()), scale);
  Vec3 d = cwise_mul(rt * ray.direction, scale);
  return slab_intersect(o, d, {-1, -1, -1}, {1, 1, 1});
}

// Ray vs the canonical cube [-1,1]^3.
inline std::optional<std::pair<double, double>> ray_unit_cube(const Ray& ray) {
  return slab_intersect(ray.origin, ray.direction, {-1, -1, -1}, {1, 1, 1});
}

// Intersects the pixel ray with the horizontal plane y = ground_height and
// returns the (x, z) ground coordinates. Rays parallel to the plane or moving
// away from it produce an empty result.
inline std::optional<Vec2> ipm_ground(const CameraIntrinsics& cam, const RigidPose& pose,
                                      double ground_height, const Vec2& px) {
  Ray r = pixel_ray(cam, pose, px);
  double dy = r.direction.y;
  if (dy == 0.0) return std::nullopt;
  double t = (ground_height - r.origin.y) / dy;
  if (t <= 0.0) return std::nullopt;
  Vec3 p = r.origin + r.direction * t;
  return Vec2{p.x, p.z};
}

// Camera pose that places the camera at `position` with the optical axis
// through `target`. `up_hint` resolves the image roll; a hint parallel to the
// view direction falls back to +z.
inline RigidPose look_at(const Vec3& position, const Vec3& target, const Vec3& up_hint = {0, 1, 0}) {
  Vec3 fwd = normalized(target - position);
  Vec3 right_raw = cross(fwd, up_hint);
  if (norm(right_raw) < 1e-9) right_raw = cross(fwd, Vec3{0, 0, 1});
  Vec3 right = normalized(right_raw);
  Vec3 down = cross(fwd, right);  // +y in camera frame points image-down
  RigidPose pose;
  pose.rotation = Mat3::from_cols(right, down, fwd);
  pose.translation = position;
  return pose;
}

inline Vec3 spherical_position(double azimuth, double elevation, double radius) {
  return {radius * std::sin(azimuth) * std::cos(elevation), radius * std::sin(elevation),
          -radius * std::cos(azimuth) * std::cos(elevation)};
}

inline RigidPose pose_from_azel(double azimuth, double elevation, double radius) {
  return look_at(spherical_position(azimuth, elevation, radius), {0, 0, 0});
}

// Samples look-at-origin poses on the sphere, azimuth/elevation uniform within
// the schedule ranges. Azimuth 0, elevation 0 sits at (0, 0, -radius).
inline std::vector<RigidPose> sample_view_schedule(const ViewSchedule& schedule, uint64_t seed) {
  if (schedule.count < 1) throw std::invalid_argument("schedule count must be >= 1");
  if (schedule.radius <= 0) throw std::invalid_argument("schedule radius must be positive");
  if (schedule.elevation_min_deg < 0 || schedule.elevation_max_deg >= 90 ||
      schedule.elevation_min_deg > schedule.elevation_max_deg)
    throw std::invalid_argument("elevation range must lie within [0, 90)");
  Rng rng = Rng(seed).stream("view-schedule");
  std::vector<RigidPose> out;
  out.reserve(schedule.count);
  for (int i = 0; i < schedule.count; ++i) {
    double az = deg2rad(rng.uniform(schedule.azimuth_min_deg, schedule.azimuth_max_deg));
    double el = deg2rad(rng.uniform(schedule.elevation_min_deg, schedule.elevation_max_deg));
    out.push_back(look_at(spherical_position(az, el, schedule.radius), {0, 0, 0}));
  }
  return out;
}

}  // namespace trilift

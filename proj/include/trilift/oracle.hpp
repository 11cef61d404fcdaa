// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "trilift/fit.hpp"
#include "trilift/geometry.hpp"
#include "trilift/image.hpp"
#include "trilift/io.hpp"
#include "trilift/rng.hpp"

namespace trilift {

// Procedural multi-view source: parametric primitive "vehicles" with exact
// poses, analytic masks and analytic depth. Serves both as lifting input and
// as ground truth for consistency metrics; the data contract (posed RGB +
// mask + pose label) matches what the lifting stage expects from any source.

enum class PrimitiveKind { Box, Ellipsoid, Cylinder };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Vec3 center;
  // Box: half extents; Ellipsoid: radii; Cylinder: (radius, half length along
  // z, unused) with the axis along +z.
  Vec3 param{0.5, 0.5, 0.5};
  Vec3 albedo{0.5, 0.5, 0.5};
};

struct PrimitiveScene {
  std::vector<Primitive> parts;

  bool inside_unit_cube() const {
    for (const auto& p : parts) {
      Vec3 ext = p.param;
      if (p.kind == PrimitiveKind::Cylinder) ext = {p.param.x, p.param.x, p.param.y};
      for (int a = 0; a < 3; ++a)
        if (std::abs(p.center[a]) + ext[a] > 1.0) return false;
    }
    return true;
  }
};

struct PrimitiveHit {
  double t = 0;
  Vec3 normal;
  const Primitive* prim = nullptr;
};

namespace detail {
inline std::optional<PrimitiveHit> hit_box(const Primitive& p, const Vec3& o, const Vec3& d) {
  auto r = slab_intersect(o - p.center, d, -p.param, p.param);
  if (!r || r->first <= 1e-9) return std::nullopt;
  PrimitiveHit h;
  h.t = r->first;
  Vec3 q = o + d * h.t - p.center;
  int axis = 0;
  double best = 0;
  for (int a = 0; a < 3; ++a) {
    double rel = std::abs(q[a]) / p.param[a];
    if (rel > best) {
      best = rel;
      axis = a;
    }
  }
  Vec3 n{0, 0, 0};
  n[axis] = q[axis] > 0 ? 1.0 : -1.0;
  h.normal = n;
  return h;
}

inline std::optional<PrimitiveHit> hit_ellipsoid(const Primitive& p, const Vec3& o,
                                                 const Vec3& d) {
  Vec3 oc = o - p.center;
  Vec3 os{oc.x / p.param.x, oc.y / p.param.y, oc.z / p.param.z};
  Vec3 ds{d.x / p.param.x, d.y / p.param.y, d.z / p.param.z};
  double a = dot(ds, ds), b = 2.0 * dot(os, ds), c = dot(os, os) - 1.0;
  double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= 1e-9) t = (-b + sq) / (2 * a);
  if (t <= 1e-9) return std::nullopt;
  PrimitiveHit h;
  h.t = t;
  Vec3 q = o + d * t - p.center;
  h.normal = normalized(Vec3{q.x / (p.param.x * p.param.x), q.y / (p.param.y * p.param.y),
                             q.z / (p.param.z * p.param.z)});
  h.prim = &p;
  return h;
}

inline std::optional<PrimitiveHit> hit_cylinder(const Primitive& p, const Vec3& o,
                                                const Vec3& d) {
  // Axis along +z through the center; radius param.x, half length param.y.
  Vec3 oc = o - p.center;
  double R = p.param.x, hl = p.param.y;
  double a = d.x * d.x + d.y * d.y;
  std::optional<PrimitiveHit> best;
  auto consider = [&](double t, const Vec3& n) {
    if (t <= 1e-9) return;
    if (!best || t < best->t) {
      PrimitiveHit h;
      h.t = t;
      h.normal = n;
      best = h;
    }
  };
  if (a > 1e-15) {
    double b = 2.0 * (oc.x * d.x + oc.y * d.y);
    double c = oc.x * oc.x + oc.y * oc.y - R * R;
    double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        double z = oc.z + t * d.z;
        if (std::abs(z) <= hl) {
          Vec3 q = oc + d * t;
          consider(t, normalized(Vec3{q.x, q.y, 0}));
        }
      }
    }
  }
  if (std::abs(d.z) > 1e-15) {
    for (double zcap : {-hl, hl}) {
      double t = (zcap - oc.z) / d.z;
      Vec3 q = oc + d * t;
      if (q.x * q.x + q.y * q.y <= R * R) consider(t, Vec3{0, 0, zcap > 0 ? 1.0 : -1.0});
    }
  }
  return best;
}
}  // namespace detail

inline std::optional<PrimitiveHit> intersect_primitive(const Primitive& p, const Vec3& o,
                                                       const Vec3& d) {
  std::optional<PrimitiveHit> h;
  switch (p.kind) {
    case PrimitiveKind::Box: h = detail::hit_box(p, o, d); break;
    case PrimitiveKind::Ellipsoid: h = detail::hit_ellipsoid(p, o, d); break;
    case PrimitiveKind::Cylinder: h = detail::hit_cylinder(p, o, d); break;
  }
  if (h) h->prim = &p;
  return h;
}

inline std::optional<PrimitiveHit> intersect_scene(const PrimitiveScene& scene, const Vec3& o,
                                                   const Vec3& d) {
  std::optional<PrimitiveHit> best;
  for (const auto& p : scene.parts) {
    auto h = intersect_primitive(p, o, d);
    if (h && (!best || h->t < best->t)) best = h;
  }
  return best;
}

// Deterministic car-like arrangement: body box, cabin box, four wheel
// cylinders; proportions and palette vary with the seed. Everything fits
// inside [-1,1]^3.
inline PrimitiveScene gen_scene(uint64_t shape_seed) {
  Rng rng = Rng(shape_seed).stream("oracle-scene");
  PrimitiveScene s;

  double body_hl = rng.uniform(0.72, 0.88);   // half length (x)
  double body_hh = rng.uniform(0.16, 0.22);   // half height (y)
  double body_hw = rng.uniform(0.28, 0.38);   // half width (z)
  double wheel_r = rng.uniform(0.11, 0.15);
  double wheel_hw = rng.uniform(0.05, 0.08);
  double body_y = -0.18 + body_hh;  // wheels touch y ~= -0.18 - wheel_r

  // Seeded palette: a vivid body color, darker cabin, near-black wheels.
  double hue = rng.uniform(0.0, 6.0);
  auto hsv = [](double h, double sat, double val) {
    double c = val * sat;
    double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (h < 1) { r = c; g = x; }
    else if (h < 2) { r = x; g = c; }
    else if (h < 3) { g = c; b = x; }
    else if (h < 4) { g = x; b = c; }
    else if (h < 5) { r = x; b = c; }
    else { r = c; b = x; }
    return Vec3{r, g, b};
  };
  Vec3 body_color = hsv(hue, rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95));
  Vec3 cabin_color = body_color * rng.uniform(0.35, 0.6) + Vec3{0.05, 0.05, 0.10};
  Vec3 wheel_color{0.08, 0.08, 0.08};

  Primitive body;
  body.kind = PrimitiveKind::Box;
  body.center = {0, body_y, 0};
  body.param = {body_hl, body_hh, body_hw};
  body.albedo = body_color;
  s.parts.push_back(body);

  Primitive cabin;
  cabin.kind = rng.uniform() < 0.5 ? PrimitiveKind::Box : PrimitiveKind::Ellipsoid;
  double cab_hl = body_hl * rng.uniform(0.38, 0.52);
  double cab_hh = rng.uniform(0.12, 0.18);
  double cab_hw = body_hw * rng.uniform(0.78, 0.92);
  double cab_x = -body_hl * rng.uniform(0.05, 0.25);  // toward the rear
  cabin.center = {cab_x, body_y + body_hh + cab_hh * 0.9, 0};
  cabin.param = {cab_hl, cab_hh, cab_hw};
  cabin.albedo = cabin_color;
  s.parts.push_back(cabin);

  double axle_x = body_hl * rng.uniform(0.55, 0.68);
  double wheel_y = body_y - body_hh;
  for (int sx : {-1, 1})
    for (int sz : {-1, 1}) {
      Primitive wheel;
      wheel.kind = PrimitiveKind::Cylinder;
      wheel.center = {sx * axle_x, wheel_y, sz * (body_hw + wheel_hw * 0.4)};
      wheel.param = {wheel_r, wheel_hw, 0};
      wheel.albedo = wheel_color;
      s.parts.push_back(wheel);
    }
  return s;
}

struct OracleView {
  PosedImage posed;
  Image depth;  // ray-distance meters, 0 on background
};

// Exact primitive rendering: nearest hit, Lambertian shading under one fixed
// directional light, black background. Mask and depth are analytic.
inline OracleView render_oracle(const PrimitiveScene& scene, const CameraIntrinsics& cam,
                                const RigidPose& pose) {
  const Vec3 light = normalized(Vec3{0.45, 0.85, -0.28});  // toward the light
  const double ambient = 0.35;
  OracleView out;
  out.posed.rgb = Image(cam.width, cam.height, 3);
  out.posed.mask = Image(cam.width, cam.height, 1);
  out.depth = Image(cam.width, cam.height, 1);
  out.posed.pose = pose;
  out.posed.cam = cam;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Ray ray = pixel_ray(cam, pose, {x + 0.5, y + 0.5});
      auto h = intersect_scene(scene, ray.origin, ray.direction);
      if (!h) continue;
      double shade = ambient + (1.0 - ambient) * std::max(0.0, dot(h->normal, light));
      for (int c = 0; c < 3; ++c) out.posed.rgb.at(y, x, c) = clamp01(h->prim->albedo[c] * shade);
      out.posed.mask.at(y, x, 0) = 1.0;
      out.depth.at(y, x, 0) = h->t;
    }
  return out;
}

struct DatasetOptions {
  int num_objects = 1;
  ViewSchedule schedule;
  CameraIntrinsics cam;
  uint64_t seed = 0;
  double pose_noise_azimuth_deg = 0;   // optional label-noise injection
  double pose_noise_elevation_deg = 0;
};

struct DatasetViewMeta {
  double azimuth_deg = 0, elevation_deg = 0;
  RigidPose pose;
};

// Writes <root>/<object_id>/{view_%03d.png, mask_%03d.png, depth_%03d.f32,
// poses.json, manifest.json}. Fully deterministic per seed, file bytes
// included.
inline std::vector<std::string> gen_dataset(const std::string& root, const DatasetOptions& opt) {
  if (opt.num_objects < 1) throw ConfigError("num_objects must be >= 1");
  fs::create_directories(root);
  std::vector<std::string> object_dirs;
  Rng rng = Rng(opt.seed).stream("oracle-dataset");
  for (int obj = 0; obj < opt.num_objects; ++obj) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "obj_%03d", obj);
    std::string obj_id = idbuf;
    fs::path dir = fs::path(root) / obj_id;
    fs::create_directories(dir);
    uint64_t shape_seed = Rng(opt.seed).stream("shape").stream(obj).next_u64();
    PrimitiveScene scene = gen_scene(shape_seed);

    // Stratified azimuth, uniform elevation; optional pose-label noise.
    Rng vrng = rng.stream("views").stream(obj);
    ordered_json poses;
    poses["version"] = 1;
    poses["intrinsics"] = {{"fx", opt.cam.fx},         {"fy", opt.cam.fy},
                           {"cx", opt.cam.cx},         {"cy", opt.cam.cy},
                           {"width", opt.cam.width},   {"height", opt.cam.height}};
    poses["views"] = ordered_json::array();
    ordered_json manifest;
    manifest["version"] = 1;
    manifest["object_id"] = obj_id;
    manifest["seed"] = opt.seed;
    manifest["shape_seed"] = shape_seed;
    manifest["view_count"] = opt.schedule.count;
    manifest["width"] = opt.cam.width;
    manifest["height"] = opt.cam.height;
    manifest["radius"] = opt.schedule.radius;

    double az_span = opt.schedule.azimuth_max_deg - opt.schedule.azimuth_min_deg;
    for (int v = 0; v < opt.schedule.count; ++v) {
      double az = opt.schedule.azimuth_min_deg +
                  (v + vrng.uniform()) * az_span / opt.schedule.count;
      double el = vrng.uniform(opt.schedule.elevation_min_deg, opt.schedule.elevation_max_deg);
      double az_label = az, el_label = el;
      if (opt.pose_noise_azimuth_deg > 0) az_label += vrng.normal(0, opt.pose_noise_azimuth_deg);
      if (opt.pose_noise_elevation_deg > 0)
        el_label += vrng.normal(0, opt.pose_noise_elevation_deg);
      RigidPose render_pose = pose_from_azel(deg2rad(az), deg2rad(el), opt.schedule.radius);
      RigidPose label_pose =
          pose_from_azel(deg2rad(az_label), deg2rad(el_label), opt.schedule.radius);

      OracleView view = render_oracle(scene, opt.cam, render_pose);
      char name[64];
      std::snprintf(name, sizeof name, "view_%03d.png", v);
      write_png((dir / name).string(), view.posed.rgb);
      std::snprintf(name, sizeof name, "mask_%03d.png", v);
      write_png((dir / name).string(), view.posed.mask);
      std::snprintf(name, sizeof name, "depth_%03d.f32", v);
      write_f32_grid((dir / name).string(), view.depth);

      ordered_json jp;
      jp["azimuth_deg"] = az_label;
      jp["elevation_deg"] = el_label;
      const Mat3& r = label_pose.rotation;
      const Vec3& t = label_pose.translation;
      jp["extrinsic"] = {r(0, 0), r(0, 1), r(0, 2), t.x, r(1, 0), r(1, 1),
                         r(1, 2), t.y,     r(2, 0), r(2, 1), r(2, 2), t.z};
      poses["views"].push_back(jp);
    }
    write_text_file((dir / "poses.json").string(), poses.dump(2) + "\n");
    write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    object_dirs.push_back(dir.string());
  }
  return object_dirs;
}

// Loads a generated dataset directory back into object records (plus depth
// maps when requested).
struct LoadedObject {
  ObjectRecord record;
  std::vector<Image> depths;
  std::vector<double> azimuth_deg, elevation_deg;
};

inline LoadedObject load_object_dir(const std::string& dir, bool with_depth = false) {
  LoadedObject out;
  ordered_json poses = ordered_json::parse(std::ifstream(fs::path(dir) / "poses.json"));
  ordered_json manifest = ordered_json::parse(std::ifstream(fs::path(dir) / "manifest.json"));
  out.record.id = manifest.at("object_id");
  auto ji = poses.at("intrinsics");
  CameraIntrinsics cam(ji.at("fx"), ji.at("fy"), ji.at("cx"), ji.at("cy"), ji.at("width"),
                       ji.at("height"));
  int v = 0;
  for (const auto& jp : poses.at("views")) {
    PosedImage pi;
    pi.cam = cam;
    char name[64];
    std::snprintf(name, sizeof name, "view_%03d.png", v);
    pi.rgb = read_png((fs::path(dir) / name).string(), 3);
    std::snprintf(name, sizeof name, "mask_%03d.png", v);
    pi.mask = read_png((fs::path(dir) / name).string(), 1);
    std::array<double, 12> e{};
    for (int i = 0; i < 12; ++i) e[i] = jp.at("extrinsic").at(i).get<double>();
    Mat3 r;
    r.m = {e[0], e[1], e[2], e[4], e[5], e[6], e[8], e[9], e[10]};
    pi.pose = RigidPose(r, {e[3], e[7], e[11]});
    if (with_depth) {
      std::snprintf(name, sizeof name, "depth_%03d.f32", v);
      out.depths.push_back(read_f32_grid((fs::path(dir) / name).string()));
    }
    out.azimuth_deg.push_back(jp.at("azimuth_deg"));
    out.elevation_deg.push_back(jp.at("elevation_deg"));
    out.record.views.push_back(std::move(pi));
    ++v;
  }
  return out;
}

}  // namespace trilift

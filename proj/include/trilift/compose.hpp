// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/generator.hpp"
#include "trilift/geometry.hpp"
#include "trilift/image.hpp"
#include "trilift/losses.hpp"
#include "trilift/render.hpp"
#include "trilift/rng.hpp"

namespace trilift {

// Scene augmentation: sample 7-DoF box poses, filter by drivable area, render
// lifted objects into the boxes, cast ground shadows, feather-blend into the
// background, and emit annotations that match the sampled poses exactly.
// Everything here works in the camera frame (+z forward, +y down), where the
// ground plane sits at y = camera height.

struct SampleDistributions {
  double x_min = -20.0, x_max = 20.0;
  double y_mu = 1.65, y_sigma = 0.2;  // default: ground height from calibration
  double z_min = 5.0, z_max = 45.0;
  double l_mu = 3.89, w_mu = 1.63, h_mu = 1.53;  // dataset dimension means
  double lwh_sigma = 0.5;
  double theta_mu_abs = kPi / 2, theta_sigma = kPi / 2;

  void validate() const {
    if (y_sigma <= 0 || lwh_sigma <= 0 || theta_sigma <= 0)
      throw ConfigError("distribution sigmas must be positive");
    if (l_mu <= 0 || w_mu <= 0 || h_mu <= 0) throw ConfigError("dimension means must be positive");
  }
};

// One draw from the stated laws. Dimensions are redrawn until positive (the
// truncated tail is ~1e-3 of the mass at the defaults); theta picks +mu or -mu
// with probability 1/2 and wraps into (-pi, pi].
inline BoxPose sample_pose(const SampleDistributions& dist, Rng& rng) {
  dist.validate();
  BoxPose p;
  p.x = rng.uniform(dist.x_min, dist.x_max);
  p.y = rng.normal(dist.y_mu, dist.y_sigma);
  p.z = rng.uniform(dist.z_min, dist.z_max);
  auto draw_dim = [&](double mu) {
    for (int i = 0; i < 64; ++i) {
      double v = rng.normal(mu, dist.lwh_sigma);
      if (v > 0.05) return v;
    }
    return mu;
  };
  p.l = draw_dim(dist.l_mu);
  p.w = draw_dim(dist.w_mu);
  p.h = draw_dim(dist.h_mu);
  double mu = rng.uniform() < 0.5 ? dist.theta_mu_abs : -dist.theta_mu_abs;
  p.theta = wrap_angle(rng.normal(mu, dist.theta_sigma));
  return p;
}

// Bird's-eye-view occupancy grid over the ground plane; cell (ix, iz) center
// sits at (x0 + (ix+0.5)*m_per_cell, z0 + (iz+0.5)*m_per_cell).
struct DrivableMap {
  int nx = 0, nz = 0;
  double m_per_cell = 0.5;
  double x0 = -25.0, z0 = 0.0;
  std::vector<uint8_t> cells;

  void validate() const {
    if (nx < 1 || nz < 1 || m_per_cell <= 0 || cells.size() != static_cast<size_t>(nx) * nz)
      throw ConfigError("bad drivable map");
  }

  bool at(int ix, int iz) const { return cells[static_cast<size_t>(iz) * nx + ix] != 0; }

  std::optional<std::pair<int, int>> cell_of(double x, double z) const {
    int ix = static_cast<int>(std::floor((x - x0) / m_per_cell));
    int iz = static_cast<int>(std::floor((z - z0) / m_per_cell));
    if (ix < 0 || ix >= nx || iz < 0 || iz >= nz) return std::nullopt;
    return std::make_pair(ix, iz);
  }

  static DrivableMap all_drivable(int nx, int nz, double m_per_cell, double x0, double z0) {
    DrivableMap m;
    m.nx = nx;
    m.nz = nz;
    m.m_per_cell = m_per_cell;
    m.x0 = x0;
    m.z0 = z0;
    m.cells.assign(static_cast<size_t>(nx) * nz, 1);
    return m;
  }
};

// Marks a BEV cell drivable iff its center projects into a drivable pixel of
// the image-plane segmentation mask (>= 0.5, i.e. >= 128 in 8-bit PNGs).
inline DrivableMap ipm_drivable_map(const Image& seg_mask, const CameraIntrinsics& cam,
                                    const RigidPose& cam_pose, double ground_height,
                                    const DrivableMap& grid_spec) {
  DrivableMap m = grid_spec;
  m.cells.assign(static_cast<size_t>(m.nx) * m.nz, 0);
  for (int iz = 0; iz < m.nz; ++iz)
    for (int ix = 0; ix < m.nx; ++ix) {
      Vec3 ground{m.x0 + (ix + 0.5) * m.m_per_cell, ground_height,
                  m.z0 + (iz + 0.5) * m.m_per_cell};
      auto px = project(cam, cam_pose, ground);
      if (!px) continue;
      int u = static_cast<int>(std::floor(px->x));
      int v = static_cast<int>(std::floor(px->y));
      if (u < 0 || u >= seg_mask.width || v < 0 || v >= seg_mask.height) continue;
      if (seg_mask.at(v, u, 0) >= 0.5) m.cells[static_cast<size_t>(iz) * m.nx + ix] = 1;
    }
  return m;
}

// True iff the box's BEV footprint center lands on a drivable cell; anything
// outside the grid counts as non-drivable.
inline bool filter_drivable(const BoxPose& pose, const DrivableMap& map,
                            const RigidPose& cam_pose) {
  map.validate();
  Vec3 center_world = cam_pose.apply(pose.center());
  auto cell = map.cell_of(center_world.x, center_world.z);
  if (!cell) return false;
  return map.at(cell->first, cell->second);
}

// Radially soft ellipse: intensity 1 at the center, cosine falloff to 0 at the
// rim.
inline Image make_default_shadow_sprite(int size = 64) {
  Image s(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double u = 2.0 * (x + 0.5) / size - 1.0;
      double v = 2.0 * (y + 0.5) / size - 1.0;
      double d = std::sqrt(u * u + v * v);
      s.at(y, x, 0) = d < 1.0 ? 0.5 * (1.0 + std::cos(kPi * d)) : 0.0;
    }
  return s;
}

// Projects the sprite onto the ground plane under the box footprint (l x w,
// rotated by theta) and darkens covered pixels by (1 - strength * sprite).
inline Image cast_shadow(const Image& frame, const BoxPose& pose, const CameraIntrinsics& cam,
                         const RigidPose& cam_pose, const Image& sprite, double strength) {
  if (sprite.channels != 1) throw std::invalid_argument("shadow sprite must be grayscale");
  Image out = frame;
  if (strength <= 0) return out;
  pose.validate();
  double ground_y = pose.y + pose.h / 2.0;  // bottom face (+y is down)

  // Pixel bounds from the projected footprint corners.
  double px_min = 1e30, px_max = -1e30, py_min = 1e30, py_max = -1e30;
  int behind = 0;
  for (int sx : {-1, 1})
    for (int sz : {-1, 1}) {
      Vec3 corner = pose.from_local({sx * pose.l / 2, pose.h / 2, sz * pose.w / 2});
      auto p = project(cam, cam_pose, corner);
      if (!p) {
        ++behind;
        continue;
      }
      px_min = std::min(px_min, p->x);
      px_max = std::max(px_max, p->x);
      py_min = std::min(py_min, p->y);
      py_max = std::max(py_max, p->y);
    }
  if (behind == 4) return out;
  int x0 = std::max(0, static_cast<int>(std::floor(px_min)));
  int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(px_max)));
  int y0 = std::max(0, static_cast<int>(std::floor(py_min)));
  int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(py_max)));

  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      Ray ray = pixel_ray(cam, cam_pose, {x + 0.5, y + 0.5});
      if (ray.direction.y == 0.0) continue;
      double t = (ground_y - ray.origin.y) / ray.direction.y;
      if (t <= 0) continue;
      Vec3 p = ray.origin + ray.direction * t;
      Vec3 local = pose.to_local(p);
      double u = local.x / pose.l + 0.5;
      double v = local.z / pose.w + 0.5;
      if (u < 0 || u > 1 || v < 0 || v > 1) continue;
      // Bilinear sprite sample.
      double su = u * (sprite.width - 1), sv = v * (sprite.height - 1);
      int iu = std::min(static_cast<int>(su), sprite.width - 2);
      int iv = std::min(static_cast<int>(sv), sprite.height - 2);
      double fu = su - iu, fv = sv - iv;
      double val = (1 - fu) * (1 - fv) * sprite.at(iv, iu, 0) +
                   fu * (1 - fv) * sprite.at(iv, iu + 1, 0) +
                   (1 - fu) * fv * sprite.at(iv + 1, iu, 0) +
                   fu * fv * sprite.at(iv + 1, iu + 1, 0);
      double factor = 1.0 - strength * val;
      for (int c = 0; c < frame.channels; ++c) out.at(y, x, c) = clamp01(out.at(y, x, c) * factor);
    }
  return out;
}

// Feathered alpha blend: out = fg * M_f + bg * (1 - M_f) with M_f the
// Gaussian-blurred foreground mask. Pointwise convex, clamped to [0,1].
inline Image blend(const Image& background, const Image& foreground, const Image& mask,
                   double feather_sigma_px) {
  if (!background.same_shape(foreground) || mask.width != background.width ||
      mask.height != background.height || mask.channels != 1)
    throw std::invalid_argument("blend shape mismatch");
  Image feathered = gaussian_blur(mask, feather_sigma_px);
  Image out(background.width, background.height, background.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double m = clamp01(feathered.at(y, x, 0));
      for (int c = 0; c < out.channels; ++c)
        out.at(y, x, c) =
            clamp01(foreground.at(y, x, c) * m + background.at(y, x, c) * (1.0 - m));
    }
  return out;
}

// ---------------------------------------------------------------------------
// KITTI-style labels. One object per line:
//   Car truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y
// Floats carry 2 decimals; location is the box center (not the bottom face),
// so labels re-parse to the sampled pose exactly at the declared precision.

struct KittiLabel {
  std::string type = "Car";
  double truncated = 0, occluded = 0;
  double alpha = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  BoxPose box;
};

inline std::string format_kitti_line(const KittiLabel& l) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s %.2f %.0f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f",
                l.type.c_str(), l.truncated, l.occluded, l.alpha, l.x1, l.y1, l.x2, l.y2,
                l.box.h, l.box.w, l.box.l, l.box.x, l.box.y, l.box.z, l.box.theta);
  return buf;
}

inline std::vector<KittiLabel> parse_kitti_labels(const std::string& text) {
  std::vector<KittiLabel> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    KittiLabel l;
    if (!(ls >> l.type >> l.truncated >> l.occluded >> l.alpha >> l.x1 >> l.y1 >> l.x2 >> l.y2 >>
          l.box.h >> l.box.w >> l.box.l >> l.box.x >> l.box.y >> l.box.z >> l.box.theta))
      throw std::runtime_error("malformed label line: " + line);
    out.push_back(l);
  }
  return out;
}

// Observation angle: yaw relative to the viewing ray toward the box.
inline double box_alpha(const BoxPose& pose) {
  return wrap_angle(pose.theta - std::atan2(pose.x, pose.z));
}

// ---------------------------------------------------------------------------
// Frame composition

struct ComposeConfig {
  int num_objects = 3;
  int retry_budget = 100;
  double max_overlap = 0.3;       // rejected when projected-mask overlap exceeds this
  double feather_sigma_px = 1.0;
  double shadow_strength = 0.4;
  RaySampleSpec sample_spec;      // deterministic midpoint sampling by default
  bool use_mask_extent_bbox = false;  // 2D bbox from mask extents instead of corners
};

struct PlacedObject {
  BoxPose pose;
  size_t latent_index = 0;
  int x0 = 0, y0 = 0;        // sprite placement in the frame
  Image sprite_rgb;          // premultiplied-free foreground colors
  Image sprite_opacity;      // soft mask in [0,1]
  KittiLabel label;
};

struct CompositeScene {
  Image frame;
  std::vector<PlacedObject> objects;
  int attempted = 0, rejected = 0;
};

namespace detail {
// Renders the object's sprite over the pixel footprint of its projected box.
// Returns false when the box is entirely off-screen or behind the camera.
inline bool render_sprite(const FieldView& view, const CameraIntrinsics& cam,
                          const RigidPose& cam_pose, const BoxPose& box,
                          const RaySampleSpec& spec, PlacedObject& out) {
  double px_min = 1e30, px_max = -1e30, py_min = 1e30, py_max = -1e30;
  int visible = 0;
  for (const Vec3& corner : box.corners()) {
    auto p = project(cam, cam_pose, corner);
    if (!p) continue;
    ++visible;
    px_min = std::min(px_min, p->x);
    px_max = std::max(px_max, p->x);
    py_min = std::min(py_min, p->y);
    py_max = std::max(py_max, p->y);
  }
  if (visible == 0) return false;
  int x0 = std::max(0, static_cast<int>(std::floor(px_min)));
  int x1 = std::min(cam.width, static_cast<int>(std::ceil(px_max)));
  int y0 = std::max(0, static_cast<int>(std::floor(py_min)));
  int y1 = std::min(cam.height, static_cast<int>(std::ceil(py_max)));
  if (x1 <= x0 || y1 <= y0) return false;

  out.x0 = x0;
  out.y0 = y0;
  out.sprite_rgb = Image(x1 - x0, y1 - y0, 3);
  out.sprite_opacity = Image(x1 - x0, y1 - y0, 1);
  RayScratch ws;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      Ray ray = pixel_ray(cam, cam_pose, {x + 0.5, y + 0.5});
      auto hit = ray_box(ray, box);
      if (!hit) continue;
      ray.t_near = hit->first;
      ray.t_far = hit->second;
      RayRadiance r =
          render_ray(view, box, ray, spec, ws, static_cast<uint64_t>(y) * cam.width + x);
      double op = 1.0 - r.t_far;
      out.sprite_opacity.at(y - y0, x - x0, 0) = op;
      if (op > kOpacityEps)
        for (int c = 0; c < 3; ++c)
          out.sprite_rgb.at(y - y0, x - x0, c) = clamp01(r.color[c] / std::max(op, kOpacityEps));
    }
  return true;
}

inline double mask_overlap_fraction(const CompositeScene& scene, const PlacedObject& cand) {
  double area = 0, overlap = 0;
  for (int y = 0; y < cand.sprite_opacity.height; ++y)
    for (int x = 0; x < cand.sprite_opacity.width; ++x) {
      if (cand.sprite_opacity.at(y, x, 0) < 0.5) continue;
      area += 1;
      int fx = cand.x0 + x, fy = cand.y0 + y;
      for (const auto& other : scene.objects) {
        int ox = fx - other.x0, oy = fy - other.y0;
        if (ox >= 0 && oy >= 0 && ox < other.sprite_opacity.width &&
            oy < other.sprite_opacity.height && other.sprite_opacity.at(oy, ox, 0) >= 0.5) {
          overlap += 1;
          break;
        }
      }
    }
  return area > 0 ? overlap / area : 1.0;
}
}  // namespace detail

// Places up to cfg.num_objects sampled objects into the background. Rejected
// draws (non-drivable, off-screen, too much overlap) are resampled within the
// retry budget; when the budget runs out the frame is composed with fewer
// objects.
inline CompositeScene compose_frame(const Image& background, const CameraIntrinsics& cam,
                                    const RigidPose& cam_pose, const GeneratorParams& params,
                                    const std::vector<Tensor>& latents,
                                    const DrivableMap& drivable, const SampleDistributions& dist,
                                    const ComposeConfig& cfg, Rng rng) {
  if (latents.empty()) throw ConfigError("compose_frame needs at least one latent");
  CompositeScene scene;
  scene.frame = background;

  // Plane synthesis per latent is cached across retries.
  struct CachedField {
    StyleVector w;
    TriPlaneField field;
  };
  std::map<size_t, CachedField> cache;
  auto field_for = [&](size_t idx) -> CachedField& {
    auto it = cache.find(idx);
    if (it == cache.end()) {
      CachedField cf;
      cf.w = map_latent(params, latents[idx]);
      cf.field = synthesize_planes(params, cf.w);
      it = cache.emplace(idx, std::move(cf)).first;
    }
    return it->second;
  };

  // Sample and render candidate placements.
  for (int k = 0; k < cfg.num_objects; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.retry_budget && !placed; ++attempt) {
      ++scene.attempted;
      BoxPose pose = sample_pose(dist, rng);
      if (!filter_drivable(pose, drivable, cam_pose)) {
        ++scene.rejected;
        continue;
      }
      PlacedObject obj;
      obj.pose = pose;
      obj.latent_index = rng.uniform_index(latents.size());
      CachedField& cf = field_for(obj.latent_index);
      FieldView view = make_field_view(params, cf.field, cf.w);
      if (!detail::render_sprite(view, cam, cam_pose, pose, cfg.sample_spec, obj)) {
        ++scene.rejected;
        continue;
      }
      if (detail::mask_overlap_fraction(scene, obj) > cfg.max_overlap) {
        ++scene.rejected;
        continue;
      }
      scene.objects.push_back(std::move(obj));
      placed = true;
    }
  }

  // Painter's order: far to near by depth z.
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const PlacedObject& a, const PlacedObject& b) { return a.pose.z > b.pose.z; });

  Image shadow_sprite = make_default_shadow_sprite();
  for (auto& obj : scene.objects) {
    scene.frame = cast_shadow(scene.frame, obj.pose, cam, cam_pose, shadow_sprite,
                              cfg.shadow_strength);
    Image fg(scene.frame.width, scene.frame.height, 3);
    Image m(scene.frame.width, scene.frame.height, 1);
    for (int y = 0; y < obj.sprite_opacity.height; ++y)
      for (int x = 0; x < obj.sprite_opacity.width; ++x) {
        int fx = obj.x0 + x, fy = obj.y0 + y;
        m.at(fy, fx, 0) = obj.sprite_opacity.at(y, x, 0) >= 0.5 ? 1.0 : 0.0;
        for (int c = 0; c < 3; ++c) fg.at(fy, fx, c) = obj.sprite_rgb.at(y, x, c);
      }
    scene.frame = blend(scene.frame, fg, m, cfg.feather_sigma_px);

    // Annotation: 2D bbox from projected corners (default) or mask extents.
    KittiLabel label;
    label.box = obj.pose;
    label.alpha = box_alpha(obj.pose);
    if (cfg.use_mask_extent_bbox) {
      int mx0 = obj.sprite_opacity.width, my0 = obj.sprite_opacity.height, mx1 = -1, my1 = -1;
      for (int y = 0; y < obj.sprite_opacity.height; ++y)
        for (int x = 0; x < obj.sprite_opacity.width; ++x)
          if (obj.sprite_opacity.at(y, x, 0) >= 0.5) {
            mx0 = std::min(mx0, x);
            my0 = std::min(my0, y);
            mx1 = std::max(mx1, x);
            my1 = std::max(my1, y);
          }
      label.x1 = obj.x0 + std::max(0, mx0);
      label.y1 = obj.y0 + std::max(0, my0);
      label.x2 = obj.x0 + std::max(0, mx1);
      label.y2 = obj.y0 + std::max(0, my1);
    } else {
      double px_min = 1e30, px_max = -1e30, py_min = 1e30, py_max = -1e30;
      for (const Vec3& corner : obj.pose.corners()) {
        auto p = project(cam, cam_pose, corner);
        if (!p) continue;
        px_min = std::min(px_min, p->x);
        px_max = std::max(px_max, p->x);
        py_min = std::min(py_min, p->y);
        py_max = std::max(py_max, p->y);
      }
      label.x1 = std::clamp(px_min, 0.0, static_cast<double>(cam.width));
      label.x2 = std::clamp(px_max, 0.0, static_cast<double>(cam.width));
      label.y1 = std::clamp(py_min, 0.0, static_cast<double>(cam.height));
      label.y2 = std::clamp(py_max, 0.0, static_cast<double>(cam.height));
    }
    obj.label = label;
  }
  return scene;
}

inline std::string labels_to_text(const CompositeScene& scene) {
  std::string out;
  for (const auto& obj : scene.objects) {
    out += format_kitti_line(obj.label);
    out += '\n';
  }
  return out;
}

}  // namespace trilift

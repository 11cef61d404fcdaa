// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/generator.hpp"
#include "trilift/geometry.hpp"
#include "trilift/losses.hpp"
#include "trilift/optim.hpp"
#include "trilift/parallel.hpp"
#include "trilift/render.hpp"

namespace trilift {

// Generative latent optimization: a shared generator plus one free latent per
// object, fit jointly against posed multi-view images. Supervision per step is
// a random view per object with a pixel patch (for the perceptual term) plus
// scattered rays; full-image supervision is the same machinery with the patch
// covering the frame.

struct PosedImage {
  Image rgb;   // HxWx3 in [0,1]
  Image mask;  // HxW binary
  RigidPose pose;
  CameraIntrinsics cam;

  void validate() const {
    if (rgb.channels != 3 || mask.channels != 1 || rgb.width != mask.width ||
        rgb.height != mask.height)
      throw ConfigError("posed image shape mismatch");
  }

  double mask_fraction() const {
    double s = 0;
    for (double v : mask.v) s += v >= 0.5 ? 1.0 : 0.0;
    return s / static_cast<double>(mask.numel());
  }
};

struct ObjectRecord {
  std::string id;
  Tensor latent;
  std::vector<PosedImage> views;
};

// Patch rectangle plus scattered pixels; patch pixels come first, row-major.
struct SupervisionSet {
  int patch_x0 = 0, patch_y0 = 0, patch_w = 0, patch_h = 0;
  std::vector<std::pair<int, int>> scattered;  // (x, y)

  size_t count() const { return static_cast<size_t>(patch_w) * patch_h + scattered.size(); }

  template <typename F>
  void for_each_pixel(F&& fn) const {
    size_t k = 0;
    for (int y = patch_y0; y < patch_y0 + patch_h; ++y)
      for (int x = patch_x0; x < patch_x0 + patch_w; ++x) fn(k++, x, y);
    for (const auto& [x, y] : scattered) fn(k++, x, y);
  }

  static SupervisionSet full_image(int width, int height) {
    SupervisionSet s;
    s.patch_w = width;
    s.patch_h = height;
    return s;
  }
};

struct LossBreakdown {
  double rgb = 0, iou = 0, perc = 0, total = 0;
};

// Renders the supervised pixels of one view, computes the combined loss and,
// when `grad` is non-null, backpropagates into the generator parameters and
// the object's latent.
inline LossBreakdown supervise_view(const GeneratorParams& params, const Tensor& z,
                                    const PosedImage& view, const SupervisionSet& set,
                                    const LossWeights& weights, const FeatureExtractor* extractor,
                                    const RaySampleSpec& spec, GeneratorParams* grad,
                                    Tensor* d_z, std::array<Tensor, 3>* d_planes_out = nullptr) {
  weights.validate();
  view.validate();
  size_t n_pix = set.count();
  if (n_pix == 0) throw ConfigError("empty supervision set");

  MappingActs macts;
  SynthesisActs sacts;
  StyleVector w = map_latent(params, z, grad ? &macts : nullptr);
  TriPlaneField field = synthesize_planes(params, w, grad ? &sacts : nullptr);
  FieldView fv = make_field_view(params, field, w);
  BoxPose box = unit_cube_box();

  // Forward pass over the pixel set.
  std::vector<Vec3> rendered(n_pix);
  std::vector<double> opacity(n_pix, 0.0);
  std::vector<Ray> rays(n_pix);
  std::vector<char> hit(n_pix, 0);
  std::vector<uint64_t> ray_ids(n_pix);
  RayScratch ws;
  set.for_each_pixel([&](size_t k, int x, int y) {
    Ray ray = pixel_ray(view.cam, view.pose, {x + 0.5, y + 0.5});
    uint64_t rid = static_cast<uint64_t>(y) * view.cam.width + x;
    auto clip = ray_unit_cube(ray);
    ray_ids[k] = rid;
    if (clip) {
      ray.t_near = clip->first;
      ray.t_far = clip->second;
      rays[k] = ray;
      hit[k] = 1;
      RayRadiance r = render_ray(fv, box, ray, spec, ws, rid);
      rendered[k] = r.color;
      opacity[k] = 1.0 - r.t_far;
    }
  });

  // Losses over the set.
  LossBreakdown out;
  double inter = 0, uni = 0;
  double l1 = 0;
  std::vector<double> target_rgb(3 * n_pix);
  std::vector<double> target_mask(n_pix);
  set.for_each_pixel([&](size_t k, int x, int y) {
    for (int c = 0; c < 3; ++c) {
      double t = view.rgb.at(y, x, c);
      target_rgb[3 * k + c] = t;
      l1 += std::abs(rendered[k][c] - t);
    }
    double m = view.mask.at(y, x, 0) >= 0.5 ? 1.0 : 0.0;
    target_mask[k] = m;
    inter += std::min(opacity[k], m);
    uni += std::max(opacity[k], m);
  });
  out.rgb = l1 / (3.0 * n_pix);
  out.iou = 1.0 - inter / (uni + kIouEps);

  // Perceptual term over the patch.
  bool use_perc = weights.lambda_perc > 0 && extractor && set.patch_w >= 2 && set.patch_h >= 2;
  Image d_patch;
  if (use_perc) {
    Image patch_r(set.patch_w, set.patch_h, 3), patch_t(set.patch_w, set.patch_h, 3);
    for (int py = 0; py < set.patch_h; ++py)
      for (int px = 0; px < set.patch_w; ++px) {
        size_t k = static_cast<size_t>(py) * set.patch_w + px;
        for (int c = 0; c < 3; ++c) {
          patch_r.at(py, px, c) = rendered[k][c];
          patch_t.at(py, px, c) = view.rgb.at(set.patch_y0 + py, set.patch_x0 + px, c);
        }
      }
    auto feats_t = extractor->extract(patch_t);
    auto feats_r = extractor->extract(patch_r);
    out.perc = loss_perceptual(feats_t, feats_r);
    if (grad) {
      auto d_feats = loss_perceptual_grad_b(feats_t, feats_r);
      d_patch = extractor->backprop(patch_r, d_feats);
    }
  }
  out.total = out.rgb + weights.lambda_iou * out.iou + weights.lambda_perc * out.perc;

  if (!grad) return out;

  // Per-pixel adjoints, then per-ray backward.
  FieldGrads sink;
  sink.init(params);
  sink.params_grad = grad;
  double d_union_coef = weights.lambda_iou * inter / ((uni + kIouEps) * (uni + kIouEps));
  double d_inter_coef = -weights.lambda_iou / (uni + kIouEps);
  double rgb_scale = 1.0 / (3.0 * n_pix);
  set.for_each_pixel([&](size_t k, int x, int y) {
    if (!hit[k]) return;
    Vec3 d_col;
    for (int c = 0; c < 3; ++c) {
      double diff = rendered[k][c] - target_rgb[3 * k + c];
      d_col[c] = (diff > 0 ? rgb_scale : (diff < 0 ? -rgb_scale : 0.0));
    }
    if (use_perc && x >= set.patch_x0 && x < set.patch_x0 + set.patch_w && y >= set.patch_y0 &&
        y < set.patch_y0 + set.patch_h && k < static_cast<size_t>(set.patch_w) * set.patch_h) {
      for (int c = 0; c < 3; ++c)
        d_col[c] += weights.lambda_perc * d_patch.at(y - set.patch_y0, x - set.patch_x0, c);
    }
    // Soft IoU wrt the per-pixel opacity (target mask is binary).
    double d_op = target_mask[k] >= 0.5 ? d_inter_coef : d_union_coef;
    render_ray_backward(fv, box, rays[k], spec, d_col, d_op, sink, ws, ray_ids[k]);
  });

  Tensor d_w({params.config.style_layers, params.config.style_dim});
  finalize_style_grads(params, fv.ctx, sink, d_w);
  synthesize_planes_backward(params, w, sacts, sink.planes, *grad, d_w);
  map_latent_backward(params, macts, d_w, *grad, d_z);
  if (d_planes_out) *d_planes_out = sink.planes;
  return out;
}

// Full-image loss of one view (the per-view term of the training objective),
// with gradients wrt generator parameters and the object's latent.
inline LossBreakdown total_loss(const GeneratorParams& params, const ObjectRecord& record,
                                size_t view_index, const LossWeights& weights,
                                const RaySampleSpec& spec, const FeatureExtractor* extractor,
                                GeneratorParams* grad = nullptr, Tensor* d_z = nullptr,
                                std::array<Tensor, 3>* d_planes_out = nullptr) {
  if (view_index >= record.views.size()) throw ConfigError("view index out of range");
  const PosedImage& view = record.views[view_index];
  SupervisionSet set = SupervisionSet::full_image(view.cam.width, view.cam.height);
  return supervise_view(params, record.latent, view, set, weights, extractor, spec, grad, d_z,
                        d_planes_out);
}

struct FitConfig {
  int iterations = 2000;
  int rays_per_step = 512;  // per object per step, patch included
  int patch_size = 16;      // 0 disables the patch (and the perceptual term)
  int samples_per_ray = 32;
  double lr_params = 1e-3;
  double lr_latents = 1e-2;
  LossWeights weights;
  uint64_t seed = 0;
  double min_mask_fraction = 0.01;  // views below this are dropped with a warning
  bool quiet = false;

  void validate() const {
    if (iterations < 0 || rays_per_step < 1) throw ConfigError("bad fit config");
    weights.validate();
  }
};

struct LossRow {
  int64_t step = 0;
  double rgb = 0, iou = 0, perc = 0, total = 0;
};

struct FitResult {
  std::vector<LossRow> history;
  int dropped_views = 0;
};

namespace detail {
// Picks the supervised pixels for one (step, object) draw: a patch biased
// toward the target mask plus uniformly scattered rays.
inline SupervisionSet draw_supervision(const PosedImage& view, int rays_per_step, int patch_size,
                                       Rng rng) {
  SupervisionSet set;
  int w = view.cam.width, h = view.cam.height;
  int ps = std::min({patch_size, w, h});
  if (ps >= 2) {
    set.patch_w = set.patch_h = ps;
    if (rng.uniform() < 0.8) {
      // Center on a random foreground pixel when one exists.
      std::vector<int> fg;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (view.mask.at(y, x, 0) >= 0.5) fg.push_back(y * w + x);
      if (!fg.empty()) {
        int pick = fg[rng.uniform_index(fg.size())];
        set.patch_x0 = std::clamp(pick % w - ps / 2, 0, w - ps);
        set.patch_y0 = std::clamp(pick / w - ps / 2, 0, h - ps);
      } else {
        set.patch_x0 = static_cast<int>(rng.uniform_index(w - ps + 1));
        set.patch_y0 = static_cast<int>(rng.uniform_index(h - ps + 1));
      }
    } else {
      set.patch_x0 = static_cast<int>(rng.uniform_index(w - ps + 1));
      set.patch_y0 = static_cast<int>(rng.uniform_index(h - ps + 1));
    }
  }
  int remaining = rays_per_step - set.patch_w * set.patch_h;
  for (int i = 0; i < remaining; ++i) {
    int x = static_cast<int>(rng.uniform_index(w));
    int y = static_cast<int>(rng.uniform_index(h));
    set.scattered.emplace_back(x, y);
  }
  return set;
}
}  // namespace detail

// Joint optimization of generator parameters and all per-object latents.
// Deterministic per (seed, config, data); parameters and latents are updated
// in place every step. `state` carries Adam moments so runs can resume.
inline FitResult fit(std::vector<ObjectRecord>& records, GeneratorParams& params,
                     const FitConfig& cfg, OptimState* state = nullptr,
                     const FeatureExtractor* extractor = nullptr) {
  cfg.validate();
  if (records.empty()) throw ConfigError("fit needs at least one object record");
  FitResult result;

  // Mask-quality gate: drop views whose mask area is below the threshold.
  for (auto& rec : records) {
    std::vector<PosedImage> kept;
    for (size_t i = 0; i < rec.views.size(); ++i) {
      if (rec.views[i].mask_fraction() < cfg.min_mask_fraction) {
        ++result.dropped_views;
        if (!cfg.quiet)
          std::fprintf(stderr, "warning: dropping view %zu of object %s (mask area %.2f%%)\n", i,
                       rec.id.c_str(), 100.0 * rec.views[i].mask_fraction());
      } else {
        kept.push_back(std::move(rec.views[i]));
      }
    }
    rec.views = std::move(kept);
    if (rec.views.empty()) throw ConfigError("object " + rec.id + " has no usable views");
  }

  GradientPyramidExtractor default_extractor;
  if (!extractor && cfg.weights.lambda_perc > 0) extractor = &default_extractor;

  // Optimizer slots: generator tensors in declared order, then latents.
  OptimState local_state;
  OptimState& opt = state ? *state : local_state;
  std::vector<Tensor*> param_ptrs;
  for_each_tensor(params, [&](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });
  size_t n_gen = param_ptrs.size();
  for (auto& rec : records) param_ptrs.push_back(&rec.latent);
  if (opt.slots.empty())
    for (Tensor* t : param_ptrs) opt.register_tensor(*t);
  else if (opt.slots.size() != param_ptrs.size())
    throw ConfigError("optimizer state does not match parameter layout");
  std::vector<double> lrs(param_ptrs.size(), cfg.lr_params);
  for (size_t i = n_gen; i < lrs.size(); ++i) lrs[i] = cfg.lr_latents;

  size_t n_obj = records.size();
  std::vector<GeneratorParams> obj_grads;
  std::vector<Tensor> z_grads;
  std::vector<LossBreakdown> obj_losses(n_obj);
  for (size_t i = 0; i < n_obj; ++i) {
    obj_grads.push_back(make_zero_like(params));
    z_grads.emplace_back(records[i].latent.shape);
  }

  Rng root(cfg.seed);
  RaySampleSpec spec;
  spec.samples_per_ray = cfg.samples_per_ray;
  spec.stratified = true;

  int64_t step0 = opt.step;
  std::vector<std::exception_ptr> errors(n_obj);
  for (int it = 0; it < cfg.iterations; ++it) {
    int64_t step = step0 + it + 1;
    parallel_chunks(n_obj, static_cast<int>(n_obj), [&](int, size_t b, size_t e) {
      for (size_t oi = b; oi < e; ++oi) {
        try {
          auto& rec = records[oi];
          Rng draw = root.stream("fit-draw").stream(static_cast<uint64_t>(step)).stream(oi);
          size_t vi = draw.uniform_index(rec.views.size());
          SupervisionSet set =
              detail::draw_supervision(rec.views[vi], cfg.rays_per_step, cfg.patch_size, draw);
          RaySampleSpec obj_spec = spec;
          obj_spec.jitter_seed =
              root.stream("fit-jitter").stream(static_cast<uint64_t>(step)).stream(oi).next_u64();
          for_each_tensor(obj_grads[oi], [](const std::string&, Tensor& t) { t.zero(); });
          z_grads[oi].zero();
          obj_losses[oi] = supervise_view(params, rec.latent, rec.views[vi], set, cfg.weights,
                                          extractor, obj_spec, &obj_grads[oi], &z_grads[oi]);
        } catch (const NumericError& e) {
          errors[oi] = std::make_exception_ptr(
              NumericError("step " + std::to_string(step) + ", object " + records[oi].id + ": " +
                           e.what()));
        } catch (...) {
          errors[oi] = std::current_exception();
        }
      }
    });
    for (size_t oi = 0; oi < n_obj; ++oi)
      if (errors[oi]) std::rethrow_exception(errors[oi]);

    LossRow row;
    row.step = step;
    for (size_t oi = 0; oi < n_obj; ++oi) {
      const auto& l = obj_losses[oi];
      if (!std::isfinite(l.total))
        throw NumericError("NaN loss at step " + std::to_string(step) + ", object " +
                           records[oi].id);
      row.rgb += l.rgb / n_obj;
      row.iou += l.iou / n_obj;
      row.perc += l.perc / n_obj;
      row.total += l.total / n_obj;
    }

    // Merge per-object parameter gradients (mean over objects) in object order.
    GeneratorParams& merged = obj_grads[0];
    for (size_t oi = 1; oi < n_obj; ++oi) {
      std::vector<Tensor*> dst, src;
      for_each_tensor(merged, [&](const std::string&, Tensor& t) { dst.push_back(&t); });
      for_each_tensor(obj_grads[oi], [&](const std::string&, Tensor& t) { src.push_back(&t); });
      for (size_t k = 0; k < dst.size(); ++k) axpy(1.0, *src[k], *dst[k]);
    }
    std::vector<const Tensor*> grad_ptrs;
    for_each_tensor(merged, [&](const std::string&, Tensor& t) {
      for (auto& x : t.v) x /= static_cast<double>(n_obj);
      grad_ptrs.push_back(&t);
    });
    for (size_t oi = 0; oi < n_obj; ++oi) grad_ptrs.push_back(&z_grads[oi]);

    adam_step(opt, param_ptrs, grad_ptrs, lrs);
    result.history.push_back(row);
  }
  return result;
}

}  // namespace trilift

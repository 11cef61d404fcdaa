// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/image.hpp"

namespace trilift {

struct LossWeights {
  double lambda_iou = 1.0;
  double lambda_perc = 0.1;

  void validate() const {
    if (lambda_iou < 0 || lambda_perc < 0) throw ConfigError("loss weights must be >= 0");
  }
};

// Photometric L1: mean absolute difference over all entries.
inline double loss_rgb(const Image& target, const Image& rendered) {
  if (!target.same_shape(rendered)) throw std::invalid_argument("loss_rgb shape mismatch");
  double s = 0;
  for (size_t i = 0; i < target.numel(); ++i) s += std::abs(rendered.v[i] - target.v[i]);
  return s / static_cast<double>(target.numel());
}

constexpr double kIouEps = 1e-8;

// Soft IoU loss on a relaxed mask: intersection = sum min, union = sum max.
inline double loss_iou(const Image& soft_mask, const Image& target_mask) {
  if (!soft_mask.same_shape(target_mask)) throw std::invalid_argument("loss_iou shape mismatch");
  double inter = 0, uni = 0;
  for (size_t i = 0; i < soft_mask.numel(); ++i) {
    inter += std::min(soft_mask.v[i], target_mask.v[i]);
    uni += std::max(soft_mask.v[i], target_mask.v[i]);
  }
  return 1.0 - inter / (uni + kIouEps);
}

// Multi-scale feature maps for the perceptual term. Implementations must be
// linear or provide an exact VJP; the built-in extractor is a fixed 3-scale
// image-gradient pyramid, so the repository needs no pretrained weights.
// Externally computed feature maps (e.g. from a VGG run) can be loaded from
// .f32 grids and fed to loss_perceptual directly.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Image> extract(const Image& img) const = 0;
  // VJP: gradient of a scalar wrt the input image, given gradients wrt the
  // feature maps.
  virtual Image backprop(const Image& img, const std::vector<Image>& d_feats) const = 0;
};

namespace detail {
// Box downsample by 2, flooring odd dimensions.
inline Image half_floor(const Image& img) {
  int w = img.width / 2, h = img.height / 2;
  Image out(std::max(1, w), std::max(1, h), img.channels);
  if (w < 1 || h < 1) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                  img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

inline void half_floor_vjp(const Image& d_out, Image& d_in) {
  int w = d_out.width, h = d_out.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < d_out.channels; ++c) {
        double g = 0.25 * d_out.at(y, x, c);
        d_in.at(2 * y, 2 * x, c) += g;
        d_in.at(2 * y, 2 * x + 1, c) += g;
        d_in.at(2 * y + 1, 2 * x, c) += g;
        d_in.at(2 * y + 1, 2 * x + 1, c) += g;
      }
}

// Forward differences along x and y stacked into 2*C channels; last column /
// row stay zero so the map keeps the input size.
inline Image gradient_features(const Image& img) {
  Image out(img.width, img.height, 2 * img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        if (x + 1 < img.width) out.at(y, x, c) = img.at(y, x + 1, c) - img.at(y, x, c);
        if (y + 1 < img.height)
          out.at(y, x, img.channels + c) = img.at(y + 1, x, c) - img.at(y, x, c);
      }
  return out;
}

inline void gradient_features_vjp(const Image& d_out, Image& d_in) {
  int c_in = d_in.channels;
  for (int y = 0; y < d_in.height; ++y)
    for (int x = 0; x < d_in.width; ++x)
      for (int c = 0; c < c_in; ++c) {
        if (x + 1 < d_in.width) {
          double g = d_out.at(y, x, c);
          d_in.at(y, x + 1, c) += g;
          d_in.at(y, x, c) -= g;
        }
        if (y + 1 < d_in.height) {
          double g = d_out.at(y, x, c_in + c);
          d_in.at(y + 1, x, c) += g;
          d_in.at(y, x, c) -= g;
        }
      }
}
}  // namespace detail

// Fixed non-learned pyramid: forward differences at full, half and quarter
// resolution. Linear, so the VJP is exact.
class GradientPyramidExtractor final : public FeatureExtractor {
 public:
  explicit GradientPyramidExtractor(int scales = 3) : scales_(scales) {}
  std::string name() const override { return "gradient-pyramid-" + std::to_string(scales_); }

  std::vector<Image> extract(const Image& img) const override {
    std::vector<Image> feats;
    Image cur = img;
    for (int s = 0; s < scales_; ++s) {
      if (cur.width < 2 || cur.height < 2) break;
      feats.push_back(detail::gradient_features(cur));
      if (s + 1 < scales_) cur = detail::half_floor(cur);
    }
    return feats;
  }

  Image backprop(const Image& img, const std::vector<Image>& d_feats) const override {
    // Rebuild the pyramid inputs, then walk back coarse-to-fine.
    std::vector<Image> levels{img};
    for (size_t s = 1; s < d_feats.size(); ++s) levels.push_back(detail::half_floor(levels.back()));
    Image d_level(levels.back().width, levels.back().height, img.channels);
    for (int s = static_cast<int>(d_feats.size()) - 1; s >= 0; --s) {
      if (d_level.width != levels[s].width || d_level.height != levels[s].height) {
        Image up(levels[s].width, levels[s].height, img.channels);
        detail::half_floor_vjp(d_level, up);
        d_level = std::move(up);
      }
      detail::gradient_features_vjp(d_feats[s], d_level);
    }
    return d_level;
  }

 private:
  int scales_;
};

// Perceptual distance: mean absolute feature difference per scale, summed.
inline double loss_perceptual(const std::vector<Image>& feats_a,
                              const std::vector<Image>& feats_b) {
  if (feats_a.size() != feats_b.size())
    throw std::invalid_argument("feature scale count mismatch");
  double total = 0;
  for (size_t s = 0; s < feats_a.size(); ++s) {
    if (!feats_a[s].same_shape(feats_b[s]))
      throw std::invalid_argument("feature map shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < feats_a[s].numel(); ++i) acc += std::abs(feats_a[s].v[i] - feats_b[s].v[i]);
    total += acc / static_cast<double>(feats_a[s].numel());
  }
  return total;
}

// d loss_perceptual / d feats_b, for backprop through the rendered side.
inline std::vector<Image> loss_perceptual_grad_b(const std::vector<Image>& feats_a,
                                                 const std::vector<Image>& feats_b) {
  std::vector<Image> out;
  out.reserve(feats_b.size());
  for (size_t s = 0; s < feats_b.size(); ++s) {
    Image g(feats_b[s].width, feats_b[s].height, feats_b[s].channels);
    double inv = 1.0 / static_cast<double>(feats_b[s].numel());
    for (size_t i = 0; i < g.numel(); ++i) {
      double d = feats_b[s].v[i] - feats_a[s].v[i];
      g.v[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.numel(); ++i) {
    double d = a.v[i] - b.v[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// Hard-mask intersection over union; empty-union pairs count as 1.
inline double mask_iou(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask_iou shape mismatch");
  double inter = 0, uni = 0;
  for (size_t i = 0; i < a.numel(); ++i) {
    bool pa = a.v[i] >= 0.5, pb = b.v[i] >= 0.5;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : inter / uni;
}

}  // namespace trilift

// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen acceptance fixture: the lifting configuration and quality bars.
// Values were pinned from a single pilot run on this configuration (seed 0);
// the pilot's measured held-out quality is recorded next to each bar.
#pragma once

#include "trilift/fit.hpp"
#include "trilift/generator.hpp"

namespace fixtures {

inline constexpr int kLiftObjects = 4;
inline constexpr int kLiftViews = 20;
inline constexpr int kLiftSize = 64;
inline constexpr double kLiftFocal = 1.1 * kLiftSize;
inline constexpr uint64_t kLiftSeed = 0;
inline constexpr uint64_t kGradCheckSeed = 2026;
inline constexpr int kHeldOutViews = 8;
inline constexpr int kConsistencyPairs = 100;

// Pilot (2500 steps): worst held-out PSNR 33.2 dB, worst mask IoU 0.924.
// The bars below are the spec-stated thresholds, not the pilot values.
inline constexpr int kLiftIterations = 2500;
inline constexpr double kMinHeldOutPsnrDb = 25.0;
inline constexpr double kMinHeldOutMaskIou = 0.90;

inline trilift::GeneratorConfig lift_generator_config() {
  trilift::GeneratorConfig cfg;
  cfg.latent_dim = 64;
  cfg.style_dim = 64;
  cfg.style_layers = 8;
  cfg.mapping_layers = 8;
  cfg.mapping_hidden = 64;
  cfg.plane_resolution = 64;
  cfg.plane_channels = 16;
  cfg.base_resolution = 8;
  cfg.base_channels = 24;
  cfg.stage_channels = {24, 16, 12};
  cfg.decoder_hidden = 32;
  cfg.omega0 = 30.0;
  cfg.sigma_bias_init = -1.0;
  return cfg;
}

inline trilift::FitConfig lift_fit_config() {
  trilift::FitConfig fc;
  fc.iterations = kLiftIterations;
  fc.rays_per_step = 384;
  fc.patch_size = 16;
  fc.samples_per_ray = 24;
  fc.lr_params = 1e-3;
  fc.lr_latents = 1e-2;
  fc.weights.lambda_iou = 1.0;
  fc.weights.lambda_perc = 0.1;
  fc.seed = kLiftSeed;
  fc.quiet = true;
  return fc;
}

}  // namespace fixtures

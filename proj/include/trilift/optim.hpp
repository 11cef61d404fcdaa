// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/tensor.hpp"

namespace trilift {

// Standard bias-corrected Adam over an ordered list of tensors. Slot order is
// fixed at registration, which also fixes the checkpoint layout of moments.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  Tensor m, v;
};

struct OptimState {
  int64_t step = 0;
  AdamConfig config;
  std::vector<AdamSlot> slots;

  void register_tensor(const Tensor& t) {
    AdamSlot s;
    s.m = Tensor(t.shape);
    s.v = Tensor(t.shape);
    slots.push_back(std::move(s));
  }
};

// One update across all slots; `lrs` gives the learning rate per slot.
inline void adam_step(OptimState& state, const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads, const std::vector<double>& lrs) {
  if (params.size() != state.slots.size() || grads.size() != params.size() ||
      lrs.size() != params.size())
    throw ConfigError("adam_step slot count mismatch");
  state.step += 1;
  double b1 = state.config.beta1, b2 = state.config.beta2;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t s = 0; s < params.size(); ++s) {
    Tensor& p = *params[s];
    const Tensor& g = *grads[s];
    AdamSlot& slot = state.slots[s];
    if (!p.same_shape(g) || !p.same_shape(slot.m))
      throw ConfigError("adam_step gradient shape mismatch");
    double lr = lrs[s];
    for (size_t i = 0; i < p.numel(); ++i) {
      double gi = g[i];
      slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
      slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
      double mhat = slot.m[i] / bc1;
      double vhat = slot.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.config.eps);
    }
  }
}

}  // namespace trilift

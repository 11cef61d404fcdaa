// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent oriented-box ray oracle used by the geometry tests and the
// acceptance suite. Built on the closed-form box signed distance (1-Lipschitz
// along any unit-speed ray), marched densely: a sample with sdf <= 0 proves a
// hit (entry then refined by bisection); a miss is proven when no inter-sample
// dip below zero is possible given the Lipschitz bound; the remaining grazing
// cases are declared unresolved instead of guessed.
#pragma once

#include <algorithm>
#include <cmath>

#include "trilift/geometry.hpp"

namespace trilift_test {

inline double box_sdf(const trilift::Vec3& p, const trilift::BoxPose& box) {
  using namespace trilift;
  Vec3 q = rotation_y(box.theta).transposed() * (p - Vec3{box.x, box.y, box.z});
  Vec3 d{std::abs(q.x) - box.l / 2, std::abs(q.y) - box.h / 2, std::abs(q.z) - box.w / 2};
  Vec3 dpos{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
  double outside = norm(dpos);
  double inside = std::min(std::max(d.x, std::max(d.y, d.z)), 0.0);
  return outside + inside;
}

struct MarchVerdict {
  enum Kind { Hit, Miss, Unresolved } kind;
  double entry_t = 0;
};

inline MarchVerdict march_box(const trilift::Vec3& o, const trilift::Vec3& d,
                              const trilift::BoxPose& box, double t_max, int steps = 10000) {
  double dt = t_max / steps;
  double prev_t = 0.0;
  double prev_sdf = box_sdf(o, box);
  if (prev_sdf <= 0.0) return {MarchVerdict::Hit, 0.0};
  bool resolved_miss = true;
  for (int i = 1; i <= steps; ++i) {
    double t = i * dt;
    double s = box_sdf(o + d * t, box);
    if (s <= 0.0) {
      double lo = prev_t, hi = t;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        (box_sdf(o + d * mid, box) <= 0.0 ? hi : lo) = mid;
      }
      return {MarchVerdict::Hit, hi};
    }
    if (std::min(prev_sdf, s) <= dt / 2) resolved_miss = false;
    prev_t = t;
    prev_sdf = s;
  }
  return {resolved_miss ? MarchVerdict::Miss : MarchVerdict::Unresolved, 0.0};
}

inline trilift::Vec3 random_unit(trilift::Rng& rng) {
  while (true) {
    trilift::Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double n = trilift::norm(v);
    if (n > 1e-3 && n < 1.0) return v / n;
  }
}

}  // namespace trilift_test

// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
//
// 2D convex hull and outside-distance used to verify that rendered object
// masks stay inside the projected 3D-box hull.
#pragma once

#include <algorithm>
#include <vector>

#include "trilift/math.hpp"

namespace trilift_test {

inline std::vector<trilift::Vec2> convex_hull(std::vector<trilift::Vec2> pts) {
  using trilift::Vec2;
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  auto cross2 = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Vec2> hull(2 * pts.size());
  size_t k = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// How far p sits outside the hull (0 when inside).
inline double dist_outside_hull(const trilift::Vec2& p,
                                const std::vector<trilift::Vec2>& hull) {
  double worst = 0;
  for (size_t i = 0; i < hull.size(); ++i) {
    const trilift::Vec2& a = hull[i];
    const trilift::Vec2& b = hull[(i + 1) % hull.size()];
    trilift::Vec2 e = b - a;
    double len = e.norm();
    if (len < 1e-12) continue;
    double side = ((p.x - a.x) * e.y - (p.y - a.y) * e.x) / len;
    worst = std::max(worst, side);
  }
  return worst;
}

}  // namespace trilift_test

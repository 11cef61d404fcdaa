// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "trilift/rng.hpp"

namespace trilift {

// Dense row-major double tensor. Shapes are small and fixed per model config;
// hot loops index the raw buffer directly.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { v.assign(numel_of(shape), 0.0); }
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t numel() const { return v.size(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }

  // 2D / 3D / 4D accessors, row-major, unchecked.
  double& at2(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double at2(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double& at3(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at3(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double& at4(int i, int j, int k, int l) {
    return v[((static_cast<size_t>(i) * shape[1] + j) * static_cast<size_t>(shape[2]) + k) *
                 shape[3] +
             l];
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : v) x = rng.uniform(lo, hi);
  }
  void fill_normal(Rng& rng, double mu, double sigma) {
    for (double& x : v) x = rng.normal(mu, sigma);
  }
  // Variance-scaled uniform init: U(+-sqrt(6 / fan_in)).
  void fill_fan_in_uniform(Rng& rng, int fan_in) {
    double b = std::sqrt(6.0 / fan_in);
    fill_uniform(rng, -b, b);
  }

  double frobenius_norm() const {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
};

inline void axpy(double a, const Tensor& x, Tensor& y) {
  for (size_t i = 0; i < x.v.size(); ++i) y.v[i] += a * x.v[i];
}

}  // namespace trilift

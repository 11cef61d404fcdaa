// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "trilift/math.hpp"

namespace trilift {

// Planar-free HxWxC image, doubles in [0,1] (masks use {0,1}).
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> v;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    v.assign(static_cast<size_t>(w) * h * c, 0.0);
  }

  double& at(int y, int x, int c) {
    return v[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return v[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t numel() const { return v.size(); }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

namespace detail {
struct FileHandle {
  FILE* f = nullptr;
  explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {
    if (!f) throw std::runtime_error("cannot open " + path);
  }
  ~FileHandle() {
    if (f) std::fclose(f);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};
}  // namespace detail

inline uint8_t to_u8(double x) {
  double s = clamp01(x) * 255.0;
  return static_cast<uint8_t>(std::lround(s));
}

// 8-bit PNG, RGB when channels == 3, grayscale when channels == 1.
inline void write_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png expects 1 or 3 channels");
  detail::FileHandle file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write error: " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) row[x * img.channels + c] = to_u8(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads any 8/16-bit PNG into rgb (3ch) or gray (1ch) doubles in [0,1].
inline Image read_png(const std::string& path, int want_channels = 3) {
  if (want_channels != 1 && want_channels != 3)
    throw std::invalid_argument("read_png expects 1 or 3 channels");
  detail::FileHandle file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read error: " + path);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  if (want_channels == 3)
    png_set_gray_to_rgb(png);
  else
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  int w = png_get_image_width(png, info);
  int h = png_get_image_height(png, info);
  int ch = png_get_channels(png, info);
  if (ch != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unexpected channel count in " + path);
  }
  Image img(w, h, want_channels);
  std::vector<uint8_t> row(static_cast<size_t>(w) * ch);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) img.at(y, x, c) = row[x * ch + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Raw float32 grid: 16-byte header (magic "TLF32\0\0\0", u32 width, u32 height)
// then row-major little-endian float32 samples.
inline void write_f32_grid(const std::string& path, const Image& img) {
  if (img.channels != 1) throw std::invalid_argument("f32 grid is single-channel");
  detail::FileHandle file(path, "wb");
  char magic[8] = {'T', 'L', 'F', '3', '2', 0, 0, 0};
  uint32_t w = img.width, h = img.height;
  std::fwrite(magic, 1, 8, file.f);
  std::fwrite(&w, 4, 1, file.f);
  std::fwrite(&h, 4, 1, file.f);
  std::vector<float> buf(img.numel());
  for (size_t i = 0; i < img.numel(); ++i) buf[i] = static_cast<float>(img.v[i]);
  if (std::fwrite(buf.data(), 4, buf.size(), file.f) != buf.size())
    throw std::runtime_error("short write: " + path);
}

inline Image read_f32_grid(const std::string& path) {
  detail::FileHandle file(path, "rb");
  char magic[8];
  uint32_t w = 0, h = 0;
  if (std::fread(magic, 1, 8, file.f) != 8 || std::memcmp(magic, "TLF32\0\0\0", 8) != 0)
    throw std::runtime_error("bad f32 grid magic: " + path);
  if (std::fread(&w, 4, 1, file.f) != 1 || std::fread(&h, 4, 1, file.f) != 1)
    throw std::runtime_error("bad f32 grid header: " + path);
  Image img(static_cast<int>(w), static_cast<int>(h), 1);
  std::vector<float> buf(img.numel());
  if (std::fread(buf.data(), 4, buf.size(), file.f) != buf.size())
    throw std::runtime_error("short read: " + path);
  for (size_t i = 0; i < img.numel(); ++i) img.v[i] = buf[i];
  return img;
}

// 2x2 box-filter downsample; input dimensions must be even.
inline Image box_downsample2(const Image& img) {
  if (img.width % 2 || img.height % 2)
    throw std::invalid_argument("box_downsample2 needs even dimensions");
  Image out(img.width / 2, img.height / 2, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                  img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("shape mismatch");
  double s = 0;
  for (size_t i = 0; i < a.numel(); ++i) s += std::abs(a.v[i] - b.v[i]);
  return s / static_cast<double>(a.numel());
}

// Separable Gaussian blur, zero padding, kernel radius ceil(3*sigma).
// sigma_px <= 0 returns the input unchanged.
inline Image gaussian_blur(const Image& img, double sigma_px) {
  if (sigma_px <= 0.0) return img;
  int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));
    sum += k[i + radius];
  }
  for (double& x : k) x /= sum;

  Image tmp(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) {
          int xx = x + i;
          if (xx >= 0 && xx < img.width) s += k[i + radius] * img.at(y, xx, c);
        }
        tmp.at(y, x, c) = s;
      }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) {
          int yy = y + i;
          if (yy >= 0 && yy < img.height) s += k[i + radius] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = s;
      }
  return out;
}

}  // namespace trilift

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dair/common.hpp"
#include "dair/image.hpp"
#include "dair/tensor.hpp"

// Kernel-field visualization: per-channel grayscale maps (one image per
// kernel tap across all output positions) and per-region kernel grids (one
// f x f cell per output pixel, rendered with a signed colormap).

namespace dair {

// Writes f^2 PNGs "filter_<k>.png", each channel min-max normalized on its
// own, plus "norms.txt" with "channel<TAB>min<TAB>max" lines so the absolute
// values stay recoverable. A constant channel renders as mid-gray 128/255.
inline void export_channel_maps(const Tensor<float>& field, const std::string& out_dir) {
  require_shape4(field, "channel-map field");
  if (field.dim(0) != 1)
    throw StructuralError("channel maps expect a single-image field");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create directory " + out_dir + ": " + ec.message());

  const int64_t channels = field.dim(1), h = field.dim(2), w = field.dim(3);
  std::string norms;
  char buf[128];
  for (int64_t k = 0; k < channels; ++k) {
    float lo = field.at(0, k, 0, 0), hi = lo;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const float v = field.at(0, k, y, x);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    ImageBuffer img(int(w), int(h), 1, ColorSpace::gray);
    img.native_scale = 255.0f;
    if (hi > lo) {
      const float inv = 1.0f / (hi - lo);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          img.at(int(y), int(x)) = (field.at(0, k, y, x) - lo) * inv;
    } else {
      std::fill(img.values.begin(), img.values.end(), 128.0f / 255.0f);
    }
    save_image(img, out_dir + "/filter_" + std::to_string(k) + ".png");
    std::snprintf(buf, sizeof buf, "%lld\t%.9g\t%.9g\n", static_cast<long long>(k),
                  double(lo), double(hi));
    norms += buf;
  }
  std::ofstream nf(out_dir + "/norms.txt", std::ios::binary | std::ios::trunc);
  if (!nf) throw FormatError("cannot write " + out_dir + "/norms.txt");
  nf << norms;
}

struct GridRegion {
  int x = 0, y = 0, w = 0, h = 0;
};

// One f x f cell per output pixel of the region, cells separated by 1-pixel
// black rules. Weights share a single scale (max |value| over the region):
// negative values shade toward blue, positive toward red, zero is white.
inline ImageBuffer render_kernel_grid(const Tensor<float>& field, int f,
                                      const GridRegion& r) {
  require_shape4(field, "kernel-grid field");
  if (field.dim(0) != 1 || field.dim(1) != int64_t(f) * f)
    throw StructuralError("kernel grid expects a single-image field with f^2 channels");
  if (r.w < 1 || r.h < 1) throw StructuralError("empty kernel-grid region");
  if (r.x < 0 || r.y < 0 || r.x + r.w > field.dim(3) || r.y + r.h > field.dim(2))
    throw StructuralError("kernel-grid region outside the field extent");

  float scale = 0.0f;
  for (int64_t k = 0; k < int64_t(f) * f; ++k)
    for (int yy = 0; yy < r.h; ++yy)
      for (int xx = 0; xx < r.w; ++xx)
        scale = std::max(scale, std::abs(field.at(0, k, r.y + yy, r.x + xx)));

  ImageBuffer img(r.w * f + r.w - 1, r.h * f + r.h - 1, 3, ColorSpace::rgb);
  img.native_scale = 255.0f;
  for (int yy = 0; yy < r.h; ++yy)
    for (int xx = 0; xx < r.w; ++xx)
      for (int k1 = 0; k1 < f; ++k1)
        for (int k2 = 0; k2 < f; ++k2) {
          const float raw = field.at(0, int64_t(k1) * f + k2, r.y + yy, r.x + xx);
          const float v = scale > 0.0f ? raw / scale : 0.0f;
          const int py = yy * (f + 1) + k1;
          const int px = xx * (f + 1) + k2;
          const float mag = std::min(std::abs(v), 1.0f);
          if (v >= 0.0f) {  // white -> red
            img.at(py, px, 0) = 1.0f;
            img.at(py, px, 1) = 1.0f - mag;
            img.at(py, px, 2) = 1.0f - mag;
          } else {  // white -> blue
            img.at(py, px, 0) = 1.0f - mag;
            img.at(py, px, 1) = 1.0f - mag;
            img.at(py, px, 2) = 1.0f;
          }
        }
  return img;
}

inline void export_kernel_grid(const Tensor<float>& field, int f, const GridRegion& r,
                               const std::string& out_path) {
  save_image(render_kernel_grid(field, f, r), out_path);
}

}  // namespace dair

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dair/common.hpp"
#include "dair/image.hpp"

// Classical separable resampling with half-pixel-centered coordinates
// src = (dst + 0.5) * (in / out) - 0.5, the convention the SR benchmark
// numbers depend on. On downscale with antialias the kernel is stretched by
// the shrink factor; weights are always renormalized to sum 1; source reads
// clamp to the edge; output is clamped to [0,1] unless the caller asks for
// the raw values (overshoot inspection).

namespace dair {

enum class ResizeMethod { nearest, bilinear, bicubic, lanczos3 };

inline ResizeMethod resize_method_from_name(const std::string& s) {
  if (s == "nearest") return ResizeMethod::nearest;
  if (s == "bilinear") return ResizeMethod::bilinear;
  if (s == "bicubic") return ResizeMethod::bicubic;
  if (s == "lanczos3") return ResizeMethod::lanczos3;
  throw FormatError("unknown resize method '" + s + "'");
}

namespace detail {

// Keys cubic with a = -0.5.
inline double cubic_kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = 3.14159265358979323846 * x;
  return std::sin(px) / px;
}

inline double lanczos3_kernel(double x) {
  if (std::abs(x) >= 3.0) return 0.0;
  return sinc(x) * sinc(x / 3.0);
}

// Box on [-0.5, 0.5), half-open so a tie rounds toward the larger index.
inline double nearest_kernel(double x) { return x >= -0.5 && x < 0.5 ? 1.0 : 0.0; }

inline double linear_kernel(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

inline double base_support(ResizeMethod m) {
  switch (m) {
    case ResizeMethod::nearest: return 0.5;
    case ResizeMethod::bilinear: return 1.0;
    case ResizeMethod::bicubic: return 2.0;
    case ResizeMethod::lanczos3: return 3.0;
  }
  throw StructuralError("unreachable resize method");
}

inline double eval_kernel(ResizeMethod m, double x) {
  switch (m) {
    case ResizeMethod::nearest: return nearest_kernel(x);
    case ResizeMethod::bilinear: return linear_kernel(x);
    case ResizeMethod::bicubic: return cubic_kernel(x);
    case ResizeMethod::lanczos3: return lanczos3_kernel(x);
  }
  throw StructuralError("unreachable resize method");
}

// Tap positions and normalized weights along one axis.
struct AxisPlan {
  int in = 0, out = 0;
  std::vector<int> start;        // first tap per output index
  std::vector<int> count;        // taps per output index
  std::vector<double> weights;   // ragged rows, same order as start/count
};

inline AxisPlan plan_axis(int in, int out, ResizeMethod m, bool antialias) {
  if (in < 1 || out < 1) throw StructuralError("resize dims must be >= 1");
  AxisPlan p;
  p.in = in;
  p.out = out;
  // Nearest is a pure index pick; stretching it would turn it into a box
  // average, so antialiasing does not apply.
  const bool shrink_kernel = antialias && out < in && m != ResizeMethod::nearest;
  const double kscale = shrink_kernel ? double(out) / double(in) : 1.0;
  const double support = base_support(m) / kscale;
  p.start.reserve(out);
  p.count.reserve(out);
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * double(in) / double(out) - 0.5;
    const int lo = int(std::ceil(center - support - 1e-9));
    const int hi = int(std::floor(center + support + 1e-9));
    double sum = 0.0;
    std::vector<double> w(std::size_t(hi - lo + 1));
    for (int j = lo; j <= hi; ++j) {
      w[std::size_t(j - lo)] = eval_kernel(m, (center - j) * kscale);
      sum += w[std::size_t(j - lo)];
    }
    if (sum == 0.0) throw StructuralError("degenerate resize kernel");
    p.start.push_back(lo);
    p.count.push_back(hi - lo + 1);
    for (double v : w) p.weights.push_back(v / sum);
  }
  return p;
}

inline int clamp_tap(int j, int n) { return j < 0 ? 0 : (j >= n ? n - 1 : j); }

// in: rows x in-width; out: rows x plan.out.
inline void apply_plan_rows(const std::vector<float>& in, int rows,
                            const AxisPlan& p, std::vector<float>& out) {
  out.assign(std::size_t(rows) * p.out, 0.0f);
  for (int y = 0; y < rows; ++y) {
    const float* src = in.data() + std::size_t(y) * p.in;
    float* dst = out.data() + std::size_t(y) * p.out;
    const double* w = p.weights.data();
    for (int i = 0; i < p.out; ++i) {
      double acc = 0.0;
      for (int t = 0; t < p.count[i]; ++t)
        acc += w[t] * src[clamp_tap(p.start[i] + t, p.in)];
      w += p.count[i];
      dst[i] = float(acc);
    }
  }
}

// Transposes a rows x cols plane.
inline std::vector<float> transpose_plane(const std::vector<float>& in, int rows,
                                          int cols) {
  std::vector<float> out(in.size());
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x)
      out[std::size_t(x) * rows + y] = in[std::size_t(y) * cols + x];
  return out;
}

}  // namespace detail

inline ImageBuffer resize_classical(const ImageBuffer& img, int out_w, int out_h,
                                    ResizeMethod method, bool antialias,
                                    bool clamp_output = true) {
  if (out_w < 1 || out_h < 1) throw StructuralError("resize dims must be >= 1");
  const detail::AxisPlan px = detail::plan_axis(img.width, out_w, method, antialias);
  const detail::AxisPlan py = detail::plan_axis(img.height, out_h, method, antialias);

  ImageBuffer out(out_w, out_h, img.channels, img.space);
  out.native_scale = img.native_scale;

  std::vector<float> plane(std::size_t(img.width) * img.height);
  std::vector<float> wide, tall;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        plane[std::size_t(y) * img.width + x] = img.at(y, x, c);
    detail::apply_plan_rows(plane, img.height, px, wide);       // height x out_w
    std::vector<float> t = detail::transpose_plane(wide, img.height, out_w);
    detail::apply_plan_rows(t, out_w, py, tall);                // out_w x out_h
    std::vector<float> final_plane = detail::transpose_plane(tall, out_w, out_h);
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        float v = final_plane[std::size_t(y) * out_w + x];
        if (clamp_output) v = std::min(std::max(v, 0.0f), 1.0f);
        out.at(y, x, c) = v;
      }
  }
  return out;
}

// Fractional-scale convenience: output extents round up (ceil convention).
inline ImageBuffer resize_classical(const ImageBuffer& img, double scale,
                                    ResizeMethod method, bool antialias) {
  if (scale <= 0.0) throw StructuralError("resize scale must be positive");
  const int out_w = int(std::ceil(img.width * scale));
  const int out_h = int(std::ceil(img.height * scale));
  return resize_classical(img, out_w, out_h, method, antialias);
}

}  // namespace dair

#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dair/common.hpp"
#include "dair/tensor.hpp"

// Image buffers and file I/O. Formats: PNG (8-bit gray/RGB, 16-bit gray for
// depth maps) and binary PGM/PPM. Values live in [0,1]; `native_scale`
// remembers the integer range they were quantized from (255, 65535, or 1 for
// buffers synthesized in code) so depth errors can be reported in the
// dataset's own units.

namespace dair {

enum class ColorSpace { gray, rgb, luma_y, depth };

struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  ColorSpace space = ColorSpace::gray;
  float native_scale = 1.0f;
  std::vector<float> values;  // interleaved rows, channel fastest

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, ColorSpace sp = ColorSpace::gray)
      : width(w), height(h), channels(c), space(sp),
        values(static_cast<std::size_t>(w) * h * c, 0.0f) {
    if (w < 1 || h < 1 || (c != 1 && c != 3))
      throw StructuralError("image dims must be positive with 1 or 3 channels");
  }

  float& at(int y, int x, int c = 0) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {

struct PngRead {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWrite {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         std::equal(suf.rbegin(), suf.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

inline uint16_t round_unit_to(float v, int maxval) {
  const float x = v * static_cast<float>(maxval);
  const float r = std::floor(x + 0.5f);  // round half away from zero; v >= 0
  return static_cast<uint16_t>(std::min(std::max(r, 0.0f), float(maxval)));
}

inline ImageBuffer load_png(const std::string& path) {
  PngRead ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw FormatError("cannot open image: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw FormatError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw FormatError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw FormatError("PNG decode failed: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  int color = png_get_color_type(ctx.png, ctx.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  color = png_get_color_type(ctx.png, ctx.info);
  const int ch = color == PNG_COLOR_TYPE_GRAY ? 1
               : color == PNG_COLOR_TYPE_RGB ? 3
               : 0;
  if (ch == 0) throw FormatError("unsupported PNG color type in " + path);
  if (bit_depth == 16 && ch != 1)
    throw FormatError("16-bit PNG supported for grayscale depth only: " + path);
  if (bit_depth != 8 && bit_depth != 16)
    throw FormatError("unsupported PNG bit depth in " + path);

  const std::size_t stride = png_get_rowbytes(ctx.png, ctx.info);
  std::vector<uint8_t> rows(stride * h);
  std::vector<png_bytep> row_ptrs(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows.data() + y * stride;
  png_read_image(ctx.png, row_ptrs.data());
  png_read_end(ctx.png, nullptr);

  ImageBuffer img(int(w), int(h), ch,
                  bit_depth == 16 ? ColorSpace::depth
                  : ch == 3      ? ColorSpace::rgb
                                 : ColorSpace::gray);
  img.native_scale = bit_depth == 16 ? 65535.0f : 255.0f;
  const float inv = 1.0f / img.native_scale;
  for (png_uint_32 y = 0; y < h; ++y) {
    const uint8_t* src = rows.data() + y * stride;
    float* dst = &img.at(int(y), 0, 0);
    const std::size_t n = std::size_t(w) * ch;
    if (bit_depth == 8) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = float(src[i]) * inv;
    } else {
      // PNG stores 16-bit samples most significant byte first.
      for (std::size_t i = 0; i < n; ++i)
        dst[i] = float(uint16_t(src[2 * i]) << 8 | src[2 * i + 1]) * inv;
    }
  }
  return img;
}

inline void save_png(const ImageBuffer& img, const std::string& path, int bit_depth) {
  PngWrite ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw FormatError("cannot open image for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw FormatError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw FormatError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw FormatError("PNG encode failed: " + path);

  png_init_io(ctx.png, ctx.fp);
  // Fixed encode settings keep repeated exports byte-identical.
  png_set_compression_level(ctx.png, 6);
  png_set_IHDR(ctx.png, ctx.info, png_uint_32(img.width), png_uint_32(img.height),
               bit_depth,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  const int maxval = bit_depth == 16 ? 65535 : 255;
  const std::size_t n = std::size_t(img.width) * img.channels;
  std::vector<uint8_t> row(n * (bit_depth / 8));
  for (int y = 0; y < img.height; ++y) {
    const float* src = img.values.data() + std::size_t(y) * n;
    if (bit_depth == 8) {
      for (std::size_t i = 0; i < n; ++i)
        row[i] = uint8_t(round_unit_to(src[i], maxval));
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const uint16_t v = round_unit_to(src[i], maxval);
        row[2 * i] = uint8_t(v >> 8);
        row[2 * i + 1] = uint8_t(v & 0xff);
      }
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, ctx.info);
}

inline ImageBuffer load_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6")
    throw FormatError("unsupported PNM magic '" + magic + "' in " + path, 0);
  const int ch = magic == "P6" ? 3 : 1;
  // Header tokens may be separated by whitespace and '#' comment lines.
  auto next_int = [&]() {
    for (;;) {
      int c = f.peek();
      if (c == '#') { std::string line; std::getline(f, line); continue; }
      if (std::isspace(c)) { f.get(); continue; }
      break;
    }
    long long v = -1;
    f >> v;
    if (!f || v < 0) throw FormatError("bad PNM header in " + path);
    return v;
  };
  const long long w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1 || (maxval != 255 && maxval != 65535))
    throw FormatError("unsupported PNM geometry/maxval in " + path);
  if (maxval == 65535 && ch != 1)
    throw FormatError("16-bit PNM supported for grayscale depth only: " + path);
  f.get();  // single whitespace byte before the raster

  ImageBuffer img(int(w), int(h), ch,
                  maxval == 65535 ? ColorSpace::depth
                  : ch == 3      ? ColorSpace::rgb
                                 : ColorSpace::gray);
  img.native_scale = float(maxval);
  const std::size_t n = std::size_t(w) * h * ch;
  const int bytes = maxval == 65535 ? 2 : 1;
  std::vector<uint8_t> raw(n * bytes);
  f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (std::size_t(f.gcount()) != raw.size())
    throw FormatError("truncated PNM raster in " + path,
                      static_cast<long long>(f.gcount()));
  const float inv = 1.0f / img.native_scale;
  if (bytes == 1) {
    for (std::size_t i = 0; i < n; ++i) img.values[i] = float(raw[i]) * inv;
  } else {
    // PNM 16-bit is big-endian, like PNG.
    for (std::size_t i = 0; i < n; ++i)
      img.values[i] = float(uint16_t(raw[2 * i]) << 8 | raw[2 * i + 1]) * inv;
  }
  return img;
}

inline void save_pnm(const ImageBuffer& img, const std::string& path, int maxval) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open image for writing: " + path);
  f << (img.channels == 3 ? "P6" : "P5") << "\n"
    << img.width << " " << img.height << "\n" << maxval << "\n";
  const std::size_t n = img.values.size();
  if (maxval == 255) {
    std::vector<uint8_t> raw(n);
    for (std::size_t i = 0; i < n; ++i)
      raw[i] = uint8_t(round_unit_to(img.values[i], maxval));
    f.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(n));
  } else {
    std::vector<uint8_t> raw(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      const uint16_t v = round_unit_to(img.values[i], maxval);
      raw[2 * i] = uint8_t(v >> 8);
      raw[2 * i + 1] = uint8_t(v & 0xff);
    }
    f.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  }
  if (!f) throw FormatError("short write on " + path);
}

}  // namespace detail

inline ImageBuffer load_image(const std::string& path) {
  if (detail::has_suffix(path, ".png")) return detail::load_png(path);
  if (detail::has_suffix(path, ".pgm") || detail::has_suffix(path, ".ppm"))
    return detail::load_pnm(path);
  throw FormatError("unsupported image format (want .png/.pgm/.ppm): " + path);
}

// Quantization follows the buffer's native scale: 16-bit for depth loaded
// from 16-bit sources, 8-bit otherwise.
inline void save_image(const ImageBuffer& img, const std::string& path) {
  const int bit_depth = img.native_scale == 65535.0f && img.channels == 1 ? 16 : 8;
  if (detail::has_suffix(path, ".png")) {
    detail::save_png(img, path, bit_depth);
    return;
  }
  if (detail::has_suffix(path, ".pgm") || detail::has_suffix(path, ".ppm")) {
    detail::save_pnm(img, path, bit_depth == 16 ? 65535 : 255);
    return;
  }
  throw FormatError("unsupported image format (want .png/.pgm/.ppm): " + path);
}

// BT.601 studio-swing luma: Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255.
inline ImageBuffer rgb_to_y(const ImageBuffer& rgb) {
  if (rgb.channels != 3 || rgb.space != ColorSpace::rgb)
    throw StructuralError("rgb_to_y expects an RGB buffer");
  ImageBuffer y(rgb.width, rgb.height, 1, ColorSpace::luma_y);
  y.native_scale = rgb.native_scale;
  for (int i = 0, n = rgb.width * rgb.height; i < n; ++i) {
    const float r = rgb.values[3 * i], g = rgb.values[3 * i + 1],
                b = rgb.values[3 * i + 2];
    y.values[i] = (65.481f * r + 128.553f * g + 24.966f * b + 16.0f) / 255.0f;
  }
  return y;
}

// Full BT.601 conversion used only to reassemble color output for the `sr`
// command: the model upscales luma, chroma rides along via a classical
// resizer, and this pair maps between the spaces.
struct YCbCr {
  ImageBuffer y, cb, cr;
};

inline YCbCr rgb_to_ycbcr(const ImageBuffer& rgb) {
  if (rgb.channels != 3) throw StructuralError("rgb_to_ycbcr expects RGB");
  YCbCr out{ImageBuffer(rgb.width, rgb.height, 1, ColorSpace::luma_y),
            ImageBuffer(rgb.width, rgb.height, 1, ColorSpace::gray),
            ImageBuffer(rgb.width, rgb.height, 1, ColorSpace::gray)};
  for (int i = 0, n = rgb.width * rgb.height; i < n; ++i) {
    const float r = rgb.values[3 * i], g = rgb.values[3 * i + 1],
                b = rgb.values[3 * i + 2];
    out.y.values[i] = (65.481f * r + 128.553f * g + 24.966f * b + 16.0f) / 255.0f;
    out.cb.values[i] = (-37.797f * r - 74.203f * g + 112.0f * b + 128.0f) / 255.0f;
    out.cr.values[i] = (112.0f * r - 93.786f * g - 18.214f * b + 128.0f) / 255.0f;
  }
  return out;
}

inline ImageBuffer ycbcr_to_rgb(const ImageBuffer& y, const ImageBuffer& cb,
                                const ImageBuffer& cr) {
  if (y.width != cb.width || y.width != cr.width || y.height != cb.height ||
      y.height != cr.height)
    throw StructuralError("ycbcr_to_rgb plane size mismatch");
  ImageBuffer rgb(y.width, y.height, 3, ColorSpace::rgb);
  rgb.native_scale = 255.0f;
  for (int i = 0, n = y.width * y.height; i < n; ++i) {
    const float yy = y.values[i] * 255.0f - 16.0f;
    const float pb = cb.values[i] * 255.0f - 128.0f;
    const float pr = cr.values[i] * 255.0f - 128.0f;
    const float r = (298.082f * yy / 256.0f + 408.583f * pr / 256.0f) / 255.0f;
    const float g =
        (298.082f * yy / 256.0f - 100.291f * pb / 256.0f - 208.120f * pr / 256.0f) /
        255.0f;
    const float b = (298.082f * yy / 256.0f + 516.412f * pb / 256.0f) / 255.0f;
    rgb.values[3 * i] = std::min(std::max(r, 0.0f), 1.0f);
    rgb.values[3 * i + 1] = std::min(std::max(g, 0.0f), 1.0f);
    rgb.values[3 * i + 2] = std::min(std::max(b, 0.0f), 1.0f);
  }
  return rgb;
}

// Single-channel image as a [1,1,H,W] tensor and back.
inline Tensor<float> image_to_tensor(const ImageBuffer& img) {
  if (img.channels != 1)
    throw StructuralError("image_to_tensor expects a single-channel buffer");
  Tensor<float> t({1, 1, img.height, img.width});
  std::memcpy(t.data(), img.values.data(), sizeof(float) * img.values.size());
  return t;
}

// Three-channel image as [1,3,H,W] (planes from interleaved rows).
inline Tensor<float> rgb_to_tensor(const ImageBuffer& img) {
  if (img.channels != 3) throw StructuralError("rgb_to_tensor expects RGB");
  Tensor<float> t({1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = img.at(y, x, c);
  return t;
}

inline ImageBuffer tensor_to_image(const Tensor<float>& t, ColorSpace space,
                                   float native_scale, bool clamp_unit = true) {
  require_shape4(t, "tensor_to_image input");
  if (t.dim(0) != 1 || t.dim(1) != 1)
    throw StructuralError("tensor_to_image expects a [1,1,H,W] tensor");
  ImageBuffer img(int(t.dim(3)), int(t.dim(2)), 1, space);
  img.native_scale = native_scale;
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    float v = t[int64_t(i)];
    if (clamp_unit) v = std::min(std::max(v, 0.0f), 1.0f);
    img.values[i] = v;
  }
  return img;
}

}  // namespace dair

#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dair/common.hpp"
#include "dair/image.hpp"
#include "dair/resize.hpp"
#include "dair/rng.hpp"

// Dataset manifests, augmentation, and patch sampling. A manifest is UTF-8
// text listing one image path per line relative to the manifest's directory;
// the depth task lists "depth-path<TAB>guidance-path" pairs. Lines starting
// with '#' are comments. Every listed file is decoded when the manifest is
// opened, so a bad path fails fast rather than mid-training.

namespace dair {

enum class Task { sr, depth };

struct SamplePair {
  ImageBuffer lr;
  ImageBuffer hr;
  int scale = 1;
  ImageBuffer guidance;  // depth task only
  std::string source_id;

  bool has_guidance() const { return guidance.width > 0; }
};

struct DatasetManifest {
  Task task = Task::sr;
  std::vector<std::string> ids;        // listed paths, for reporting
  std::vector<ImageBuffer> images;     // sr task
  std::vector<ImageBuffer> depths;     // depth task
  std::vector<ImageBuffer> guides;     // depth task, parallel to depths

  std::size_t size() const {
    return task == Task::sr ? images.size() : depths.size();
  }
};

namespace detail {

inline std::string dirname_of(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

}  // namespace detail

inline DatasetManifest open_manifest(const std::string& path, Task task) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest: " + path);
  const std::string root = detail::dirname_of(path);
  DatasetManifest m;
  m.task = task;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (task == Task::sr) {
      if (tab != std::string::npos)
        throw FormatError("manifest line " + std::to_string(line_no) +
                          " has a depth/guidance pair but the task is SR");
      m.ids.push_back(line);
      m.images.push_back(load_image(root + "/" + line));
    } else {
      if (tab == std::string::npos)
        throw FormatError("manifest line " + std::to_string(line_no) +
                          " needs 'depth<TAB>guidance' for the depth task");
      const std::string dp = line.substr(0, tab);
      const std::string gp = line.substr(tab + 1);
      m.ids.push_back(dp);
      m.depths.push_back(load_image(root + "/" + dp));
      ImageBuffer g = load_image(root + "/" + gp);
      if (g.channels != 3)
        throw FormatError("guidance image must be RGB: " + gp);
      if (g.width != m.depths.back().width || g.height != m.depths.back().height)
        throw FormatError("guidance size does not match depth map on line " +
                          std::to_string(line_no));
      m.guides.push_back(std::move(g));
    }
  }
  if (m.size() == 0) throw FormatError("manifest lists no images: " + path);
  return m;
}

namespace detail {

inline ImageBuffer rotate90(const ImageBuffer& in) {
  ImageBuffer out(in.height, in.width, in.channels, in.space);
  out.native_scale = in.native_scale;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c)
        out.at(x, in.height - 1 - y, c) = in.at(y, x, c);
  return out;
}

inline ImageBuffer hflip(const ImageBuffer& in) {
  ImageBuffer out(in.width, in.height, in.channels, in.space);
  out.native_scale = in.native_scale;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c)
        out.at(y, in.width - 1 - x, c) = in.at(y, x, c);
  return out;
}

inline ImageBuffer crop(const ImageBuffer& in, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > in.width || y0 + h > in.height)
    throw StructuralError("crop outside image bounds");
  ImageBuffer out(w, h, in.channels, in.space);
  out.native_scale = in.native_scale;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < in.channels; ++c)
        out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
  return out;
}

inline ImageBuffer to_luma(const ImageBuffer& in) {
  return in.channels == 3 ? rgb_to_y(in) : in;
}

}  // namespace detail

// Random rotation (multiples of 90 degrees), downscaling (factors 0.6..0.9
// or none), and horizontal flip. Draw order is rotation, scale, flip; the
// transforms apply as scale, then rotation, then flip.
inline ImageBuffer augment(const ImageBuffer& in, Rng& rng) {
  const int rot = int(rng.uniform_int(4));
  static constexpr double kScales[5] = {0.6, 0.7, 0.8, 0.9, 1.0};
  const double scale = kScales[rng.uniform_int(5)];
  const bool flip = rng.uniform_int(2) == 1;

  ImageBuffer out = scale == 1.0
                        ? in
                        : resize_classical(in, scale, ResizeMethod::bicubic, true);
  for (int i = 0; i < rot; ++i) out = detail::rotate90(out);
  if (flip) out = detail::hflip(out);
  return out;
}

// Evaluation pair: crop the HR image so both extents divide by s (right and
// bottom remainders dropped), synthesize LR with antialiased bicubic, and
// reduce both sides to luma for the SR task.
inline SamplePair make_eval_pair(const ImageBuffer& hr_in, int s) {
  if (s < 1) throw StructuralError("make_eval_pair needs s >= 1");
  const int w = hr_in.width / s * s;
  const int h = hr_in.height / s * s;
  if (w < s || h < s)
    throw StructuralError("image smaller than one LR pixel at scale " +
                          std::to_string(s));
  SamplePair p;
  p.scale = s;
  p.hr = detail::to_luma(detail::crop(hr_in, 0, 0, w, h));
  p.lr = resize_classical(p.hr, w / s, h / s, ResizeMethod::bicubic, true);
  return p;
}

// Depth evaluation/training pair at full frame: LR depth by nearest pick,
// RGB guidance stays at HR resolution.
inline SamplePair make_depth_pair(const ImageBuffer& depth,
                                  const ImageBuffer& guidance, int s) {
  const int w = depth.width / s * s;
  const int h = depth.height / s * s;
  if (w < s || h < s) throw StructuralError("depth map smaller than scale");
  SamplePair p;
  p.scale = s;
  p.hr = detail::crop(depth, 0, 0, w, h);
  p.guidance = detail::crop(guidance, 0, 0, w, h);
  p.lr = resize_classical(p.hr, w / s, h / s, ResizeMethod::nearest, false);
  return p;
}

// One random training pair. SR: random image, augment, random HR crop of
// patch_hr (= 48*s by default), antialiased-bicubic LR, luma. Depth task:
// aligned random crops of depth and guidance, nearest-downsampled LR depth,
// no augmentation.
inline SamplePair sample_training_pair(const DatasetManifest& m, int s, int patch_hr,
                                       Rng& rng) {
  if (m.size() == 0) throw StructuralError("empty manifest");
  if (patch_hr % s != 0)
    throw StructuralError("patch size must be divisible by the scale");

  if (m.task == Task::sr) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto idx = std::size_t(rng.uniform_int(int64_t(m.images.size())));
      ImageBuffer img = augment(m.images[idx], rng);
      if (img.width < patch_hr || img.height < patch_hr) continue;
      const int x0 = int(rng.uniform_int(img.width - patch_hr + 1));
      const int y0 = int(rng.uniform_int(img.height - patch_hr + 1));
      SamplePair p;
      p.scale = s;
      p.source_id = m.ids[idx];
      p.hr = detail::to_luma(detail::crop(img, x0, y0, patch_hr, patch_hr));
      p.lr = resize_classical(p.hr, patch_hr / s, patch_hr / s,
                              ResizeMethod::bicubic, true);
      return p;
    }
    throw StructuralError("no training image admits a " + std::to_string(patch_hr) +
                          "-pixel crop after augmentation");
  }

  const auto idx = std::size_t(rng.uniform_int(int64_t(m.depths.size())));
  const ImageBuffer& d = m.depths[idx];
  const ImageBuffer& g = m.guides[idx];
  if (d.width < patch_hr || d.height < patch_hr)
    throw StructuralError("depth map smaller than the requested patch");
  const int x0 = int(rng.uniform_int(d.width - patch_hr + 1));
  const int y0 = int(rng.uniform_int(d.height - patch_hr + 1));
  SamplePair p;
  p.scale = s;
  p.source_id = m.ids[idx];
  p.hr = detail::crop(d, x0, y0, patch_hr, patch_hr);
  p.guidance = detail::crop(g, x0, y0, patch_hr, patch_hr);
  p.lr = resize_classical(p.hr, patch_hr / s, patch_hr / s, ResizeMethod::nearest,
                          false);
  return p;
}

}  // namespace dair

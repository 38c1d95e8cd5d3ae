#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dair/common.hpp"
#include "dair/image.hpp"

// PSNR / SSIM on [0,255]-scaled luma and RMSE in native depth units, the
// three numbers the evaluation protocol reports.

namespace dair {

namespace detail {

inline void require_metric_pair(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height)
    throw StructuralError("metric inputs differ in size");
  if (a.channels != 1 || b.channels != 1)
    throw StructuralError("metrics operate on single-channel images");
}

inline void require_shave(const ImageBuffer& a, int shave, int min_rest) {
  if (shave < 0) throw StructuralError("shave must be >= 0");
  if (a.width - 2 * shave < min_rest || a.height - 2 * shave < min_rest)
    throw StructuralError("shave of " + std::to_string(shave) +
                          " leaves too little image");
}

// Valid-region separable Gaussian filtering of an h x w plane; the window
// is 11 taps with sigma 1.5, the SSIM reference setting.
constexpr int kSsimWindow = 11;

inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - (kSsimWindow - 1) / 2;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w;
}

inline std::vector<double> gaussian_valid(const std::vector<double>& plane, int w,
                                          int h, int& out_w, int& out_h) {
  const auto& g = ssim_window();
  out_w = w - kSsimWindow + 1;
  out_h = h - kSsimWindow + 1;
  std::vector<double> rows(std::size_t(h) * out_w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t)
        acc += g[t] * plane[std::size_t(y) * w + x + t];
      rows[std::size_t(y) * out_w + x] = acc;
    }
  std::vector<double> out(std::size_t(out_h) * out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t)
        acc += g[t] * rows[std::size_t(y + t) * out_w + x];
      out[std::size_t(y) * out_w + x] = acc;
    }
  return out;
}

inline std::vector<double> shaved_plane_255(const ImageBuffer& img, int shave,
                                            int& w, int& h) {
  w = img.width - 2 * shave;
  h = img.height - 2 * shave;
  std::vector<double> p(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p[std::size_t(y) * w + x] = 255.0 * img.at(y + shave, x + shave);
  return p;
}

}  // namespace detail

// Peak signal-to-noise ratio on [0,255]-scaled values, capped at 100 dB so
// identical images have a defined result.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, int shave = 0) {
  detail::require_metric_pair(a, b);
  detail::require_shave(a, shave, 1);
  int w = 0, h = 0;
  const std::vector<double> pa = detail::shaved_plane_255(a, shave, w, h);
  const std::vector<double> pb = detail::shaved_plane_255(b, shave, w, h);
  double mse = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    mse += d * d;
  }
  mse /= double(pa.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// Single-scale SSIM, mean over valid (fully inside) window positions.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, int shave = 0) {
  detail::require_metric_pair(a, b);
  detail::require_shave(a, shave, detail::kSsimWindow);
  int w = 0, h = 0;
  const std::vector<double> pa = detail::shaved_plane_255(a, shave, w, h);
  const std::vector<double> pb = detail::shaved_plane_255(b, shave, w, h);

  std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  int vw = 0, vh = 0;
  const std::vector<double> mu_a = detail::gaussian_valid(pa, w, h, vw, vh);
  const std::vector<double> mu_b = detail::gaussian_valid(pb, w, h, vw, vh);
  const std::vector<double> m_aa = detail::gaussian_valid(aa, w, h, vw, vh);
  const std::vector<double> m_bb = detail::gaussian_valid(bb, w, h, vw, vh);
  const std::vector<double> m_ab = detail::gaussian_valid(ab, w, h, vw, vh);

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return acc / double(mu_a.size());
}

// Root mean squared error in the buffers' native integer units.
inline double rmse(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require_metric_pair(a, b);
  if (a.native_scale != b.native_scale)
    throw StructuralError("rmse inputs carry different native scales");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = double(a.values[i]) - double(b.values[i]);
    acc += d * d;
  }
  return double(a.native_scale) * std::sqrt(acc / double(a.values.size()));
}

struct MetricRecord {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = -1.0;  // negative means not measured

  bool has_rmse() const { return rmse >= 0.0; }
};

struct MetricReport {
  std::vector<MetricRecord> records;

  double mean_psnr() const { return mean(&MetricRecord::psnr); }
  double mean_ssim() const { return mean(&MetricRecord::ssim); }
  double mean_rmse() const { return mean(&MetricRecord::rmse); }
  bool has_rmse() const {
    return !records.empty() && records.front().has_rmse();
  }

  // Tab-separated per-image lines plus a trailing MEAN line.
  std::string to_tsv() const {
    std::string out = has_rmse() ? "image\tpsnr\tssim\trmse\n"
                                 : "image\tpsnr\tssim\n";
    char buf[256];
    for (const auto& r : records) {
      if (r.has_rmse())
        std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\t%.4f\n", r.id.c_str(),
                      r.psnr, r.ssim, r.rmse);
      else
        std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\n", r.id.c_str(), r.psnr,
                      r.ssim);
      out += buf;
    }
    if (has_rmse())
      std::snprintf(buf, sizeof buf, "MEAN\t%.4f\t%.4f\t%.4f\n", mean_psnr(),
                    mean_ssim(), mean_rmse());
    else
      std::snprintf(buf, sizeof buf, "MEAN\t%.4f\t%.4f\n", mean_psnr(), mean_ssim());
    out += buf;
    return out;
  }

  // Machine-readable summary block.
  std::string to_key_values() const {
    char buf[256];
    std::string out = "count = " + std::to_string(records.size()) + "\n";
    std::snprintf(buf, sizeof buf, "mean-psnr = %.6f\nmean-ssim = %.6f\n",
                  mean_psnr(), mean_ssim());
    out += buf;
    if (has_rmse()) {
      std::snprintf(buf, sizeof buf, "mean-rmse = %.6f\n", mean_rmse());
      out += buf;
    }
    return out;
  }

 private:
  double mean(double MetricRecord::* field) const {
    if (records.empty()) throw StructuralError("empty metric report");
    double acc = 0.0;
    for (const auto& r : records) acc += r.*field;
    return acc / double(records.size());
  }
};

}  // namespace dair

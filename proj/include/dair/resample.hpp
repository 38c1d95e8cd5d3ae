#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/ops.hpp"
#include "dair/tensor.hpp"

// Spatially-variant dilated resampling. Every output pixel (i,j) owns an
// f x f kernel stored as f^2 channels of a field tensor; the kernel taps the
// source at stride s around (i,j), replicating edge pixels for out-of-range
// taps. The same field can be re-applied at several dilation intervals and
// summed, which composes a large sparse kernel from one small prediction.

namespace dair {

// Per-pixel kernel map over a full-resolution grid. Channel k of `values`
// holds the weight for kernel offset (k1, k2) with k = k1*f + k2.
template <typename T>
struct KernelField {
  Var<T> values;  // [N, f*f, H, W]
  int f = 0;      // odd kernel extent
  int s = 1;      // dilation interval between taps

  void validate() const {
    const Tensor<T>& v = values.value();
    require_shape4(v, "kernel field");
    if (f < 1 || f % 2 == 0)
      throw StructuralError("kernel extent must be odd and positive, got " +
                            std::to_string(f));
    if (s < 1) throw StructuralError("dilation interval must be >= 1");
    if (v.dim(1) != int64_t(f) * f)
      throw StructuralError("kernel field has " + std::to_string(v.dim(1)) +
                            " channels, expected f^2 = " + std::to_string(f * f));
  }
};

// Ordered dilation intervals for the pyramid variant.
struct IntervalSet {
  std::vector<int> intervals;

  void validate() const {
    if (intervals.empty()) throw StructuralError("interval set is empty");
    int prev = 0;
    for (int s : intervals) {
      if (s <= prev)
        throw StructuralError("intervals must be positive and strictly increasing");
      prev = s;
    }
  }
};

namespace detail {

inline int64_t clamp_index(int64_t v, int64_t n) {
  return v < 0 ? 0 : (v >= n ? n - 1 : v);
}

// Splits the inner loop over output columns into a left edge-clamped run,
// an in-range middle, and a right edge-clamped run for tap offset ox.
struct ColumnSplit {
  int64_t j0, j1;
  ColumnSplit(int64_t ox, int64_t w) {
    j0 = std::min<int64_t>(std::max<int64_t>(0, -ox), w);
    j1 = std::max<int64_t>(j0, std::min<int64_t>(w, w - ox));
  }
};

template <typename T>
Tensor<T> resample_forward(const Tensor<T>& src, const Tensor<T>& fld, int f, int s) {
  const int64_t n = src.dim(0), c = src.dim(1), h = src.dim(2), w = src.dim(3);
  Tensor<T> out({n, c, h, w});
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < f * f; ++k) {
      const int64_t oy = int64_t(s) * (k / f - f / 2);
      const int64_t ox = int64_t(s) * (k % f - f / 2);
      const ColumnSplit cs(ox, w);
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
          const T* sr = &src.at(i, ch, clamp_index(y + oy, h), 0);
          const T* fv = &fld.at(i, k, y, 0);
          T* dst = &out.at(i, ch, y, 0);
          for (int64_t j = 0; j < cs.j0; ++j) dst[j] += fv[j] * sr[0];
          for (int64_t j = cs.j0; j < cs.j1; ++j) dst[j] += fv[j] * sr[j + ox];
          for (int64_t j = cs.j1; j < w; ++j) dst[j] += fv[j] * sr[w - 1];
        }
      }
    }
  }
  return out;
}

// Scatter-add of upstream * field weights onto the source taps; clamped
// border taps accumulate repeatedly onto the edge pixel they resolve to.
template <typename T>
void resample_grad_source(const Tensor<T>& up, const Tensor<T>& fld, int f, int s,
                          Tensor<T>& gsrc) {
  const int64_t n = up.dim(0), c = up.dim(1), h = up.dim(2), w = up.dim(3);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < f * f; ++k) {
      const int64_t oy = int64_t(s) * (k / f - f / 2);
      const int64_t ox = int64_t(s) * (k % f - f / 2);
      const ColumnSplit cs(ox, w);
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
          T* gs = &gsrc.at(i, ch, clamp_index(y + oy, h), 0);
          const T* fv = &fld.at(i, k, y, 0);
          const T* g = &up.at(i, ch, y, 0);
          for (int64_t j = 0; j < cs.j0; ++j) gs[0] += g[j] * fv[j];
          for (int64_t j = cs.j0; j < cs.j1; ++j) gs[j + ox] += g[j] * fv[j];
          for (int64_t j = cs.j1; j < w; ++j) gs[w - 1] += g[j] * fv[j];
        }
      }
    }
  }
}

// Gather of source taps weighted by upstream, summed over source channels.
template <typename T>
void resample_grad_field(const Tensor<T>& up, const Tensor<T>& src, int f, int s,
                         Tensor<T>& gfld) {
  const int64_t n = up.dim(0), c = up.dim(1), h = up.dim(2), w = up.dim(3);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < f * f; ++k) {
      const int64_t oy = int64_t(s) * (k / f - f / 2);
      const int64_t ox = int64_t(s) * (k % f - f / 2);
      const ColumnSplit cs(ox, w);
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
          const T* sr = &src.at(i, ch, clamp_index(y + oy, h), 0);
          const T* g = &up.at(i, ch, y, 0);
          T* gf = &gfld.at(i, k, y, 0);
          for (int64_t j = 0; j < cs.j0; ++j) gf[j] += g[j] * sr[0];
          for (int64_t j = cs.j0; j < cs.j1; ++j) gf[j] += g[j] * sr[j + ox];
          for (int64_t j = cs.j1; j < w; ++j) gf[j] += g[j] * sr[w - 1];
        }
      }
    }
  }
}

template <typename T>
void check_resample_args(const Tensor<T>& src, const Tensor<T>& fld, int f, int s) {
  require_shape4(src, "resample source");
  require_shape4(fld, "resample field");
  if (f < 1 || f % 2 == 0) throw StructuralError("resample kernel extent must be odd");
  if (s < 1) throw StructuralError("resample dilation must be >= 1");
  if (fld.dim(1) != int64_t(f) * f)
    throw StructuralError("resample field channels != f^2");
  if (src.dim(0) != fld.dim(0) || src.dim(2) != fld.dim(2) || src.dim(3) != fld.dim(3))
    throw StructuralError("resample source/field size mismatch: " +
                          shape_string(src.shape()) + " vs " + shape_string(fld.shape()));
}

}  // namespace detail

// Full backward pass as plain tensors; handy for tests that cross-check the
// scatter/gather rules directly.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> resample_backward(const Tensor<T>& upstream,
                                                  const Tensor<T>& source,
                                                  const Tensor<T>& field, int f,
                                                  int s) {
  detail::check_resample_args(source, field, f, s);
  if (!upstream.same_shape(source))
    throw StructuralError("resample upstream/source shape mismatch");
  Tensor<T> gsrc(source.shape());
  Tensor<T> gfld(field.shape());
  detail::resample_grad_source(upstream, field, f, s, gsrc);
  detail::resample_grad_field(upstream, source, f, s, gfld);
  return {std::move(gsrc), std::move(gfld)};
}

// Applies the per-pixel kernels to the source at the field's dilation
// interval. Differentiable in both the source and the field.
template <typename T>
Var<T> adaptive_resample(const Var<T>& source, const KernelField<T>& field) {
  field.validate();
  const Tensor<T>& src = source.value();
  const Tensor<T>& fld = field.values.value();
  detail::check_resample_args(src, fld, field.f, field.s);

  Tensor<T> out = detail::resample_forward(src, fld, field.f, field.s);

  const int f = field.f, s = field.s;
  auto backprop = [f, s](Node<T>& self) {
    Node<T>& src_node = *self.parents[0];
    Node<T>& fld_node = *self.parents[1];
    if (src_node.requires_grad)
      detail::resample_grad_source(self.grad, fld_node.value, f, s,
                                   src_node.ensure_grad());
    if (fld_node.requires_grad)
      detail::resample_grad_field(self.grad, src_node.value, f, s,
                                  fld_node.ensure_grad());
  };

  return detail::make_op_node<T>("adaptive_resample", std::move(out),
                                 {source.node(), field.values.node()},
                                 std::move(backprop));
}

// Sums the resampling result over every interval in S, reusing the same
// field weights at each dilation.
template <typename T>
Var<T> adaptive_resample_asp(const Var<T>& source, const KernelField<T>& field,
                             const IntervalSet& set) {
  set.validate();
  Var<T> acc;
  for (int s : set.intervals) {
    KernelField<T> at_interval{field.values, field.f, s};
    Var<T> term = adaptive_resample(source, at_interval);
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc;
}

}  // namespace dair

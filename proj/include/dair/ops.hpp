#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/tensor.hpp"

// The differentiable operations the resampling architectures are built from:
// same-size 3x3-style convolution, ReLU, channel concat/slice, nearest
// upsampling, subpixel (pixel shuffle), L1 loss, and two small helpers used
// by tests and the gradient checker. No striding, pooling or broadcasting.

namespace dair {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unrolls one sample's conv receptive fields into col[K x (H*W)] with
// K = Cin*kh*kw; out-of-range taps are zero. Row k = (ci*kh+dy)*kw+dx.
template <typename T>
void im2col(const Tensor<T>& input, int64_t n, int kh, int kw, int pad,
            RowMat<T>& col) {
  const int64_t cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t hw = h * w;
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        T* row = col.data() + ((ci * kh + dy) * kw + dx) * hw;
        const int64_t off_y = dy - pad, off_x = dx - pad;
        for (int64_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const int64_t iy = y + off_y;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = &input.at(n, ci, iy, 0);
          const int64_t x0 = std::max<int64_t>(0, -off_x);
          const int64_t x1 = std::min<int64_t>(w, w - off_x);
          if (x0 > 0) std::fill(dst, dst + x0, T(0));
          if (x1 > x0) std::memcpy(dst + x0, src + x0 + off_x, sizeof(T) * (x1 - x0));
          if (x1 < w) std::fill(dst + std::max<int64_t>(x1, x0), dst + w, T(0));
        }
      }
    }
  }
}

// Scatter-add of a col matrix back onto one sample's input gradient.
template <typename T>
void col2im_add(const RowMat<T>& col, Tensor<T>& ginput, int64_t n, int kh,
                int kw, int pad) {
  const int64_t cin = ginput.dim(1), h = ginput.dim(2), w = ginput.dim(3);
  const int64_t hw = h * w;
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        const T* row = col.data() + ((ci * kh + dy) * kw + dx) * hw;
        const int64_t off_y = dy - pad, off_x = dx - pad;
        for (int64_t y = 0; y < h; ++y) {
          const int64_t iy = y + off_y;
          if (iy < 0 || iy >= h) continue;
          T* dst = &ginput.at(n, ci, iy, 0);
          const int64_t x0 = std::max<int64_t>(0, -off_x);
          const int64_t x1 = std::min<int64_t>(w, w - off_x);
          const T* src = row + y * w;
          for (int64_t x = x0; x < x1; ++x) dst[x + off_x] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

// Same-size cross-correlation with zero padding (no kernel flip). Requires
// odd square kernels and pad == kh/2 so spatial dims are preserved.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int pad) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = weight.value();
  const Tensor<T>& b = bias.value();
  require_shape4(x, "conv2d input");
  require_shape4(wt, "conv2d weight");
  if (b.rank() != 1) throw StructuralError("conv2d bias must be rank 1");
  const int64_t cout = wt.dim(0), cin = wt.dim(1);
  const int kh = static_cast<int>(wt.dim(2)), kw = static_cast<int>(wt.dim(3));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw StructuralError("conv2d kernel extents must be odd");
  if (pad != kh / 2 || pad != kw / 2)
    throw StructuralError("conv2d pad must equal kh/2 and kw/2 for same-size output");
  if (x.dim(1) != cin)
    throw StructuralError("conv2d channel mismatch: input has " +
                          std::to_string(x.dim(1)) + ", weight expects " +
                          std::to_string(cin));
  if (b.dim(0) != cout) throw StructuralError("conv2d bias length != Cout");

  const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
  const int64_t k = cin * kh * kw;
  Tensor<T> out({n, cout, h, w});

  detail::RowMat<T> col(k, hw);
  Eigen::Map<const detail::RowMat<T>> wm(wt.data(), cout, k);
  for (int64_t i = 0; i < n; ++i) {
    detail::im2col(x, i, kh, kw, pad, col);
    Eigen::Map<detail::RowMat<T>> om(&out.at(i, 0, 0, 0), cout, hw);
    om.noalias() = wm * col;
    for (int64_t co = 0; co < cout; ++co) om.row(co).array() += b[co];
  }

  auto backprop = [pad, kh, kw](Node<T>& self) {
    Node<T>& in_node = *self.parents[0];
    Node<T>& w_node = *self.parents[1];
    Node<T>& b_node = *self.parents[2];
    const Tensor<T>& x = in_node.value;
    const Tensor<T>& wt = w_node.value;
    const Tensor<T>& g = self.grad;
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    const int64_t cout = wt.dim(0), k = wt.dim(1) * kh * kw;

    Eigen::Map<const detail::RowMat<T>> wm(wt.data(), cout, k);
    detail::RowMat<T> col(k, hw);
    detail::RowMat<T> colgrad;
    for (int64_t i = 0; i < n; ++i) {
      Eigen::Map<const detail::RowMat<T>> gm(&g.at(i, 0, 0, 0), cout, hw);
      if (w_node.requires_grad || b_node.requires_grad) {
        if (b_node.requires_grad) {
          // Summed by hand in index order: Eigen's redux peels until the data
          // pointer is packet-aligned, so its rounding would depend on where
          // the heap happened to place this gradient buffer.
          Tensor<T>& gb = b_node.ensure_grad();
          for (int64_t co = 0; co < cout; ++co) {
            const T* row = &g.at(i, co, 0, 0);
            T acc = T(0);
            for (int64_t j = 0; j < hw; ++j) acc += row[j];
            gb[co] += acc;
          }
        }
        if (w_node.requires_grad) {
          detail::im2col(x, i, kh, kw, pad, col);
          Eigen::Map<detail::RowMat<T>> gwm(w_node.ensure_grad().data(), cout, k);
          gwm.noalias() += gm * col.transpose();
        }
      }
      if (in_node.requires_grad) {
        colgrad.resize(k, hw);
        colgrad.noalias() = wm.transpose() * gm;
        detail::col2im_add(colgrad, in_node.ensure_grad(), i, kh, kw, pad);
      }
    }
  };

  return detail::make_op_node<T>("conv2d", std::move(out),
                                 {input.node(), weight.node(), bias.node()},
                                 std::move(backprop));
}

// Elementwise max(0, x). Gradient is 0 at x == 0.
template <typename T>
Var<T> relu(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);

  auto backprop = [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor<T>& gi = in.ensure_grad();
    const Tensor<T>& x = in.value;
    const Tensor<T>& g = self.grad;
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i)
      if (x[i] > T(0)) gi[i] += g[i];
  };

  return detail::make_op_node<T>("relu", std::move(out), {input.node()},
                                 std::move(backprop));
}

// Stacks b's channels after a's. Batch and spatial dims must match.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& ta = a.value();
  const Tensor<T>& tb = b.value();
  require_shape4(ta, "concat a");
  require_shape4(tb, "concat b");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
    throw StructuralError("concat_channels batch/spatial mismatch: " +
                          shape_string(ta.shape()) + " vs " + shape_string(tb.shape()));
  const int64_t n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  const int64_t h = ta.dim(2), w = ta.dim(3), plane = h * w;
  Tensor<T> out({n, ca + cb, h, w});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(&out.at(i, 0, 0, 0), &ta.at(i, 0, 0, 0), sizeof(T) * ca * plane);
    if (cb > 0)
      std::memcpy(&out.at(i, ca, 0, 0), &tb.at(i, 0, 0, 0), sizeof(T) * cb * plane);
  }

  auto backprop = [ca, cb, plane](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const int64_t n = g.dim(0);
    Node<T>& na = *self.parents[0];
    Node<T>& nb = *self.parents[1];
    for (int64_t i = 0; i < n; ++i) {
      if (na.requires_grad) {
        Tensor<T>& ga = na.ensure_grad();
        const T* src = &g.at(i, 0, 0, 0);
        T* dst = &ga.at(i, 0, 0, 0);
        for (int64_t j = 0; j < ca * plane; ++j) dst[j] += src[j];
      }
      if (nb.requires_grad && cb > 0) {
        Tensor<T>& gb = nb.ensure_grad();
        const T* src = &g.at(i, ca, 0, 0);
        T* dst = &gb.at(i, 0, 0, 0);
        for (int64_t j = 0; j < cb * plane; ++j) dst[j] += src[j];
      }
    }
  };

  return detail::make_op_node<T>("concat_channels", std::move(out),
                                 {a.node(), b.node()}, std::move(backprop));
}

// Copies channels [c0, c1) into a new tensor.
template <typename T>
Var<T> slice_channels(const Var<T>& input, int64_t c0, int64_t c1) {
  const Tensor<T>& x = input.value();
  require_shape4(x, "slice_channels input");
  if (c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw StructuralError("slice_channels range out of bounds");
  const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;
  const int64_t cs = c1 - c0;
  Tensor<T> out({n, cs, h, w});
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(&out.at(i, 0, 0, 0), &x.at(i, c0, 0, 0), sizeof(T) * cs * plane);

  auto backprop = [c0, cs, plane](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor<T>& gi = in.ensure_grad();
    const Tensor<T>& g = self.grad;
    for (int64_t i = 0; i < g.dim(0); ++i) {
      const T* src = &g.at(i, 0, 0, 0);
      T* dst = &gi.at(i, c0, 0, 0);
      for (int64_t j = 0; j < cs * plane; ++j) dst[j] += src[j];
    }
  };

  return detail::make_op_node<T>("slice_channels", std::move(out), {input.node()},
                                 std::move(backprop));
}

// out(n,c,i,j) = in(n,c,i/s,j/s); the gradient sums each s x s block.
template <typename T>
Var<T> nearest_upsample(const Var<T>& input, int s) {
  const Tensor<T>& x = input.value();
  require_shape4(x, "nearest_upsample input");
  if (s < 1) throw StructuralError("nearest_upsample factor must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({n, c, h * s, w * s});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h * s; ++y) {
        const T* src = &x.at(i, ch, y / s, 0);
        T* dst = &out.at(i, ch, y, 0);
        for (int64_t xx = 0; xx < w * s; ++xx) dst[xx] = src[xx / s];
      }

  auto backprop = [s](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor<T>& gi = in.ensure_grad();
    const Tensor<T>& g = self.grad;
    const int64_t n = gi.dim(0), c = gi.dim(1), h = gi.dim(2), w = gi.dim(3);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h * s; ++y) {
          const T* src = &g.at(i, ch, y, 0);
          T* dst = &gi.at(i, ch, y / s, 0);
          for (int64_t xx = 0; xx < w * s; ++xx) dst[xx / s] += src[xx];
        }
  };

  return detail::make_op_node<T>("nearest_upsample", std::move(out),
                                 {input.node()}, std::move(backprop));
}

// Raw subpixel rearrangement [N, C*s^2, H, W] -> [N, C, H*s, W*s] with
// out(n,c,y,x) = in(n, c*s^2 + (y%s)*s + (x%s), y/s, x/s).
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, int s) {
  const int64_t n = x.dim(0), cs2 = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t c = cs2 / (int64_t(s) * s);
  Tensor<T> out({n, c, h * s, w * s});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h * s; ++y) {
        T* dst = &out.at(i, ch, y, 0);
        const int64_t sy = y % s, iy = y / s;
        for (int64_t x2 = 0; x2 < w * s; ++x2)
          dst[x2] = x.at(i, ch * s * s + sy * s + (x2 % s), iy, x2 / s);
      }
  return out;
}

// Inverse permutation of depth_to_space.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, int s) {
  const int64_t n = x.dim(0), c = x.dim(1), hs = x.dim(2), ws = x.dim(3);
  if (hs % s != 0 || ws % s != 0)
    throw StructuralError("space_to_depth needs spatial dims divisible by s");
  Tensor<T> out({n, c * s * s, hs / s, ws / s});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < hs; ++y) {
        const T* src = &x.at(i, ch, y, 0);
        const int64_t sy = y % s, oy = y / s;
        for (int64_t x2 = 0; x2 < ws; ++x2)
          out.at(i, ch * s * s + sy * s + (x2 % s), oy, x2 / s) = src[x2];
      }
  return out;
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, int s) {
  const Tensor<T>& x = input.value();
  require_shape4(x, "pixel_shuffle input");
  if (s < 1) throw StructuralError("pixel_shuffle factor must be >= 1");
  if (x.dim(1) % (int64_t(s) * s) != 0)
    throw StructuralError("pixel_shuffle: " + std::to_string(x.dim(1)) +
                          " channels not divisible by s^2 = " + std::to_string(s * s));
  Tensor<T> out = depth_to_space(x, s);

  auto backprop = [s](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    if (!in.requires_grad) return;
    in.accumulate(space_to_depth(self.grad, s));
  };

  return detail::make_op_node<T>("pixel_shuffle", std::move(out), {input.node()},
                                 std::move(backprop));
}

// Mean absolute error over all elements; scalar result. The subgradient at
// zero difference is taken as 0.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  const Tensor<T>& p = pred.value();
  const Tensor<T>& t = target.value();
  if (!p.same_shape(t))
    throw StructuralError("l1_loss shape mismatch: " + shape_string(p.shape()) +
                          " vs " + shape_string(t.shape()));
  const int64_t n = p.numel();
  if (n == 0) throw StructuralError("l1_loss on empty tensors");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(double(p[i]) - double(t[i]));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / double(n)));

  auto backprop = [](Node<T>& self) {
    Node<T>& pn = *self.parents[0];
    Node<T>& tn = *self.parents[1];
    const Tensor<T>& p = pn.value;
    const Tensor<T>& t = tn.value;
    const int64_t n = p.numel();
    const T g = self.grad[0] / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) {
      const T d = p[i] - t[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (pn.requires_grad) pn.ensure_grad()[i] += sg;
      if (tn.requires_grad) tn.ensure_grad()[i] -= sg;
    }
  };

  return detail::make_op_node<T>("l1_loss", std::move(out),
                                 {pred.node(), target.node()}, std::move(backprop));
}

// Elementwise sum of two same-shape tensors.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& ta = a.value();
  const Tensor<T>& tb = b.value();
  if (!ta.same_shape(tb))
    throw StructuralError("add shape mismatch: " + shape_string(ta.shape()) +
                          " vs " + shape_string(tb.shape()));
  Tensor<T> out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] + tb[i];

  auto backprop = [](Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      Node<T>& p = *self.parents[k];
      if (p.requires_grad) p.accumulate(self.grad);
    }
  };

  return detail::make_op_node<T>("add", std::move(out), {a.node(), b.node()},
                                 std::move(backprop));
}

// Fixed-weight scalar projection sum(x * w); used to scalarize outputs for
// gradient checks. w is a constant, not a graph input.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, Tensor<T> weights) {
  const Tensor<T>& t = x.value();
  if (!t.same_shape(weights))
    throw StructuralError("weighted_sum shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += double(t[i]) * double(weights[i]);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));

  auto w = std::make_shared<Tensor<T>>(std::move(weights));
  auto backprop = [w](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor<T>& gi = in.ensure_grad();
    const T g = self.grad[0];
    for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += g * (*w)[i];
  };

  return detail::make_op_node<T>("weighted_sum", std::move(out), {x.node()},
                                 std::move(backprop));
}

}  // namespace dair

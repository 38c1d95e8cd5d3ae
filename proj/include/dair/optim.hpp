#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/rng.hpp"
#include "dair/tensor.hpp"

namespace dair {

// Uniform samples on (-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_init(const std::vector<int64_t>& shape, int64_t fan_in,
                      int64_t fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0)
    throw StructuralError("glorot_init requires positive fans");
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-a, a));
  return t;
}

// For conv weights [Cout, Cin, kh, kw] the fans are channels times the
// receptive-field area.
template <typename T>
Tensor<T> glorot_conv_init(const std::vector<int64_t>& shape, Rng& rng) {
  if (shape.size() != 4) throw StructuralError("glorot_conv_init expects rank-4 shape");
  const int64_t area = shape[2] * shape[3];
  return glorot_init<T>(shape, shape[1] * area, shape[0] * area, rng);
}

// Piecewise-constant halving schedule.
inline double lr_at(int64_t step, double lr0, int64_t halving_interval) {
  if (step < 0 || halving_interval <= 0)
    throw StructuralError("lr_at requires step >= 0 and a positive interval");
  return lr0 * std::pow(0.5, double(step / halving_interval));
}

// First/second moment estimates, one pair per distinct parameter tensor.
// Aliased logical stages share one parameter entry, so they are updated once.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t t = 0;

  static AdamState zeros_like(const std::vector<Var<T>>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.emplace_back(p.value().shape());
      st.v.emplace_back(p.value().shape());
    }
    return st;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over all parameters. Parameters without an
// accumulated gradient are treated as zero-gradient (moments decay, value
// moves only by the stale-moment term, which is the standard behaviour).
template <typename T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw StructuralError("adam_step state/parameter count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& th = params[i].mutable_value();
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    const bool has = params[i].has_grad();
    const Tensor<T>* g = has ? &params[i].node()->grad : nullptr;
    if (has && !g->all_finite())
      throw NumericError("non-finite gradient in parameter " + std::to_string(i));
    for (int64_t j = 0; j < th.numel(); ++j) {
      const double gj = has ? double((*g)[j]) : 0.0;
      const double mj = cfg.beta1 * double(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * double(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      th[j] = static_cast<T>(double(th[j]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace dair

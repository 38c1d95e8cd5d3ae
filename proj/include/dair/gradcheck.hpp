#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/tensor.hpp"

namespace dair {

// Central-difference verification of the reverse-mode pass. The callable
// rebuilds a scalar graph from the CURRENT values of the supplied leaves, so
// it is invoked once for the analytic gradient and twice per coordinate for
// the numeric probes. Run with T = double; at 32 bits the difference
// quotient drowns in rounding noise. Returns the worst relative error
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T, typename BuildFn>
double grad_check(BuildFn&& build, std::vector<Var<T>> leaves, double eps = 1e-5) {
  for (auto& leaf : leaves)
    if (!leaf.requires_grad())
      throw StructuralError("grad_check leaves must require gradients");

  Var<T> loss = build();
  if (loss.value().numel() != 1)
    throw StructuralError("grad_check objective must be a scalar");
  for (auto& leaf : leaves) leaf.clear_grad();
  backward(loss);

  std::vector<Tensor<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves)
    analytic.push_back(leaf.has_grad() ? leaf.grad()
                                       : Tensor<T>(leaf.value().shape()));

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<T>& v = leaves[li].mutable_value();
    for (int64_t i = 0; i < v.numel(); ++i) {
      const T keep = v[i];
      v[i] = keep + static_cast<T>(eps);
      const double up = static_cast<double>(build().value()[0]);
      v[i] = keep - static_cast<T>(eps);
      const double dn = static_cast<double>(build().value()[0]);
      v[i] = keep;
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = static_cast<double>(analytic[li][i]);
      const double err =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dair

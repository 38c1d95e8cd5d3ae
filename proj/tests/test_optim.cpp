#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/ops.hpp"
#include "dair/optim.hpp"
#include "dair/rng.hpp"
#include "dair/tensor.hpp"

using namespace dair;

namespace {

// Scalar reference Adam, one coordinate at a time. Kept separate from the
// production loop so the two cannot share a mistake.
struct RefAdam {
  double m = 0.0, v = 0.0;
  int64_t t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9,
              double b2 = 0.999, double eps = 1e-8) {
    t += 1;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, double(t)));
    const double vhat = v / (1 - std::pow(b2, double(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("glorot samples stay inside the fan bound", "[optim]") {
  Rng rng(7);
  const double a = std::sqrt(6.0 / 1152.0);  // 64->64 channels, 3x3 kernel
  Tensor<float> w = glorot_conv_init<float>({64, 64, 3, 3}, rng);
  REQUIRE(w.numel() == 36864);
  double mean = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) {
    REQUIRE(w[i] > -a);
    REQUIRE(w[i] < a);
    mean += w[i];
  }
  mean /= double(w.numel());
  // symmetric distribution: empirical mean well under a few percent of a
  REQUIRE(std::abs(mean) < 0.01 * a);
}

TEST_CASE("glorot is seed deterministic and validates fans", "[optim]") {
  Rng a(11), b(11);
  Tensor<float> wa = glorot_conv_init<float>({8, 4, 3, 3}, a);
  Tensor<float> wb = glorot_conv_init<float>({8, 4, 3, 3}, b);
  for (int64_t i = 0; i < wa.numel(); ++i) REQUIRE(wa[i] == wb[i]);

  Rng c(1);
  REQUIRE_THROWS_AS(glorot_init<float>({4}, 0, 4, c), StructuralError);
  REQUIRE_THROWS_AS(glorot_conv_init<float>({4, 4}, c), StructuralError);
}

TEST_CASE("learning-rate schedule halves at fixed intervals", "[optim]") {
  REQUIRE(lr_at(0, 1e-4, 50000) == 1e-4);
  REQUIRE(lr_at(49999, 1e-4, 50000) == 1e-4);
  REQUIRE(lr_at(50000, 1e-4, 50000) == 5e-5);
  REQUIRE(lr_at(99999, 1e-4, 50000) == 5e-5);
  REQUIRE(lr_at(100000, 1e-4, 50000) == 2.5e-5);
  REQUIRE(lr_at(199999, 1e-4, 50000) == 1.25e-5);

  double prev = lr_at(0, 1e-4, 50000);
  for (int64_t s = 1; s < 200000; s += 997) {
    const double cur = lr_at(s, 1e-4, 50000);
    REQUIRE(cur <= prev);
    prev = cur;
  }
  REQUIRE_THROWS_AS(lr_at(-1, 1e-4, 1), StructuralError);
  REQUIRE_THROWS_AS(lr_at(0, 1e-4, 0), StructuralError);
}

TEST_CASE("first adam step moves by almost exactly lr", "[optim]") {
  Var<double> theta(Tensor<double>::scalar(1.0), true);
  backward(theta);  // gradient 1
  std::vector<Var<double>> params{theta};
  AdamState<double> st = AdamState<double>::zeros_like(params);
  adam_step(params, st, 1e-4);
  // bias correction makes the first step lr / (1 + eps)
  const double expect = 1.0 - 1e-4 / (1.0 + 1e-8);
  REQUIRE_THAT(theta.value()[0], Catch::Matchers::WithinAbs(expect, 1e-15));
  REQUIRE(st.t == 1);
}

TEST_CASE("adam matches the scalar reference over many steps", "[optim]") {
  Rng rng(13);
  const int64_t n = 6;
  Tensor<double> init({n});
  for (int64_t i = 0; i < n; ++i) init[i] = rng.uniform(-1, 1);
  Var<double> x(init, true);
  std::vector<Var<double>> params{x};
  AdamState<double> st = AdamState<double>::zeros_like(params);

  std::vector<RefAdam> ref(n);
  std::vector<double> ref_theta(n);
  for (int64_t i = 0; i < n; ++i) ref_theta[i] = init[i];

  for (int step = 0; step < 25; ++step) {
    Tensor<double> g({n});
    for (int64_t i = 0; i < n; ++i) g[i] = rng.uniform(-2, 2);
    x.clear_grad();
    x.node()->accumulate(g);
    const double lr = lr_at(step, 1e-3, 10);
    adam_step(params, st, lr);
    for (int64_t i = 0; i < n; ++i) {
      ref_theta[i] = ref[i].step(ref_theta[i], g[i], lr);
      REQUIRE_THAT(x.value()[i], Catch::Matchers::WithinAbs(ref_theta[i], 1e-7));
    }
  }
}

TEST_CASE("missing gradients leave parameters in place on step one", "[optim]") {
  Var<float> x(Tensor<float>::full({3}, 2.0f), true);
  std::vector<Var<float>> params{x};
  AdamState<float> st = AdamState<float>::zeros_like(params);
  adam_step(params, st, 1e-2);
  REQUIRE(st.t == 1);
  for (int64_t i = 0; i < 3; ++i) REQUIRE(x.value()[i] == 2.0f);
}

TEST_CASE("update magnitude is bounded by the learning rate scale", "[optim]") {
  // With bias correction, |step| <= lr * mhat/sqrt(vhat) and the ratio is
  // bounded near 1 for a constant gradient.
  Var<double> x(Tensor<double>::scalar(0.0), true);
  std::vector<Var<double>> params{x};
  AdamState<double> st = AdamState<double>::zeros_like(params);
  double prev = 0.0;
  for (int step = 0; step < 50; ++step) {
    x.clear_grad();
    x.node()->accumulate(Tensor<double>::scalar(3.7));
    adam_step(params, st, 1e-3);
    const double moved = std::abs(x.value()[0] - prev);
    REQUIRE(moved <= 1e-3 * (1.0 + 1e-6));
    prev = x.value()[0];
  }
}

TEST_CASE("first-step direction is invariant to gradient scale", "[optim]") {
  auto one_step = [](double g) {
    Var<double> x(Tensor<double>::scalar(0.0), true);
    std::vector<Var<double>> params{x};
    AdamState<double> st = AdamState<double>::zeros_like(params);
    x.node()->accumulate(Tensor<double>::scalar(g));
    adam_step(params, st, 1e-4);
    return x.value()[0];
  };
  const double small = one_step(1e-3);
  const double big = one_step(1e3);
  REQUIRE(small < 0.0);
  REQUIRE(big < 0.0);
  REQUIRE_THAT(big / small, Catch::Matchers::WithinAbs(1.0, 1e-4));
}

TEST_CASE("structurally aliased parameters update exactly once", "[optim]") {
  // One tensor referenced twice in the graph: the gradient arrives summed,
  // the parameter list holds a single entry, and one step applies one update.
  Var<double> x(Tensor<double>::full({2}, 1.0), true);
  Var<double> y = add(x, x);
  backward(weighted_sum(y, Tensor<double>::full({2}, 1.0)));
  REQUIRE(x.grad()[0] == 2.0);

  std::vector<Var<double>> params{x};
  AdamState<double> st = AdamState<double>::zeros_like(params);
  adam_step(params, st, 1e-4);

  RefAdam ref;
  const double expect = ref.step(1.0, 2.0, 1e-4);
  REQUIRE_THAT(x.value()[0], Catch::Matchers::WithinAbs(expect, 1e-12));
  REQUIRE_THAT(x.value()[1], Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("non-finite gradients raise a numeric fault", "[optim]") {
  Var<float> x(Tensor<float>::full({2}, 1.0f), true);
  Tensor<float> g({2});
  g[0] = std::numeric_limits<float>::quiet_NaN();
  x.node()->accumulate(g);
  std::vector<Var<float>> params{x};
  AdamState<float> st = AdamState<float>::zeros_like(params);
  REQUIRE_THROWS_AS(adam_step(params, st, 1e-4), NumericError);
}

TEST_CASE("state size must match the parameter list", "[optim]") {
  Var<float> x(Tensor<float>::full({2}, 1.0f), true);
  std::vector<Var<float>> params{x};
  AdamState<float> st;  // empty
  REQUIRE_THROWS_AS(adam_step(params, st, 1e-4), StructuralError);
}

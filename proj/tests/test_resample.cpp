#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/ops.hpp"
#include "dair/resample.hpp"
#include "dair/rng.hpp"
#include "dair/tensor.hpp"

using namespace dair;

namespace {

Tensor<float> random_tensor(Rng& rng, std::vector<int64_t> shape,
                            double lo = -1.0, double hi = 1.0) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

int64_t clamp_i(int64_t v, int64_t n) { return std::min(std::max<int64_t>(v, 0), n - 1); }

// Literal per-pixel evaluation of the operator definition, one output pixel
// at a time. Shares nothing with the production loops.
Tensor<float> resample_oracle(const Tensor<float>& src, const Tensor<float>& fld,
                              int f, int s) {
  const int64_t n = src.dim(0), c = src.dim(1), h = src.dim(2), w = src.dim(3);
  const int64_t half = f / 2;
  Tensor<float> out({n, c, h, w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int64_t k1 = 0; k1 < f; ++k1)
            for (int64_t k2 = 0; k2 < f; ++k2) {
              const int64_t sy = clamp_i(i + s * (k1 - half), h);
              const int64_t sx = clamp_i(j + s * (k2 - half), w);
              acc += double(fld.at(ni, k1 * f + k2, i, j)) *
                     double(src.at(ni, ci, sy, sx));
            }
          out.at(ni, ci, i, j) = static_cast<float>(acc);
        }
  return out;
}

Tensor<float> delta_field(int64_t n, int f, int64_t h, int64_t w) {
  Tensor<float> fld({n, int64_t(f) * f, h, w});
  const int64_t center = (int64_t(f) * f) / 2;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        fld.at(ni, center, i, j) = 1.0f;
  return fld;
}

}  // namespace

TEST_CASE("adaptive_resample matches the per-pixel oracle", "[resample]") {
  Rng rng(2024);
  // 50 random configurations spanning small sizes, both kernel extents, and
  // every dilation the toolkit uses.
  const int fs[] = {3, 5};
  const int ss[] = {1, 2, 3, 4};
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t h = 4 + rng.uniform_int(9);
    const int64_t w = 4 + rng.uniform_int(9);
    const int f = fs[rng.uniform_int(2)];
    const int s = ss[rng.uniform_int(4)];
    const int64_t n = 1 + rng.uniform_int(2);
    const int64_t c = 1 + rng.uniform_int(2);
    Tensor<float> src = random_tensor(rng, {n, c, h, w});
    Tensor<float> fld = random_tensor(rng, {n, int64_t(f) * f, h, w});

    KernelField<float> field{Var<float>(fld), f, s};
    Tensor<float> got = adaptive_resample(Var<float>(src), field).value();
    Tensor<float> want = resample_oracle(src, fld, f, s);
    REQUIRE(got.same_shape(want));
    double worst = 0.0;
    for (int64_t i = 0; i < want.numel(); ++i)
      worst = std::max(worst, std::abs(double(got[i]) - double(want[i])));
    INFO("trial " << trial << " h=" << h << " w=" << w << " f=" << f << " s=" << s);
    REQUIRE(worst <= 1e-6);
  }
}

TEST_CASE("a delta field reproduces the source exactly", "[resample]") {
  Rng rng(7);
  for (int s : {1, 2, 3}) {
    Tensor<float> src = random_tensor(rng, {1, 2, 6, 6});
    KernelField<float> field{Var<float>(delta_field(1, 3, 6, 6)), 3, s};
    Tensor<float> out = adaptive_resample(Var<float>(src), field).value();
    for (int64_t i = 0; i < src.numel(); ++i) REQUIRE(out[i] == src[i]);
  }
}

TEST_CASE("constant sources factor into the kernel tap sum", "[resample]") {
  Rng rng(11);
  const float cval = 0.37f;
  Tensor<float> src = Tensor<float>::full({1, 1, 5, 5}, cval);
  Tensor<float> fld = random_tensor(rng, {1, 9, 5, 5});
  KernelField<float> field{Var<float>(fld), 3, 2};
  Tensor<float> out = adaptive_resample(Var<float>(src), field).value();
  // every tap reads the same constant, clamped or not
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 5; ++j) {
      double tapsum = 0.0;
      for (int64_t k = 0; k < 9; ++k) tapsum += fld.at(0, k, i, j);
      REQUIRE_THAT(out.at(0, 0, i, j),
                   Catch::Matchers::WithinAbs(cval * tapsum, 1e-5));
    }
}

TEST_CASE("resampling is linear in source and in field", "[resample]") {
  Rng rng(13);
  Tensor<float> s1 = random_tensor(rng, {1, 1, 6, 6});
  Tensor<float> s2 = random_tensor(rng, {1, 1, 6, 6});
  Tensor<float> fld = random_tensor(rng, {1, 9, 6, 6});
  const float a = 1.7f, b = -0.4f;

  Tensor<float> mix({1, 1, 6, 6});
  for (int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * s1[i] + b * s2[i];

  KernelField<float> field{Var<float>(fld), 3, 2};
  Tensor<float> y1 = adaptive_resample(Var<float>(s1), field).value();
  Tensor<float> y2 = adaptive_resample(Var<float>(s2), field).value();
  Tensor<float> ym = adaptive_resample(Var<float>(mix), field).value();
  for (int64_t i = 0; i < ym.numel(); ++i)
    REQUIRE_THAT(ym[i], Catch::Matchers::WithinAbs(a * y1[i] + b * y2[i], 1e-5));

  // field linearity: scale the field, output scales
  Tensor<float> fld2(fld.shape());
  for (int64_t i = 0; i < fld.numel(); ++i) fld2[i] = 2.5f * fld[i];
  KernelField<float> fieldx{Var<float>(fld2), 3, 2};
  Tensor<float> yx = adaptive_resample(Var<float>(s1), fieldx).value();
  for (int64_t i = 0; i < yx.numel(); ++i)
    REQUIRE_THAT(yx[i], Catch::Matchers::WithinAbs(2.5f * y1[i], 1e-5));
}

TEST_CASE("single-interval ASP equals plain resampling bitwise", "[resample]") {
  Rng rng(29);
  Tensor<float> src = random_tensor(rng, {1, 1, 7, 7});
  Tensor<float> fld = random_tensor(rng, {1, 9, 7, 7});
  for (int s : {1, 2, 3}) {
    KernelField<float> field{Var<float>(fld), 3, s};
    Tensor<float> plain = adaptive_resample(Var<float>(src), field).value();
    Tensor<float> asp =
        adaptive_resample_asp(Var<float>(src), field, IntervalSet{{s}}).value();
    for (int64_t i = 0; i < plain.numel(); ++i) REQUIRE(asp[i] == plain[i]);
  }
}

TEST_CASE("multi-interval ASP sums the per-interval oracle", "[resample]") {
  Rng rng(31);
  Tensor<float> src = random_tensor(rng, {1, 1, 8, 8});
  Tensor<float> fld = random_tensor(rng, {1, 25, 8, 8});
  KernelField<float> field{Var<float>(fld), 5, 2};
  Tensor<float> got =
      adaptive_resample_asp(Var<float>(src), field, IntervalSet{{2, 4}}).value();
  Tensor<float> o2 = resample_oracle(src, fld, 5, 2);
  Tensor<float> o4 = resample_oracle(src, fld, 5, 4);
  for (int64_t i = 0; i < got.numel(); ++i)
    REQUIRE_THAT(got[i], Catch::Matchers::WithinAbs(o2[i] + o4[i], 1e-5));
}

TEST_CASE("interval sets must be strictly increasing and positive", "[resample]") {
  REQUIRE_THROWS_AS((IntervalSet{{2, 2}}.validate()), StructuralError);
  REQUIRE_THROWS_AS((IntervalSet{{4, 2}}.validate()), StructuralError);
  REQUIRE_THROWS_AS((IntervalSet{{0, 2}}.validate()), StructuralError);
  REQUIRE_THROWS_AS((IntervalSet{{}}.validate()), StructuralError);
  REQUIRE_NOTHROW(IntervalSet{{1, 2, 4}}.validate());
}

TEST_CASE("interior pixels with dilation s gather the decimated grid", "[resample]") {
  // When the source is a nearest-neighbor upsample of a low-res image and
  // every tap lands in range, the dilated taps read exactly the original
  // low-res neighbors.
  Rng rng(37);
  const int s = 2, f = 3;
  Tensor<float> lr = random_tensor(rng, {1, 1, 6, 6});
  Tensor<float> src = nearest_upsample(Var<float>(lr), s).value();
  Tensor<float> fld = random_tensor(rng, {1, 9, 12, 12});
  KernelField<float> field{Var<float>(fld), f, s};
  Tensor<float> out = adaptive_resample(Var<float>(src), field).value();

  for (int64_t i = s; i < 12 - s; ++i)
    for (int64_t j = s; j < 12 - s; ++j) {
      double want = 0.0;
      for (int64_t k1 = 0; k1 < f; ++k1)
        for (int64_t k2 = 0; k2 < f; ++k2)
          want += double(fld.at(0, k1 * f + k2, i, j)) *
                  double(lr.at(0, 0, i / s + k1 - 1, j / s + k2 - 1));
      REQUIRE_THAT(out.at(0, 0, i, j), Catch::Matchers::WithinAbs(want, 1e-5));
    }
}

TEST_CASE("source gradient counts tap visits under clamping", "[resample]") {
  // With a uniform field of value v and an all-ones upstream, the gradient at
  // a source pixel is v times the number of (output, tap) pairs that read it.
  const int f = 3, s = 2;
  const int64_t h = 5, w = 4;
  const float v = 0.6f;
  Tensor<float> src({1, 1, h, w});
  Tensor<float> fld = Tensor<float>::full({1, 9, h, w}, v);
  Tensor<float> up = Tensor<float>::full({1, 1, h, w}, 1.0f);

  auto [gsrc, gfld] = resample_backward(up, src, fld, f, s);

  Tensor<float> counts({1, 1, h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      for (int64_t k1 = 0; k1 < f; ++k1)
        for (int64_t k2 = 0; k2 < f; ++k2) {
          const int64_t sy = clamp_i(i + s * (k1 - 1), h);
          const int64_t sx = clamp_i(j + s * (k2 - 1), w);
          counts.at(0, 0, sy, sx) += 1.0f;
        }
  for (int64_t i = 0; i < counts.numel(); ++i)
    REQUIRE_THAT(gsrc[i], Catch::Matchers::WithinAbs(v * counts[i], 1e-5));
}

TEST_CASE("field gradient gathers clamped source taps", "[resample]") {
  Rng rng(41);
  const int f = 3, s = 3;
  const int64_t h = 6, w = 6;
  Tensor<float> src = random_tensor(rng, {1, 2, h, w});
  Tensor<float> fld = random_tensor(rng, {1, 9, h, w});
  Tensor<float> up = random_tensor(rng, {1, 2, h, w});

  auto [gsrc, gfld] = resample_backward(up, src, fld, f, s);

  // d out(n,c,i,j) / d fld(n,k,i,j) = src at the clamped tap, summed over c.
  for (int64_t k1 = 0; k1 < f; ++k1)
    for (int64_t k2 = 0; k2 < f; ++k2)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const int64_t sy = clamp_i(i + s * (k1 - 1), h);
          const int64_t sx = clamp_i(j + s * (k2 - 1), w);
          double want = 0.0;
          for (int64_t c = 0; c < 2; ++c)
            want += double(up.at(0, c, i, j)) * double(src.at(0, c, sy, sx));
          REQUIRE_THAT(gfld.at(0, k1 * f + k2, i, j),
                       Catch::Matchers::WithinAbs(want, 1e-5));
        }
}

TEST_CASE("delta-field source gradient is the upstream itself", "[resample]") {
  Rng rng(43);
  Tensor<float> src = random_tensor(rng, {1, 1, 5, 5});
  Tensor<float> up = random_tensor(rng, {1, 1, 5, 5});
  auto [gsrc, gfld] = resample_backward(up, src, delta_field(1, 3, 5, 5), 3, 1);
  for (int64_t i = 0; i < up.numel(); ++i) REQUIRE(gsrc[i] == up[i]);
}

TEST_CASE("resample validates arguments", "[resample]") {
  Tensor<float> src({1, 1, 4, 4});
  // field spatial size must match the source
  KernelField<float> bad1{Var<float>(Tensor<float>({1, 9, 5, 4})), 3, 1};
  REQUIRE_THROWS_AS(adaptive_resample(Var<float>(src), bad1), StructuralError);
  // channel count must be f^2
  KernelField<float> bad2{Var<float>(Tensor<float>({1, 8, 4, 4})), 3, 1};
  REQUIRE_THROWS_AS(adaptive_resample(Var<float>(src), bad2), StructuralError);
  // even f rejected
  KernelField<float> bad3{Var<float>(Tensor<float>({1, 4, 4, 4})), 2, 1};
  REQUIRE_THROWS_AS(adaptive_resample(Var<float>(src), bad3), StructuralError);
  // batch mismatch
  KernelField<float> bad4{Var<float>(Tensor<float>({2, 9, 4, 4})), 3, 1};
  REQUIRE_THROWS_AS(adaptive_resample(Var<float>(src), bad4), StructuralError);
}

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dair/autodiff.hpp"
#include "dair/common.hpp"
#include "dair/config.hpp"
#include "dair/ops.hpp"
#include "dair/optim.hpp"
#include "dair/resample.hpp"
#include "dair/rng.hpp"

// Architecture variants. All of them predict per-pixel interpolation kernels
// with a small conv trunk and apply them through adaptive_resample; the
// exceptions are the plain FCN baseline (predicts pixels directly) and the
// guidance-conditioned variant (trunk sees depth + RGB at full resolution).

namespace dair {

enum class Variant { dair, fcn_baseline, dair_asp, recur, prog4x, joint };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::dair: return "dair";
    case Variant::fcn_baseline: return "fcn-baseline";
    case Variant::dair_asp: return "dair-asp";
    case Variant::recur: return "recur";
    case Variant::prog4x: return "prog4x";
    case Variant::joint: return "joint";
  }
  throw StructuralError("unreachable variant");
}

inline Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::dair, Variant::fcn_baseline, Variant::dair_asp,
                    Variant::recur, Variant::prog4x, Variant::joint})
    if (variant_name(v) == s) return v;
  throw FormatError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::dair;
  int depth = 10;     // trunk convs per kernel-estimation block
  int channels = 64;  // trunk width
  int f = 5;          // kernel extent
  int s = 2;          // upscaling factor
  int recursions = 0; // refinement applications (recur only)
  std::vector<int> asp_intervals;  // empty means default {s, 2s} for dair-asp
  int input_channels = 1;
  bool asp_shared_field = true;  // false: head predicts one field per interval

  bool is_sr_variant() const { return variant != Variant::joint; }

  IntervalSet intervals() const {
    if (!asp_intervals.empty()) return IntervalSet{asp_intervals};
    return IntervalSet{{s, 2 * s}};
  }

  void validate() const {
    if (depth < 2) throw StructuralError("model depth must be >= 2");
    if (channels < 1) throw StructuralError("model channels must be >= 1");
    if (f < 1 || f % 2 == 0) throw StructuralError("kernel extent f must be odd");
    if (variant == Variant::joint) {
      if (s < 2) throw StructuralError("joint variant needs s >= 2");
      if (input_channels != 4)
        throw StructuralError("joint variant needs input-channels = 4");
    } else {
      if (s < 2 || s > 4)
        throw StructuralError("s must be in {2,3,4} for SR variants");
      if (input_channels != 1)
        throw StructuralError("SR variants need input-channels = 1");
    }
    if (variant == Variant::prog4x && s != 4)
      throw StructuralError("prog4x requires s = 4");
    if (variant == Variant::recur && recursions < 1)
      throw StructuralError("recur requires recursions >= 1");
    if (variant == Variant::dair_asp) intervals().validate();
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.emplace_back("variant", variant_name(variant));
    kv.emplace_back("depth", std::to_string(depth));
    kv.emplace_back("channels", std::to_string(channels));
    kv.emplace_back("f", std::to_string(f));
    kv.emplace_back("s", std::to_string(s));
    kv.emplace_back("recursions", std::to_string(recursions));
    if (!asp_intervals.empty())
      kv.emplace_back("asp-intervals", format_int_list(asp_intervals));
    kv.emplace_back("input-channels", std::to_string(input_channels));
    kv.emplace_back("asp-shared-field", asp_shared_field ? "true" : "false");
    return kv;
  }

  // Consumes the keys it understands; leftovers go to `rest` if given,
  // otherwise an unknown key is an error.
  static ModelConfig from_key_values(const KeyValues& kv, KeyValues* rest = nullptr) {
    ModelConfig c;
    for (const auto& [key, value] : kv) {
      if (key == "variant") c.variant = variant_from_name(value);
      else if (key == "depth") c.depth = int(parse_int(key, value));
      else if (key == "channels") c.channels = int(parse_int(key, value));
      else if (key == "f") c.f = int(parse_int(key, value));
      else if (key == "s") c.s = int(parse_int(key, value));
      else if (key == "recursions") c.recursions = int(parse_int(key, value));
      else if (key == "asp-intervals") c.asp_intervals = parse_int_list(key, value);
      else if (key == "input-channels") c.input_channels = int(parse_int(key, value));
      else if (key == "asp-shared-field") {
        if (value != "true" && value != "false")
          throw FormatError("asp-shared-field expects true or false");
        c.asp_shared_field = value == "true";
      } else if (rest) rest->emplace_back(key, value);
      else throw FormatError("unknown model config key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<NamedParam<T>> params;  // distinct tensors only; aliased stages
                                      // reuse these entries by name

  const Var<T>& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p.var;
    throw StructuralError("model has no parameter named '" + name + "'");
  }

  std::vector<Var<T>> param_vars() const {
    std::vector<Var<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.var);
    return out;
  }

  void clear_grads() const {
    for (const auto& p : params) p.var.clear_grad();
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.var.value().numel();
    return n;
  }
};

namespace detail {

template <typename T>
void add_conv(Model<T>& m, const std::string& prefix, int64_t cout, int64_t cin,
              Rng& rng) {
  Tensor<T> w = glorot_conv_init<T>({cout, cin, 3, 3}, rng);
  m.params.push_back({prefix + ".weight", Var<T>(std::move(w), true)});
  m.params.push_back({prefix + ".bias", Var<T>(Tensor<T>({cout}), true)});
}

// The field head starts with zero weights and a bias encoding a center-delta
// kernel, so an untrained model reproduces nearest-neighbor upsampling
// exactly. With several field blocks only the first one carries the delta;
// `scale` spreads it across intervals that share one field.
template <typename T>
void add_field_head(Model<T>& m, const std::string& prefix, int64_t cin, int f,
                    int fields, T scale = T(1)) {
  const int64_t f2 = int64_t(f) * f;
  Tensor<T> w({fields * f2, cin, 3, 3});
  Tensor<T> b({fields * f2});
  b[f2 / 2] = scale;
  m.params.push_back({prefix + ".weight", Var<T>(std::move(w), true)});
  m.params.push_back({prefix + ".bias", Var<T>(std::move(b), true)});
}

// Trunk + expand + subpixel + field head, the kernel-estimation block that
// runs at LR resolution. `fields` > 1 packs several f^2 field blocks.
template <typename T>
void add_kernel_block_lr(Model<T>& m, const std::string& prefix, int in_ch,
                         const ModelConfig& c, int block_s, int fields, Rng& rng,
                         T head_scale = T(1)) {
  add_conv(m, prefix + "trunk0", c.channels, in_ch, rng);
  for (int i = 1; i < c.depth; ++i)
    add_conv(m, prefix + "trunk" + std::to_string(i), c.channels, c.channels, rng);
  add_conv(m, prefix + "expand", int64_t(c.channels) * block_s * block_s,
           c.channels, rng);
  add_field_head(m, prefix + "head", c.channels, c.f, fields, head_scale);
}

// Trunk + field head at full resolution (no subpixel layer).
template <typename T>
void add_kernel_block_hr(Model<T>& m, const std::string& prefix, int in_ch,
                         const ModelConfig& c, Rng& rng) {
  add_conv(m, prefix + "trunk0", c.channels, in_ch, rng);
  for (int i = 1; i < c.depth; ++i)
    add_conv(m, prefix + "trunk" + std::to_string(i), c.channels, c.channels, rng);
  add_field_head(m, prefix + "head", c.channels, c.f, 1);
}

template <typename T>
Var<T> run_conv(const Model<T>& m, const std::string& prefix, const Var<T>& x) {
  return conv2d(x, m.param(prefix + ".weight"), m.param(prefix + ".bias"), 1);
}

template <typename T>
Var<T> run_trunk(const Model<T>& m, const std::string& prefix, Var<T> x) {
  for (int i = 0; i < m.config.depth; ++i)
    x = relu(run_conv(m, prefix + "trunk" + std::to_string(i), x));
  return x;
}

// LR kernel-estimation block: returns the field values at block_s times the
// input resolution.
template <typename T>
Var<T> run_kernel_block_lr(const Model<T>& m, const std::string& prefix,
                           const Var<T>& x, int block_s) {
  Var<T> t = run_trunk(m, prefix, x);
  Var<T> e = relu(run_conv(m, prefix + "expand", t));
  Var<T> u = pixel_shuffle(e, block_s);
  return run_conv(m, prefix + "head", u);
}

template <typename T>
Var<T> run_kernel_block_hr(const Model<T>& m, const std::string& prefix,
                           const Var<T>& x) {
  return run_conv(m, prefix + "head", run_trunk(m, prefix, x));
}

}  // namespace detail

template <typename T>
Model<T> build_dair(const ModelConfig& c, Rng& rng) {
  if (c.variant != Variant::dair && c.variant != Variant::dair_asp)
    throw StructuralError("build_dair expects variant dair or dair-asp");
  c.validate();
  Model<T> m{c, {}};
  const int n_intervals = int(c.intervals().intervals.size());
  const bool shared = c.variant != Variant::dair_asp || c.asp_shared_field;
  const int fields = shared ? 1 : n_intervals;
  // A shared field is re-applied once per interval, so the delta bias must be
  // split across them to keep the untrained output equal to the NN upsample.
  const T head_scale = c.variant == Variant::dair_asp && shared
                           ? T(1) / T(n_intervals)
                           : T(1);
  detail::add_kernel_block_lr(m, "", c.input_channels, c, c.s, fields, rng,
                              head_scale);
  return m;
}

template <typename T>
Model<T> build_fcn_baseline(const ModelConfig& c, Rng& rng) {
  if (c.variant != Variant::fcn_baseline)
    throw StructuralError("build_fcn_baseline expects variant fcn-baseline");
  c.validate();
  Model<T> m{c, {}};
  detail::add_conv(m, "trunk0", c.channels, c.input_channels, rng);
  for (int i = 1; i < c.depth; ++i)
    detail::add_conv(m, "trunk" + std::to_string(i), c.channels, c.channels, rng);
  detail::add_conv(m, "head", 1, c.channels, rng);
  return m;
}

template <typename T>
Model<T> build_recur(const ModelConfig& c, Rng& rng) {
  if (c.variant != Variant::recur)
    throw StructuralError("build_recur expects variant recur");
  c.validate();
  Model<T> m{c, {}};
  detail::add_kernel_block_lr(m, "stage0.", c.input_channels, c, c.s, 1, rng);
  // One refinement block; every refinement stage runs through these tensors.
  detail::add_kernel_block_hr(m, "refine.", 2, c, rng);
  return m;
}

template <typename T>
Model<T> build_prog4x(const ModelConfig& c, Rng& rng) {
  if (c.variant != Variant::prog4x)
    throw StructuralError("build_prog4x expects variant prog4x");
  c.validate();
  Model<T> m{c, {}};
  detail::add_kernel_block_lr(m, "stageA.", c.input_channels, c, 2, 1, rng);
  detail::add_kernel_block_lr(m, "stageB.", 2, c, 2, 1, rng);
  return m;
}

template <typename T>
Model<T> build_joint(const ModelConfig& c, Rng& rng) {
  if (c.variant != Variant::joint)
    throw StructuralError("build_joint expects variant joint");
  c.validate();
  Model<T> m{c, {}};
  detail::add_kernel_block_hr(m, "", 4, c, rng);
  return m;
}

template <typename T>
Model<T> build_model(const ModelConfig& c, Rng& rng) {
  switch (c.variant) {
    case Variant::dair:
    case Variant::dair_asp: return build_dair<T>(c, rng);
    case Variant::fcn_baseline: return build_fcn_baseline<T>(c, rng);
    case Variant::recur: return build_recur<T>(c, rng);
    case Variant::prog4x: return build_prog4x<T>(c, rng);
    case Variant::joint: return build_joint<T>(c, rng);
  }
  throw StructuralError("unreachable variant");
}

template <typename T>
Model<T> build_model(const ModelConfig& c, uint64_t seed) {
  Rng rng(seed);
  return build_model<T>(c, rng);
}

template <typename T>
struct ForwardResult {
  Var<T> sr;
  std::vector<KernelField<T>> taps;  // every intermediate field, in order
};

namespace detail {

// dair / dair-asp forward given a parameter prefix; reused by the
// progressive and recursive variants for their 2x / stage-0 blocks.
template <typename T>
ForwardResult<T> forward_dair_block(const Model<T>& m, const std::string& prefix,
                                    const Var<T>& lr, int block_s, bool asp) {
  const ModelConfig& c = m.config;
  Var<T> fld = run_kernel_block_lr(m, prefix, lr, block_s);
  Var<T> src = nearest_upsample(lr, block_s);
  ForwardResult<T> r;
  if (!asp) {
    KernelField<T> field{fld, c.f, block_s};
    r.taps.push_back(field);
    r.sr = adaptive_resample(src, field);
    return r;
  }
  const IntervalSet set = c.intervals();
  if (c.asp_shared_field) {
    KernelField<T> field{fld, c.f, block_s};
    r.taps.push_back(field);
    r.sr = adaptive_resample_asp(src, field, set);
    return r;
  }
  const int64_t f2 = int64_t(c.f) * c.f;
  for (std::size_t i = 0; i < set.intervals.size(); ++i) {
    Var<T> part = slice_channels(fld, int64_t(i) * f2, int64_t(i + 1) * f2);
    KernelField<T> field{part, c.f, set.intervals[i]};
    r.taps.push_back(field);
    Var<T> term = adaptive_resample(src, field);
    r.sr = r.sr.valid() ? add(r.sr, term) : term;
  }
  return r;
}

}  // namespace detail

// Runs the model on an LR input (values in [0,1], batch layout), returning
// the SR estimate and every kernel field produced along the way. Guidance is
// accepted only by the joint variant and must already be at HR resolution.
template <typename T>
ForwardResult<T> forward_sr(const Model<T>& m, const Var<T>& lr,
                            const Var<T>& guidance = {}) {
  const ModelConfig& c = m.config;
  require_shape4(lr.value(), "forward_sr input");
  if (guidance.valid() && c.variant != Variant::joint)
    throw StructuralError("guidance supplied to a non-joint model");

  switch (c.variant) {
    case Variant::dair:
      return detail::forward_dair_block(m, "", lr, c.s, false);
    case Variant::dair_asp:
      return detail::forward_dair_block(m, "", lr, c.s, true);

    case Variant::fcn_baseline: {
      Var<T> src = nearest_upsample(lr, c.s);
      ForwardResult<T> r;
      r.sr = detail::run_conv(m, "head", detail::run_trunk(m, "", src));
      return r;
    }

    case Variant::recur: {
      ForwardResult<T> r = detail::forward_dair_block(m, "stage0.", lr, c.s, false);
      Var<T> nn = nearest_upsample(lr, c.s);
      for (int stage = 0; stage < c.recursions; ++stage) {
        Var<T> x = concat_channels(r.sr, nn);
        Var<T> fld = detail::run_kernel_block_hr(m, "refine.", x);
        KernelField<T> field{fld, c.f, c.s};
        r.taps.push_back(field);
        r.sr = adaptive_resample(r.sr, field);
      }
      return r;
    }

    case Variant::prog4x: {
      ForwardResult<T> a = detail::forward_dair_block(m, "stageA.", lr, 2, false);
      Var<T> nn2 = nearest_upsample(lr, 2);
      Var<T> xb = concat_channels(a.sr, nn2);
      Var<T> fldb = detail::run_kernel_block_lr(m, "stageB.", xb, 2);
      KernelField<T> field{fldb, c.f, 2};
      ForwardResult<T> r;
      r.taps = std::move(a.taps);
      r.taps.push_back(field);
      r.sr = adaptive_resample(nearest_upsample(a.sr, 2), field);
      return r;
    }

    case Variant::joint: {
      if (!guidance.valid())
        throw StructuralError("joint model requires a guidance image");
      require_shape4(guidance.value(), "forward_sr guidance");
      Var<T> src = nearest_upsample(lr, c.s);
      const Tensor<T>& sv = src.value();
      const Tensor<T>& gv = guidance.value();
      if (gv.dim(2) != sv.dim(2) || gv.dim(3) != sv.dim(3))
        throw StructuralError("guidance spatial size " + shape_string(gv.shape()) +
                              " does not match HR size " + shape_string(sv.shape()));
      Var<T> x = concat_channels(src, guidance);
      Var<T> fld = detail::run_kernel_block_hr(m, "", x);
      KernelField<T> field{fld, c.f, c.s};
      ForwardResult<T> r;
      r.taps.push_back(field);
      r.sr = adaptive_resample(src, field);
      return r;
    }
  }
  throw StructuralError("unreachable variant");
}

}  // namespace dair

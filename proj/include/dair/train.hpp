#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dair/checkpoint.hpp"
#include "dair/common.hpp"
#include "dair/config.hpp"
#include "dair/dataset.hpp"
#include "dair/model.hpp"
#include "dair/optim.hpp"
#include "dair/rng.hpp"

// The training loop: sample a mini-batch, forward, L1 loss, backward, one
// Adam step under the halving schedule. A single seeded RNG stream drives
// parameter init and all data sampling, and its state rides along in every
// checkpoint, so a resumed run continues the exact uninterrupted sequence.

namespace dair {

struct TrainConfig {
  int64_t iterations = 200000;
  int batch_size = 16;
  double lr0 = 1e-4;
  int64_t lr_halving_interval = 50000;
  uint64_t seed = 0;
  int patch_hr_size = 0;  // 0 derives the task default
  int64_t checkpoint_interval = 10000;
  int64_t log_interval = 100;

  // SR trains on 48x48 LR patches, so the HR patch is 48*s; the depth task
  // uses 64 up to 8x and 128 at 16x.
  int resolved_patch_hr(const ModelConfig& mc) const {
    if (patch_hr_size > 0) return patch_hr_size;
    if (mc.variant == Variant::joint) return mc.s <= 8 ? 64 : 128;
    return 48 * mc.s;
  }

  void validate(const ModelConfig& mc) const {
    if (iterations < 0 || batch_size < 1 || lr0 <= 0 || lr_halving_interval < 1 ||
        checkpoint_interval < 1 || log_interval < 1)
      throw StructuralError("train config values must be positive");
    const int patch = resolved_patch_hr(mc);
    if (mc.variant != Variant::joint && patch != 48 * mc.s)
      throw StructuralError("SR patch-hr-size must be 48*s, got " +
                            std::to_string(patch));
    if (patch % mc.s != 0)
      throw StructuralError("patch-hr-size must divide by the scale");
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.emplace_back("iterations", std::to_string(iterations));
    kv.emplace_back("batch-size", std::to_string(batch_size));
    kv.emplace_back("lr0", format_double(lr0));
    kv.emplace_back("lr-halving-interval", std::to_string(lr_halving_interval));
    kv.emplace_back("seed", std::to_string(seed));
    if (patch_hr_size > 0)
      kv.emplace_back("patch-hr-size", std::to_string(patch_hr_size));
    kv.emplace_back("checkpoint-interval", std::to_string(checkpoint_interval));
    kv.emplace_back("log-interval", std::to_string(log_interval));
    return kv;
  }

  static TrainConfig from_key_values(const KeyValues& kv, KeyValues* rest = nullptr) {
    TrainConfig c;
    for (const auto& [key, value] : kv) {
      if (key == "iterations") c.iterations = parse_int(key, value);
      else if (key == "batch-size") c.batch_size = int(parse_int(key, value));
      else if (key == "lr0") c.lr0 = parse_double(key, value);
      else if (key == "lr-halving-interval")
        c.lr_halving_interval = parse_int(key, value);
      else if (key == "seed") c.seed = uint64_t(parse_int(key, value));
      else if (key == "patch-hr-size") c.patch_hr_size = int(parse_int(key, value));
      else if (key == "checkpoint-interval")
        c.checkpoint_interval = parse_int(key, value);
      else if (key == "log-interval") c.log_interval = parse_int(key, value);
      else if (rest) rest->emplace_back(key, value);
      else throw FormatError("unknown train config key '" + key + "'");
    }
    return c;
  }
};

struct LogEntry {
  int64_t step = 0;  // completed steps
  double lr = 0.0;
  float loss = 0.0f;
  double seconds = 0.0;

  std::string line() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%lld\t%.17g\t%.9g\t%.3f\n",
                  static_cast<long long>(step), lr, double(loss), seconds);
    return buf;
  }
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<LogEntry> log;
};

namespace detail {

inline Tensor<float> stack_planes(const std::vector<const ImageBuffer*>& imgs,
                                  int channels) {
  const int h = imgs.front()->height, w = imgs.front()->width;
  Tensor<float> t({int64_t(imgs.size()), channels, h, w});
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    const ImageBuffer& img = *imgs[b];
    if (img.height != h || img.width != w || img.channels != channels)
      throw StructuralError("batch images must share shape");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < channels; ++c)
          t.at(int64_t(b), c, y, x) = img.at(y, x, c);
  }
  return t;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
}

}  // namespace detail

// Runs (iterations - start step) training steps. `out_dir` may be empty to
// skip file output; otherwise periodic checkpoints land there and the loss
// log is (re)written at the end and on every checkpoint.
inline TrainResult train_loop(Model<float>& model, AdamState<float>& adam, Rng& rng,
                              int64_t start_step, const DatasetManifest& data,
                              const TrainConfig& tc, const std::string& out_dir) {
  tc.validate(model.config);
  const ModelConfig& mc = model.config;
  const int patch = tc.resolved_patch_hr(mc);
  const bool joint = mc.variant == Variant::joint;
  if ((data.task == Task::depth) != joint)
    throw StructuralError("dataset task does not match the model variant");

  std::vector<Var<float>> params = model.param_vars();
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  auto save_ckpt = [&](int64_t completed) {
    if (out_dir.empty()) return;
    checkpoint_save(make_checkpoint(model, &adam, uint64_t(completed), rng),
                    out_dir + "/ckpt-" + std::to_string(completed) + ".ckpt");
    std::string log_text;
    for (const auto& e : result.log) log_text += e.line();
    detail::write_text(out_dir + "/loss_log.tsv", log_text);
  };

  for (int64_t step = start_step; step < tc.iterations; ++step) {
    const double lr = lr_at(step, tc.lr0, tc.lr_halving_interval);

    std::vector<SamplePair> batch;
    batch.reserve(std::size_t(tc.batch_size));
    for (int b = 0; b < tc.batch_size; ++b)
      batch.push_back(sample_training_pair(data, mc.s, patch, rng));

    std::vector<const ImageBuffer*> lrs, hrs, guides;
    for (const auto& p : batch) {
      lrs.push_back(&p.lr);
      hrs.push_back(&p.hr);
      if (joint) guides.push_back(&p.guidance);
    }
    Var<float> lr_in(detail::stack_planes(lrs, 1));
    Var<float> hr_target(detail::stack_planes(hrs, 1));
    Var<float> guidance;
    if (joint) guidance = Var<float>(detail::stack_planes(guides, 3));

    ForwardResult<float> fwd = forward_sr(model, lr_in, guidance);
    Var<float> loss = l1_loss(fwd.sr, hr_target);
    const float loss_value = loss.value()[0];
    if (!std::isfinite(loss_value))
      throw NumericError("non-finite loss at step " + std::to_string(step) +
                         "; last periodic checkpoint is intact");

    model.clear_grads();
    backward(loss);
    adam_step(params, adam, lr);

    const int64_t completed = step + 1;
    if (completed % tc.log_interval == 0 || completed == tc.iterations) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      result.log.push_back(LogEntry{completed, lr, loss_value, secs});
    }
    if (completed % tc.checkpoint_interval == 0 && completed != tc.iterations)
      save_ckpt(completed);
  }

  result.final_checkpoint =
      make_checkpoint(model, &adam, uint64_t(tc.iterations), rng);
  if (!out_dir.empty()) {
    checkpoint_save(result.final_checkpoint, out_dir + "/ckpt-final.ckpt");
    std::string log_text;
    for (const auto& e : result.log) log_text += e.line();
    detail::write_text(out_dir + "/loss_log.tsv", log_text);
  }
  return result;
}

// Fresh run: one seed initializes the parameters and then keeps driving the
// data sampling stream.
inline TrainResult train_new(const ModelConfig& mc, const TrainConfig& tc,
                             const DatasetManifest& data,
                             const std::string& out_dir) {
  Rng rng(tc.seed);
  Model<float> model = build_model<float>(mc, rng);
  AdamState<float> adam = AdamState<float>::zeros_like(model.param_vars());
  return train_loop(model, adam, rng, 0, data, tc, out_dir);
}

inline TrainResult train_resume(const Checkpoint& ck, const TrainConfig& tc,
                                const DatasetManifest& data,
                                const std::string& out_dir) {
  Model<float> model = model_from_checkpoint(ck);
  AdamState<float> adam = ck.has_adam
                              ? adam_from_checkpoint(ck)
                              : AdamState<float>::zeros_like(model.param_vars());
  Rng rng(0);
  rng.set_state_words(ck.rng_state);
  return train_loop(model, adam, rng, int64_t(ck.step), data, tc, out_dir);
}

}  // namespace dair

#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dair/checkpoint.hpp"
#include "dair/dataset.hpp"
#include "dair/gradcheck.hpp"
#include "dair/image.hpp"
#include "dair/metrics.hpp"
#include "dair/model.hpp"
#include "dair/resample.hpp"
#include "dair/resize.hpp"
#include "dair/train.hpp"
#include "dair/viz.hpp"

// One binary, subcommand style. Exit codes: 0 success, 1 usage error,
// 2 data/format error, 3 numeric fault.

namespace dair::cli {

namespace detail {

inline Model<float> load_model(const std::string& path) {
  return model_from_checkpoint(checkpoint_load(path));
}

// SR inference on a single-channel [0,1] buffer; output clamped to [0,1].
inline ImageBuffer run_model_plane(const Model<float>& model, const ImageBuffer& lr,
                                   const ImageBuffer* guidance,
                                   std::vector<Tensor<float>>* taps_out = nullptr) {
  Var<float> in(image_to_tensor(lr));
  Var<float> guide;
  if (guidance) guide = Var<float>(rgb_to_tensor(*guidance));
  ForwardResult<float> fwd = forward_sr(model, in, guide);
  if (!fwd.sr.value().all_finite())
    throw NumericError("model produced non-finite values");
  if (taps_out)
    for (const auto& t : fwd.taps) taps_out->push_back(t.values.value());
  ImageBuffer out = tensor_to_image(fwd.sr.value(), lr.space, lr.native_scale);
  return out;
}

inline int run_train(const std::string& config_path, const std::string& manifest_path,
                     const std::string& out_dir, const std::string& resume_path) {
  KeyValues kv = load_key_values(config_path);
  KeyValues rest, unknown;
  ModelConfig mc = ModelConfig::from_key_values(kv, &rest);
  TrainConfig tc = TrainConfig::from_key_values(rest, &unknown);
  if (!unknown.empty())
    throw FormatError("unknown config key '" + unknown.front().first + "'");

  const Task task = mc.variant == Variant::joint ? Task::depth : Task::sr;
  DatasetManifest data = open_manifest(manifest_path, task);
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  if (resume_path.empty()) {
    result = train_new(mc, tc, data, out_dir);
  } else {
    Checkpoint ck = checkpoint_load(resume_path);
    if (serialize_key_values(ck.config.to_key_values()) !=
        serialize_key_values(mc.to_key_values()))
      throw StructuralError("checkpoint model config differs from --config");
    result = train_resume(ck, tc, data, out_dir);
  }
  std::cout << "trained to step " << result.final_checkpoint.step << "; checkpoint "
            << out_dir << "/ckpt-final.ckpt\n";
  if (!result.log.empty())
    std::cout << "final logged loss " << result.log.back().loss << "\n";
  return 0;
}

inline int run_eval(const std::string& manifest_path, int scale,
                    const std::string& model_path, const std::string& baseline,
                    int shave, const std::string& report_path) {
  const bool use_model = !model_path.empty() && model_path != "none";
  if (use_model == !baseline.empty())
    throw StructuralError("pass exactly one of --model or --baseline");
  if (scale < 2) throw StructuralError("--scale must be >= 2");
  if (shave < 0) throw StructuralError("--shave must be >= 0");

  Model<float> model;
  bool joint = false;
  if (use_model) {
    model = load_model(model_path);
    joint = model.config.variant == Variant::joint;
    if (model.config.s != scale)
      throw StructuralError("model was trained for s = " +
                            std::to_string(model.config.s) + ", got --scale " +
                            std::to_string(scale));
  }

  DatasetManifest data = open_manifest(manifest_path, joint ? Task::depth : Task::sr);
  MetricReport report;
  const std::size_t n = data.size();
  for (std::size_t i = 0; i < n; ++i) {
    SamplePair pair =
        joint ? make_depth_pair(data.depths[i], data.guides[i], scale)
              : make_eval_pair(data.images[i], scale);
    ImageBuffer sr;
    if (use_model) {
      sr = run_model_plane(model, pair.lr, joint ? &pair.guidance : nullptr);
    } else {
      sr = resize_classical(pair.lr, pair.hr.width, pair.hr.height,
                            resize_method_from_name(baseline), true);
    }
    MetricRecord rec;
    rec.id = data.ids[i];
    rec.psnr = psnr(sr, pair.hr, shave);
    rec.ssim = ssim(sr, pair.hr, shave);
    if (joint) rec.rmse = rmse(sr, pair.hr);
    report.records.push_back(rec);
  }

  const std::string text = report.to_tsv() + "\n" + report.to_key_values();
  std::cout << text;
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write report " + report_path);
    f << text;
  }
  return 0;
}

inline int run_sr(const std::string& model_path, const std::string& in_path,
                  const std::string& out_path, const std::string& tap_dir) {
  Model<float> model = load_model(model_path);
  if (model.config.variant == Variant::joint)
    throw StructuralError("joint models need the depth-sr command");
  ImageBuffer in = load_image(in_path);

  std::vector<Tensor<float>> taps;
  ImageBuffer out;
  if (in.channels == 3) {
    // The model upscales luma; chroma rides along on a classical resizer.
    YCbCr planes = rgb_to_ycbcr(in);
    ImageBuffer sr_y = run_model_plane(model, planes.y, nullptr, &taps);
    ImageBuffer cb = resize_classical(planes.cb, sr_y.width, sr_y.height,
                                      ResizeMethod::bicubic, true);
    ImageBuffer cr = resize_classical(planes.cr, sr_y.width, sr_y.height,
                                      ResizeMethod::bicubic, true);
    out = ycbcr_to_rgb(sr_y, cb, cr);
  } else {
    out = run_model_plane(model, in, nullptr, &taps);
  }
  save_image(out, out_path);
  if (!tap_dir.empty()) {
    for (std::size_t i = 0; i < taps.size(); ++i)
      export_channel_maps(taps[i], taps.size() == 1
                                       ? tap_dir
                                       : tap_dir + "/tap" + std::to_string(i));
  }
  return 0;
}

inline int run_depth_sr(const std::string& model_path, const std::string& depth_path,
                        const std::string& guidance_path,
                        const std::string& out_path) {
  Model<float> model = load_model(model_path);
  if (model.config.variant != Variant::joint)
    throw StructuralError("depth-sr needs a joint model checkpoint");
  ImageBuffer depth = load_image(depth_path);
  if (depth.channels != 1)
    throw FormatError("depth input must be single-channel: " + depth_path);
  ImageBuffer guidance = load_image(guidance_path);
  if (guidance.channels != 3)
    throw FormatError("guidance must be RGB: " + guidance_path);
  ImageBuffer out = run_model_plane(model, depth, &guidance);
  save_image(out, out_path);
  return 0;
}

inline int run_resize(const std::string& method, double scale, bool antialias,
                      const std::string& in_path, const std::string& out_path) {
  if (scale <= 0.0) throw StructuralError("--scale must be positive");
  ImageBuffer in = load_image(in_path);
  ImageBuffer out =
      resize_classical(in, scale, resize_method_from_name(method), antialias);
  save_image(out, out_path);
  std::cout << out.width << "x" << out.height << " -> " << out_path << "\n";
  return 0;
}

inline int run_visualize(const std::string& model_path, const std::string& in_path,
                         const std::string& channels_dir, const std::string& grid_spec,
                         const std::string& out_path) {
  if (channels_dir.empty() == grid_spec.empty())
    throw StructuralError("pass exactly one of --channels or --grid");
  Model<float> model = load_model(model_path);
  ImageBuffer in = load_image(in_path);
  if (in.channels == 3) in = rgb_to_y(in);

  std::vector<Tensor<float>> taps;
  run_model_plane(model, in, nullptr, &taps);
  if (taps.empty())
    throw StructuralError("this model variant predicts no kernel field");

  if (!channels_dir.empty()) {
    for (std::size_t i = 0; i < taps.size(); ++i)
      export_channel_maps(taps[i], taps.size() == 1
                                       ? channels_dir
                                       : channels_dir + "/tap" + std::to_string(i));
    return 0;
  }
  GridRegion region;
  if (std::sscanf(grid_spec.c_str(), "%d,%d,%d,%d", &region.x, &region.y, &region.w,
                  &region.h) != 4)
    throw StructuralError("--grid expects x,y,w,h");
  if (out_path.empty()) throw StructuralError("--grid needs --out <png>");
  export_kernel_grid(taps.back(), model.config.f, region, out_path);
  return 0;
}

inline int run_gradcheck(const std::string& op, int f, int s, uint64_t seed) {
  if (f < 1 || f % 2 == 0) throw StructuralError("--f must be odd and positive");
  if (s < 1) throw StructuralError("--s must be >= 1");
  Rng rng(seed);
  auto fill = [&](Tensor<double>& t, double lo, double hi) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  };
  auto random_tensor = [&](std::vector<int64_t> shape, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    fill(t, lo, hi);
    return t;
  };

  double err = 0.0;
  if (op == "conv2d") {
    Var<double> x(random_tensor({1, 2, 6, 6}, -1, 1), true);
    Var<double> w(random_tensor({3, 2, 3, 3}, -1, 1), true);
    Var<double> b(random_tensor({3}, -1, 1), true);
    Tensor<double> proj = random_tensor({1, 3, 6, 6}, -1, 1);
    err = grad_check<double>(
        [&] { return weighted_sum(conv2d(x, w, b, 1), proj); }, {x, w, b});
  } else if (op == "adaptive-resample" || op == "asp") {
    Var<double> src(random_tensor({1, 1, 8, 8}, -1, 1), true);
    Var<double> fld(random_tensor({1, int64_t(f) * f, 8, 8}, -1, 1), true);
    Tensor<double> proj = random_tensor({1, 1, 8, 8}, -1, 1);
    err = grad_check<double>(
        [&] {
          KernelField<double> field{fld, f, s};
          Var<double> y = op == "asp"
                              ? adaptive_resample_asp(src, field, IntervalSet{{s, 2 * s}})
                              : adaptive_resample(src, field);
          return weighted_sum(y, proj);
        },
        {src, fld});
  } else if (op == "pixel-shuffle") {
    Var<double> x(random_tensor({1, 2 * int64_t(s) * s, 4, 4}, -1, 1), true);
    Tensor<double> proj = random_tensor({1, 2, int64_t(4) * s, int64_t(4) * s}, -1, 1);
    err = grad_check<double>(
        [&] { return weighted_sum(pixel_shuffle(x, s), proj); }, {x});
  } else if (op == "model") {
    ModelConfig mc;
    mc.variant = Variant::dair;
    mc.depth = 3;
    mc.channels = 6;
    mc.f = f;
    mc.s = s;
    Model<double> model = build_model<double>(mc, rng);
    // The zero-initialized field head makes many parameter gradients
    // vacuously zero; perturb every parameter so the check has teeth. The
    // perturbation is deliberately large so that no gradient coordinate is
    // tiny relative to finite-difference rounding noise.
    for (auto& p : model.params) {
      Tensor<double>& t = p.var.mutable_value();
      for (int64_t i = 0; i < t.numel(); ++i) t[i] += rng.uniform(-0.25, 0.25);
    }
    Var<double> lr(random_tensor({1, 1, 5, 5}, 0.2, 0.9), true);
    // Scalarize with a strictly positive projection. The network is piecewise
    // multilinear, so central differences are exact up to rounding as long as
    // no ReLU argument sits within eps of zero; the seed is chosen so none do.
    Tensor<double> proj =
        random_tensor({1, 1, 5 * int64_t(s), 5 * int64_t(s)}, 0.5, 1.5);
    std::vector<Var<double>> leaves = model.param_vars();
    leaves.push_back(lr);
    err = grad_check<double>(
        [&] { return weighted_sum(forward_sr(model, lr).sr, proj); }, leaves);
  } else {
    throw StructuralError(
        "--op must be one of conv2d|adaptive-resample|asp|pixel-shuffle|model");
  }

  std::printf("max relative error = %.3g\n", err);
  if (!(err < 1e-5)) {
    std::fprintf(stderr, "gradient check failed the 1e-5 bound\n");
    return 3;
  }
  return 0;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"adaptive-kernel super-resolution toolkit"};
  app.require_subcommand(1);

  // train
  std::string tr_config, tr_manifest, tr_out, tr_resume;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", tr_config)->required();
  train->add_option("--manifest", tr_manifest)->required();
  train->add_option("--out", tr_out)->required();
  train->add_option("--resume", tr_resume);

  // eval
  std::string ev_manifest, ev_model, ev_baseline, ev_report;
  int ev_scale = 0, ev_shave = -1;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a model or baseline");
  eval->add_option("--manifest", ev_manifest)->required();
  eval->add_option("--scale", ev_scale)->required();
  eval->add_option("--model", ev_model);
  eval->add_option("--baseline", ev_baseline);
  eval->add_option("--shave", ev_shave);
  eval->add_option("--report", ev_report);

  // sr
  std::string sr_model, sr_in, sr_out, sr_taps;
  CLI::App* sr = app.add_subcommand("sr", "super-resolve one image");
  sr->add_option("--model", sr_model)->required();
  sr->add_option("--in", sr_in)->required();
  sr->add_option("--out", sr_out)->required();
  sr->add_option("--tap-fields", sr_taps);

  // depth-sr
  std::string d_model, d_depth, d_guidance, d_out;
  CLI::App* depth_sr = app.add_subcommand("depth-sr", "guided depth upsampling");
  depth_sr->add_option("--model", d_model)->required();
  depth_sr->add_option("--depth", d_depth)->required();
  depth_sr->add_option("--guidance", d_guidance)->required();
  depth_sr->add_option("--out", d_out)->required();

  // resize
  std::string rz_method, rz_in, rz_out;
  double rz_scale = 0.0;
  bool rz_aa = false;
  CLI::App* resize = app.add_subcommand("resize", "classical resampling");
  resize->add_option("--method", rz_method)->required();
  resize->add_option("--scale", rz_scale)->required();
  resize->add_flag("--antialias", rz_aa);
  resize->add_option("in", rz_in)->required();
  resize->add_option("out", rz_out)->required();

  // visualize
  std::string vz_model, vz_in, vz_channels, vz_grid, vz_out;
  CLI::App* visualize = app.add_subcommand("visualize", "export kernel fields");
  visualize->add_option("--model", vz_model)->required();
  visualize->add_option("--in", vz_in)->required();
  visualize->add_option("--channels", vz_channels);
  visualize->add_option("--grid", vz_grid);
  visualize->add_option("--out", vz_out);

  // gradcheck
  std::string gc_op;
  int gc_f = 3, gc_s = 2;
  uint64_t gc_seed = 8;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check");
  gradcheck->add_option("--op", gc_op)->required();
  gradcheck->add_option("--f", gc_f);
  gradcheck->add_option("--s", gc_s);
  gradcheck->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return detail::run_train(tr_config, tr_manifest, tr_out, tr_resume);
    if (*eval) {
      const int shave = ev_shave < 0 ? ev_scale : ev_shave;
      return detail::run_eval(ev_manifest, ev_scale, ev_model, ev_baseline, shave,
                              ev_report);
    }
    if (*sr) return detail::run_sr(sr_model, sr_in, sr_out, sr_taps);
    if (*depth_sr) return detail::run_depth_sr(d_model, d_depth, d_guidance, d_out);
    if (*resize) return detail::run_resize(rz_method, rz_scale, rz_aa, rz_in, rz_out);
    if (*visualize)
      return detail::run_visualize(vz_model, vz_in, vz_channels, vz_grid, vz_out);
    if (*gradcheck) return detail::run_gradcheck(gc_op, gc_f, gc_s, gc_seed);
    return 1;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return 3;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace dair::cli

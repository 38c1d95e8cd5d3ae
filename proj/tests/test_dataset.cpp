#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dair/common.hpp"
#include "dair/dataset.hpp"
#include "dair/image.hpp"
#include "dair/rng.hpp"

using namespace dair;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dair_ds_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageBuffer noise_image(Rng& rng, int w, int h, int c = 1) {
  ImageBuffer img(w, h, c, c == 3 ? ColorSpace::rgb : ColorSpace::gray);
  img.native_scale = 255.0f;
  for (auto& v : img.values) v = static_cast<float>(rng.uniform(0, 1));
  return img;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

std::vector<float> sorted_values(const ImageBuffer& img) {
  std::vector<float> v = img.values;
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("manifest loads listed images and skips comments", "[dataset]") {
  TempDir dir;
  Rng rng(1);
  save_image(noise_image(rng, 12, 10), (dir.path / "a.png").string());
  save_image(noise_image(rng, 8, 8), (dir.path / "b.png").string());
  write_text(dir.path / "manifest.txt",
             "# training corpus\na.png\n\n# second image\nb.png\n");

  DatasetManifest m = open_manifest((dir.path / "manifest.txt").string(), Task::sr);
  REQUIRE(m.size() == 2);
  REQUIRE(m.ids[0] == "a.png");
  REQUIRE(m.images[0].width == 12);
  REQUIRE(m.images[1].width == 8);
}

TEST_CASE("manifest errors are loud and early", "[dataset]") {
  TempDir dir;
  write_text(dir.path / "missing.txt", "not_there.png\n");
  REQUIRE_THROWS_AS(open_manifest((dir.path / "missing.txt").string(), Task::sr),
                    FormatError);

  write_text(dir.path / "empty.txt", "# nothing but comments\n");
  REQUIRE_THROWS_AS(open_manifest((dir.path / "empty.txt").string(), Task::sr),
                    FormatError);

  REQUIRE_THROWS_AS(open_manifest((dir.path / "absent.txt").string(), Task::sr),
                    FormatError);

  // tab-separated pair line under the SR task
  Rng rng(2);
  save_image(noise_image(rng, 8, 8), (dir.path / "d.png").string());
  save_image(noise_image(rng, 8, 8, 3), (dir.path / "g.png").string());
  write_text(dir.path / "pair.txt", "d.png\tg.png\n");
  REQUIRE_THROWS_AS(open_manifest((dir.path / "pair.txt").string(), Task::sr),
                    FormatError);
}

TEST_CASE("depth manifests pair depth with rgb guidance", "[dataset]") {
  TempDir dir;
  Rng rng(3);
  save_image(noise_image(rng, 16, 16), (dir.path / "d.png").string());
  save_image(noise_image(rng, 16, 16, 3), (dir.path / "g.png").string());
  write_text(dir.path / "m.txt", "d.png\tg.png\n");
  DatasetManifest m = open_manifest((dir.path / "m.txt").string(), Task::depth);
  REQUIRE(m.size() == 1);
  REQUIRE(m.guides[0].channels == 3);

  // missing tab
  write_text(dir.path / "notab.txt", "d.png\n");
  REQUIRE_THROWS_AS(open_manifest((dir.path / "notab.txt").string(), Task::depth),
                    FormatError);

  // guidance size mismatch
  save_image(noise_image(rng, 8, 16, 3), (dir.path / "small.png").string());
  write_text(dir.path / "mismatch.txt", "d.png\tsmall.png\n");
  REQUIRE_THROWS_AS(
      open_manifest((dir.path / "mismatch.txt").string(), Task::depth),
      FormatError);

  // gray guidance rejected
  save_image(noise_image(rng, 16, 16), (dir.path / "gray.png").string());
  write_text(dir.path / "gray.txt", "d.png\tgray.png\n");
  REQUIRE_THROWS_AS(open_manifest((dir.path / "gray.txt").string(), Task::depth),
                    FormatError);
}

TEST_CASE("rotation and flip primitives compose to identity", "[dataset]") {
  Rng rng(5);
  ImageBuffer img = noise_image(rng, 7, 5);
  ImageBuffer r = img;
  for (int i = 0; i < 4; ++i) r = detail::rotate90(r);
  REQUIRE(r.width == img.width);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    REQUIRE(r.values[i] == img.values[i]);

  ImageBuffer ff = detail::hflip(detail::hflip(img));
  for (std::size_t i = 0; i < img.values.size(); ++i)
    REQUIRE(ff.values[i] == img.values[i]);

  // one rotation swaps extents and preserves the multiset of values
  ImageBuffer once = detail::rotate90(img);
  REQUIRE(once.width == 5);
  REQUIRE(once.height == 7);
  REQUIRE(sorted_values(once) == sorted_values(img));
}

TEST_CASE("augmentation only resamples when it scales", "[dataset]") {
  Rng data_rng(7);
  ImageBuffer img = noise_image(data_rng, 20, 20);
  int unscaled_seen = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    ImageBuffer out = augment(img, rng);
    REQUIRE(out.width >= 12);   // 0.6 * 20
    REQUIRE(out.width <= 20);
    if (out.width == 20 && out.height == 20) {
      // no rescale happened, so the values are only permuted
      REQUIRE(sorted_values(out) == sorted_values(img));
      ++unscaled_seen;
    }
  }
  REQUIRE(unscaled_seen > 0);  // scale = 1.0 comes up in 40 draws
}

TEST_CASE("augmentation is deterministic per seed", "[dataset]") {
  Rng data_rng(9);
  ImageBuffer img = noise_image(data_rng, 24, 18);
  Rng a(123), b(123);
  ImageBuffer x = augment(img, a);
  ImageBuffer y = augment(img, b);
  REQUIRE(x.width == y.width);
  REQUIRE(x.height == y.height);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    REQUIRE(x.values[i] == y.values[i]);
}

TEST_CASE("eval pairs crop to divisibility before downscaling", "[dataset]") {
  Rng rng(11);
  ImageBuffer img = noise_image(rng, 101, 101);
  SamplePair p = make_eval_pair(img, 3);
  REQUIRE(p.hr.width == 99);
  REQUIRE(p.hr.height == 99);
  REQUIRE(p.lr.width == 33);
  REQUIRE(p.lr.height == 33);
  REQUIRE(p.scale == 3);

  // rgb input reduces to luma on both sides
  ImageBuffer color = noise_image(rng, 32, 24, 3);
  SamplePair pc = make_eval_pair(color, 2);
  REQUIRE(pc.hr.channels == 1);
  REQUIRE(pc.hr.space == ColorSpace::luma_y);
  REQUIRE(pc.lr.channels == 1);

  REQUIRE_THROWS_AS(make_eval_pair(noise_image(rng, 2, 2), 4), StructuralError);
}

TEST_CASE("constant images stay constant through eval pairing", "[dataset]") {
  ImageBuffer img(24, 24, 1);
  img.values.assign(img.values.size(), 0.3f);
  SamplePair p = make_eval_pair(img, 2);
  for (float v : p.lr.values) REQUIRE(v == 0.3f);
}

TEST_CASE("training pairs honor the patch size", "[dataset]") {
  TempDir dir;
  Rng rng(13);
  save_image(noise_image(rng, 160, 160), (dir.path / "big.png").string());
  write_text(dir.path / "m.txt", "big.png\n");
  DatasetManifest m = open_manifest((dir.path / "m.txt").string(), Task::sr);

  for (int s : {2, 3}) {
    Rng sample_rng(17);
    SamplePair p = sample_training_pair(m, s, 48 * s, sample_rng);
    REQUIRE(p.hr.width == 48 * s);
    REQUIRE(p.hr.height == 48 * s);
    REQUIRE(p.lr.width == 48);
    REQUIRE(p.lr.height == 48);
    REQUIRE(p.hr.channels == 1);
    REQUIRE(p.source_id == "big.png");
  }

  // same seed, same pair
  Rng r1(19), r2(19);
  SamplePair a = sample_training_pair(m, 2, 96, r1);
  SamplePair b = sample_training_pair(m, 2, 96, r2);
  for (std::size_t i = 0; i < a.hr.values.size(); ++i)
    REQUIRE(a.hr.values[i] == b.hr.values[i]);
  for (std::size_t i = 0; i < a.lr.values.size(); ++i)
    REQUIRE(a.lr.values[i] == b.lr.values[i]);

  REQUIRE_THROWS_AS(sample_training_pair(m, 2, 97, r1), StructuralError);

  // patches larger than every augmented image are rejected with a clear error
  Rng r3(21);
  REQUIRE_THROWS_AS(sample_training_pair(m, 2, 320, r3), StructuralError);
}

TEST_CASE("depth training pairs align depth and guidance crops", "[dataset]") {
  TempDir dir;
  Rng rng(23);
  // structured depth so alignment errors would show
  ImageBuffer depth(96, 96, 1, ColorSpace::depth);
  depth.native_scale = 65535.0f;
  // 0 and 1 survive 16-bit quantization exactly
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) depth.at(y, x) = x < 48 ? 0.0f : 1.0f;
  ImageBuffer guide = noise_image(rng, 96, 96, 3);
  save_image(depth, (dir.path / "d.png").string());
  save_image(guide, (dir.path / "g.png").string());
  write_text(dir.path / "m.txt", "d.png\tg.png\n");
  DatasetManifest m = open_manifest((dir.path / "m.txt").string(), Task::depth);

  Rng sample_rng(25);
  SamplePair p = sample_training_pair(m, 8, 64, sample_rng);
  REQUIRE(p.hr.width == 64);
  REQUIRE(p.lr.width == 8);
  REQUIRE(p.guidance.width == 64);
  REQUIRE(p.guidance.channels == 3);
  REQUIRE(p.has_guidance());

  // nearest-downsampled depth keeps only values present in the HR crop
  for (float v : p.lr.values) REQUIRE((v == 0.0f || v == 1.0f));
}

TEST_CASE("full-frame depth pairs keep guidance at high resolution", "[dataset]") {
  Rng rng(27);
  ImageBuffer depth = noise_image(rng, 67, 45);
  depth.space = ColorSpace::depth;
  ImageBuffer guide = noise_image(rng, 67, 45, 3);
  SamplePair p = make_depth_pair(depth, guide, 8);
  REQUIRE(p.hr.width == 64);
  REQUIRE(p.hr.height == 40);
  REQUIRE(p.lr.width == 8);
  REQUIRE(p.lr.height == 5);
  REQUIRE(p.guidance.width == 64);
  REQUIRE(p.guidance.height == 40);
}

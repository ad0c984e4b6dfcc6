#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "preimage/data.hpp"
#include "preimage/image_io.hpp"
#include "preimage/rng.hpp"

using namespace preimage;
namespace fs = std::filesystem;

TEST_CASE("synthetic dataset: determinism, balance, masks") {
  LabeledDataset a = make_synthetic_lesions(60, 5);
  LabeledDataset b = make_synthetic_lesions(60, 5);
  REQUIRE(a.size() == 60);
  CHECK(a.num_classes() == 3);
  CHECK(a.has_masks());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.labels[i] == b.labels[i]);
    CHECK(a.images[i].v == b.images[i].v);  // bit-identical
    CHECK(a.masks[i].v == b.masks[i].v);
  }
  LabeledDataset c = make_synthetic_lesions(60, 6);
  CHECK(a.images[0].v != c.images[0].v);

  int counts[3] = {0, 0, 0};
  for (int l : a.labels) ++counts[l];
  CHECK(std::abs(counts[0] - counts[1]) <= 1);
  CHECK(std::abs(counts[1] - counts[2]) <= 1);

  for (int i = 0; i < a.size(); ++i) {
    double mass = 0.0;
    for (double e : a.masks[i].v) {
      CHECK((e == 0.0 || e == 1.0));
      mass += e;
    }
    CHECK(mass >= 0.01 * 32 * 32);  // lesion covers at least 1% of pixels
    for (double e : a.images[i].v) {
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
    }
  }
}

TEST_CASE("synthetic dataset rejects too-small n") {
  CHECK_THROWS_AS(make_synthetic_lesions(5, 1), std::invalid_argument);
}

TEST_CASE("stratified_split: exact proportions and partition contract") {
  // 100 samples, 10 classes x 10 samples, 0.9 -> 9/1 per class
  LabeledDataset ds;
  for (int i = 0; i < 10; ++i) ds.class_names.push_back("c" + std::to_string(i));
  for (int i = 0; i < 100; ++i) {
    Tensor img(1, 3, 4, 4, i / 100.0);
    img.v[0] = i;  // identify items
    ds.images.push_back(img);
    ds.labels.push_back(i % 10);
  }
  auto [train, hold] = stratified_split(ds, 0.9, 3);
  CHECK(train.size() == 90);
  CHECK(hold.size() == 10);
  int tc[10] = {0}, hc[10] = {0};
  for (int l : train.labels) ++tc[l];
  for (int l : hold.labels) ++hc[l];
  for (int i = 0; i < 10; ++i) {
    CHECK(tc[i] == 9);
    CHECK(hc[i] == 1);
  }
  // union = original, intersection empty (via the identifying pixel)
  std::vector<double> seen;
  for (const auto& t : train.images) seen.push_back(t.v[0]);
  for (const auto& t : hold.images) seen.push_back(t.v[0]);
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < 100; ++i) CHECK(seen[i] == double(i));
}

TEST_CASE("stratified_split is seeded and validates inputs") {
  LabeledDataset ds = make_synthetic_lesions(30, 2);
  auto [a1, b1] = stratified_split(ds, 0.8, 7);
  auto [a2, b2] = stratified_split(ds, 0.8, 7);
  CHECK(a1.labels == a2.labels);
  CHECK(a1.images[0].v == a2.images[0].v);
  auto [a3, b3] = stratified_split(ds, 0.8, 8);
  CHECK(a1.labels.size() == a3.labels.size());

  CHECK_THROWS_AS(stratified_split(ds, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_split(ds, 1.0, 1), std::invalid_argument);

  LabeledDataset tiny;
  tiny.class_names = {"a", "b"};
  tiny.images = {Tensor(1, 3, 4, 4), Tensor(1, 3, 4, 4), Tensor(1, 3, 4, 4)};
  tiny.labels = {0, 0, 1};  // class b has a single sample
  CHECK_THROWS_AS(stratified_split(tiny, 0.5, 1), std::invalid_argument);
}

TEST_CASE("split keeps masks aligned") {
  LabeledDataset ds = make_synthetic_lesions(30, 9);
  auto [train, hold] = stratified_split(ds, 0.8, 1);
  REQUIRE(train.has_masks());
  REQUIRE(hold.has_masks());
  CHECK(train.masks.size() == train.images.size());
}

TEST_CASE("corrupt: occlusion patch arithmetic") {
  LabeledDataset ds = make_synthetic_lesions(6, 11);
  const Tensor& img = ds.images[0];
  CorruptionSpec spec;
  spec.kind = CorruptionSpec::Kind::Occlusion;
  spec.patch_size = 8;
  spec.fill_value = 0.5;
  spec.seed = 4;
  Tensor out = corrupt(img, spec);
  int changed[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j)
        if (out.at(0, c, i, j) != img.at(0, c, i, j)) ++changed[c];
  for (int c = 0; c < 3; ++c) CHECK(changed[c] <= 64);
  // determinism
  Tensor out2 = corrupt(img, spec);
  CHECK(out.v == out2.v);
  // patch 0 is the identity
  spec.patch_size = 0;
  CHECK(corrupt(img, spec).v == img.v);
  // oversized patch rejected
  spec.patch_size = 33;
  CHECK_THROWS_AS(corrupt(img, spec), std::invalid_argument);
}

TEST_CASE("corrupt: blur") {
  LabeledDataset ds = make_synthetic_lesions(6, 12);
  const Tensor& img = ds.images[1];
  CorruptionSpec spec;
  spec.kind = CorruptionSpec::Kind::Blur;
  spec.sigma = 0.0;
  CHECK(corrupt(img, spec).v == img.v);  // degenerate kernel
  spec.sigma = 1.5;
  Tensor out = corrupt(img, spec);
  for (double e : out.v) {
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
  // blur reduces total variation
  double tv_before = 0.0, tv_after = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 31; ++i)
      for (int j = 0; j < 31; ++j) {
        tv_before += std::fabs(img.at(0, c, i + 1, j) - img.at(0, c, i, j));
        tv_after += std::fabs(out.at(0, c, i + 1, j) - out.at(0, c, i, j));
      }
  CHECK(tv_after < tv_before);
}

TEST_CASE("corruption spec parsing") {
  CorruptionSpec a = CorruptionSpec::parse("occlusion:8:0.25");
  CHECK(a.kind == CorruptionSpec::Kind::Occlusion);
  CHECK(a.patch_size == 8);
  CHECK(a.fill_value == 0.25);
  CorruptionSpec short_form = CorruptionSpec::parse("occlusion:8");
  CHECK(short_form.patch_size == 8);
  CHECK(short_form.fill_value == 0.5);  // documented default fill
  CorruptionSpec b = CorruptionSpec::parse("blur:1.5");
  CHECK(b.kind == CorruptionSpec::Kind::Blur);
  CHECK(b.sigma == 1.5);
  CHECK_THROWS_AS(CorruptionSpec::parse("sharpen:1"), std::invalid_argument);
  CHECK_THROWS_AS(CorruptionSpec::parse("occlusion:8:1.5"), std::invalid_argument);
}

TEST_CASE("psnr closed forms and properties") {
  Tensor a(1, 3, 8, 8, 0.3);
  CHECK(psnr(a, a) == 100.0);
  Tensor b = a;
  for (double& e : b.v) e += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(a, b) == psnr(b, a));
  Tensor c(1, 3, 4, 4);
  CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);

  // strictly decreasing in uniform noise amplitude
  Rng rng(13);
  Tensor base(1, 3, 8, 8, 0.5);
  double prev = 1e9;
  for (double amp : {0.05, 0.1, 0.2, 0.35, 0.5}) {
    Tensor noisy = base;
    Rng r2(99);
    for (double& e : noisy.v) e += amp * (r2.uniform() > 0.5 ? 1.0 : -1.0);
    double val = psnr(base, noisy);
    CHECK(val < prev);
    prev = val;
  }
}

TEST_CASE("localization_ratio closed forms") {
  Tensor mask(1, 1, 4, 4, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) mask.at(0, 0, i, j) = 1.0;  // 25% coverage

  Tensor inside(1, 1, 4, 4, 0.0);
  inside.at(0, 0, 0, 0) = 2.0;
  inside.at(0, 0, 1, 1) = 1.0;
  CHECK(localization_ratio(inside, mask) == 1.0);

  Tensor outside(1, 1, 4, 4, 0.0);
  outside.at(0, 0, 3, 3) = 5.0;
  CHECK(localization_ratio(outside, mask) == 0.0);

  Tensor uniform(1, 1, 4, 4, 0.7);
  CHECK(localization_ratio(uniform, mask) == doctest::Approx(0.25).epsilon(1e-12));

  // invariant to positive scaling
  Tensor scaled = inside;
  for (double& e : scaled.v) e *= 37.5;
  CHECK(localization_ratio(scaled, mask) == localization_ratio(inside, mask));

  Tensor zero(1, 1, 4, 4, 0.0);
  CHECK_THROWS_AS(localization_ratio(zero, mask), std::domain_error);
  Tensor neg(1, 1, 4, 4, -1.0);
  CHECK_THROWS_AS(localization_ratio(neg, mask), std::invalid_argument);
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) ==
        doctest::Approx(1.0));
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {4, 3, 2, 1}) ==
        doctest::Approx(-1.0));
  // monotone nonlinear transform preserves rho = 1
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {1, 8, 27, 64}) ==
        doctest::Approx(1.0));
  CHECK(spearman_rank_correlation({1, 1, 1}, {3, 2, 1}) == 0.0);  // degenerate
}

TEST_CASE("difference_map sums absolute channel differences") {
  Tensor a(1, 3, 2, 2, 0.5);
  Tensor b = a;
  b.at(0, 0, 0, 0) = 0.7;
  b.at(0, 1, 0, 0) = 0.3;
  Tensor d = difference_map(a, b);
  CHECK(d.c == 1);
  CHECK(d.at(0, 0, 0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(d.at(0, 0, 1, 1) == 0.0);
}

TEST_CASE("resize_area: identity and averaging") {
  Tensor img(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) img.v[i] = i;
  CHECK(resize_area(img, 4, 4).v == img.v);
  Tensor half = resize_area(img, 2, 2);
  CHECK(half.at(0, 0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(half.at(0, 0, 1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  // constant image stays constant under any resize
  Tensor flat(1, 3, 6, 6, 0.42);
  Tensor up = resize_area(flat, 9, 5);
  for (double e : up.v) CHECK(e == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("image io roundtrip at 8-bit precision") {
  fs::path dir = fs::temp_directory_path() / "preimage_io_test";
  fs::create_directories(dir);
  LabeledDataset ds = make_synthetic_lesions(6, 21);
  std::string p = (dir / "img.ppm").string();
  write_ppm(p, ds.images[0]);
  Tensor back = read_image(p);
  REQUIRE(back.same_shape(ds.images[0]));
  for (int i = 0; i < back.size(); ++i)
    CHECK(std::fabs(back.v[i] - ds.images[0].v[i]) <= 0.5 / 255.0 + 1e-12);
  std::string m = (dir / "mask.pgm").string();
  write_pgm(m, ds.masks[0]);
  Tensor mask = read_mask(m);
  CHECK(mask.v == ds.masks[0].v);
  fs::remove_all(dir);
}

TEST_CASE("load_image_folder: contract, ordering, errors") {
  fs::path dir = fs::temp_directory_path() / "preimage_folder_test";
  fs::remove_all(dir);
  LabeledDataset ds = make_synthetic_lesions(9, 33);
  export_dataset(ds, dir.string());

  LabeledDataset loaded =
      load_image_folder(dir.string(), (dir / "labels.csv").string(), 32);
  REQUIRE(loaded.size() == 9);
  CHECK(loaded.num_classes() == 3);
  CHECK(loaded.has_masks());
  for (int i = 0; i < loaded.size(); ++i) {
    // sorted-by-filename order matches the export order here
    CHECK(loaded.class_names[loaded.labels[i]] == ds.class_names[ds.labels[i]]);
    CHECK(loaded.masks[i].v == ds.masks[i].v);
  }
  LabeledDataset again =
      load_image_folder(dir.string(), (dir / "labels.csv").string(), 32);
  for (int i = 0; i < loaded.size(); ++i)
    CHECK(loaded.images[i].v == again.images[i].v);

  // a missing file is reported by name
  fs::remove(dir / "images" / "00004.ppm");
  try {
    load_image_folder(dir.string(), (dir / "labels.csv").string(), 32);
    FAIL("expected an error for the missing file");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("00004.ppm") != std::string::npos);
  }
  fs::remove_all(dir);
}

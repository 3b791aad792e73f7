// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "hanet/data.hpp"
#include "hanet/errors.hpp"

using namespace hanet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hanet_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

AnnotatedImage blank(std::int64_t h, std::int64_t w, std::vector<Point> pts = {}) {
  AnnotatedImage a;
  a.id = "blank";
  a.image = RgbImage(h, w);
  for (std::size_t i = 0; i < a.image.pixels.size(); ++i) a.image.pixels[i] = static_cast<std::uint8_t>(i * 7 % 251);
  a.points = std::move(pts);
  return a;
}

}  // namespace

TEST(Data, ManifestLoadsAndRejectsBadRecords) {
  const fs::path dir = scratch("manifest");
  SyntheticSpec spec;
  spec.images = 2;
  spec.height = 16;
  spec.width = 16;
  make_synthetic(dir, spec);
  DatasetManifest m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].id, "img_0000");

  write(dir / "empty.json", "[]");
  write(dir / "bad.json", "[[-1, 5]]");
  write(dir / "m_empty.json",
        R"({"records":[{"image":"img_0000.png","points":"empty.json"}],"policy":{"M":1,"m":16}})");
  EXPECT_EQ(load_dataset(load_manifest(dir / "m_empty.json"))[0].points.size(), 0u);

  write(dir / "m_bad.json", R"({"records":[{"image":"img_0001.png","points":"bad.json"}]})");
  try {
    load_manifest(dir / "m_bad.json");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("img_0001"), std::string::npos) << e.what();
  }
  write(dir / "m_missing.json", R"({"records":[{"image":"nope.png","points":"empty.json"}]})");
  EXPECT_THROW(load_manifest(dir / "m_missing.json"), ValidationError);
  write(dir / "m_json.json", R"({"records":[)");
  EXPECT_THROW(load_manifest(dir / "m_json.json"), ValidationError);

  std::vector<std::string> failures;
  write(dir / "m_mixed.json",
        R"({"records":[{"image":"img_0000.png","points":"img_0000.json"},{"image":"img_0001.png","points":"bad.json"}]})");
  EXPECT_EQ(load_manifest(dir / "m_mixed.json", &failures).records.size(), 1u);
  EXPECT_EQ(failures.size(), 1u);
  fs::remove_all(dir);
}

TEST(Data, DistinctOriginsOnLargeImage) {
  Rng rng(1);
  AnnotatedImage img = blank(512, 512, {{100.0, 100.0}});
  for (int t = 0; t < 20; ++t) {
    auto crops = sample_patches(img, {4, 128}, rng);
    ASSERT_EQ(crops.size(), 4u);
    std::set<std::pair<std::int64_t, std::int64_t>> origins;
    for (const auto& c : crops) {
      origins.insert({c.origin_x, c.origin_y});
      EXPECT_EQ(c.image.height, 128);
    }
    EXPECT_EQ(origins.size(), 4u);
  }
}

TEST(Data, ExactSizeImageRepeatsOrigin) {
  Rng rng(2);
  auto crops = sample_patches(blank(64, 64), {4, 64}, rng);
  ASSERT_EQ(crops.size(), 4u);
  for (const auto& c : crops) {
    EXPECT_EQ(c.origin_x, 0);
    EXPECT_EQ(c.origin_y, 0);
  }
}

TEST(Data, SmallImageIsPaddedToSingleCrop) {
  Rng rng(3);
  auto crops = sample_patches(blank(40, 50, {{10.0, 20.0}}), {4, 64}, rng);
  ASSERT_EQ(crops.size(), 1u);
  EXPECT_TRUE(crops[0].padded);
  EXPECT_EQ(crops[0].image.width, 64);
  EXPECT_EQ(crops[0].points.size(), 1u);
  EXPECT_EQ(crops[0].image.px(45, 60)[0], 0);
}

TEST(Data, PointsTranslateIntoCrop) {
  auto pts = points_in_window({{100.0, 100.0}, {10.0, 10.0}, {49.6, 60.0}}, 50, 50, 128, 128);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (Point{50.0, 50.0}));
  // Stamped pixel 50 is the crop's first column; clamped to 0.
  EXPECT_EQ(pts[1], (Point{0.0, 10.0}));
}

TEST(Data, FlipIsInvolutionGrayIsIdempotent) {
  AnnotatedImage img = blank(8, 12, {{1.5, 2.0}, {11.0, 7.0}});
  EXPECT_EQ(flip_horizontal(flip_horizontal(img.image)), img.image);
  EXPECT_EQ(flip_points(flip_points(img.points, 12), 12), img.points);
  const RgbImage g = to_gray(img.image);
  EXPECT_EQ(to_gray(g), g);
  const std::uint8_t* p = img.image.px(3, 4);
  const double luma = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  EXPECT_NEAR(g.px(3, 4)[0], luma, 0.5);
}

TEST(Data, AugmentFlagsFollowProbabilities) {
  Rng rng(4);
  AugmentPolicy always{1.0, 1.0, {1, 8}};
  Crop c;
  c.image = blank(8, 8).image;
  c.points = {{1.0, 2.0}};
  augment(c, always, rng);
  EXPECT_TRUE(c.gray);
  EXPECT_TRUE(c.flipped);
  EXPECT_EQ(c.points[0].x, 6.0);
  AugmentPolicy never{0.0, 0.0, {1, 8}};
  Crop d;
  d.image = blank(8, 8).image;
  const RgbImage before = d.image;
  augment(d, never, rng);
  EXPECT_EQ(d.image, before);
  EXPECT_THROW((AugmentPolicy{1.5, 0.5, {1, 8}}.validate()), ValidationError);
}

TEST(Data, SyntheticIsDeterministicAndCountsExact) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  SyntheticSpec spec;
  make_synthetic(a, spec);
  make_synthetic(b, spec);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 17);
  for (const auto& img : load_dataset(load_manifest(a / "manifest.json"))) {
    EXPECT_GE(img.points.size(), 5u);
    EXPECT_LE(img.points.size(), 20u);
    EXPECT_NEAR(render(img.points, 64, 64, KernelRecipe{}).sum(), static_cast<double>(img.points.size()), 1e-6);
  }
  spec.heads_lo = spec.heads_hi = 5;
  for (const auto& img : generate_synthetic(spec)) EXPECT_EQ(img.points.size(), 5u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Data, BatchesConserveCountsAndAreDeterministic) {
  SyntheticSpec spec;
  spec.height = spec.width = 96;
  auto images = generate_synthetic(spec);
  AugmentPolicy policy{0.2, 0.5, {4, 64}};
  PatchStream s1(images, policy, KernelRecipe{}, Normalization{}, 4, 42);
  PatchStream s2(images, policy, KernelRecipe{}, Normalization{}, 4, 42);
  BatchPrefetcher pre(PatchStream(images, policy, KernelRecipe{}, Normalization{}, 4, 42), 2);
  for (int i = 0; i < 10; ++i) {
    PatchBatch a = s1.next();
    PatchBatch b = s2.next();
    PatchBatch c = pre.next();
    EXPECT_EQ(a.images.shape(), (Shape{4, 3, 64, 64}));
    EXPECT_EQ(a.gt_maps.shape(), (Shape{4, 1, 8, 8}));
    EXPECT_TRUE(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
    EXPECT_TRUE(std::equal(a.gt_maps.data().begin(), a.gt_maps.data().end(), c.gt_maps.data().begin()));
    EXPECT_TRUE(std::equal(a.images.data().begin(), a.images.data().end(), c.images.data().begin()));
    for (int k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (int j = 0; j < 64; ++j) sum += a.gt_maps.data()[static_cast<std::size_t>(k * 64 + j)];
      EXPECT_NEAR(sum, static_cast<double>(a.provenance[static_cast<std::size_t>(k)].heads), 1e-6);
    }
  }
}

TEST(Data, ImageNormalization) {
  RgbImage img(1, 1);
  img.pixels = {255, 0, 128};
  Tensor t = image_to_tensor(img, Normalization{});
  EXPECT_NEAR(t.data()[0], (1.0 - 0.485) / 0.229, 1e-12);
  EXPECT_NEAR(t.data()[1], (0.0 - 0.456) / 0.224, 1e-12);
}

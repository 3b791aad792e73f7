// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "hanet/errors.hpp"
#include "hanet/groundtruth.hpp"
#include "oracles.hpp"

using namespace hanet;

namespace {

std::vector<Point> random_points(std::mt19937_64& rng, int n, std::int64_t h, std::int64_t w) {
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w - 1));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h - 1));
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) pts.push_back({ux(rng), uy(rng)});
  return pts;
}

KernelRecipe adaptive() {
  KernelRecipe r;
  r.mode = KernelRecipe::Mode::kAdaptive;
  return r;
}

}  // namespace

TEST(GroundTruth, DefaultFixedRecipe) {
  KernelRecipe r;
  EXPECT_EQ(r.mode, KernelRecipe::Mode::kFixed);
  EXPECT_EQ(r.window, 15);
  EXPECT_EQ(r.sigma, 4.0);
}

TEST(GroundTruth, SinglePointCentreMassAndPeak) {
  KernelRecipe r;
  DensityMap m = render({{{31.0, 31.0}}}, 64, 64, r);
  EXPECT_NEAR(m.sum(), 1.0, 1e-12);
  double peak = 0.0;
  std::int64_t py = -1, px = -1;
  for (std::int64_t y = 0; y < 64; ++y)
    for (std::int64_t x = 0; x < 64; ++x)
      if (m.at(y, x) > peak) {
        peak = m.at(y, x);
        py = y;
        px = x;
      }
  EXPECT_EQ(py, 31);
  EXPECT_EQ(px, 31);
}

TEST(GroundTruth, CornerPointKeepsUnitMass) {
  DensityMap m = render({{{0.0, 0.0}}}, 64, 64, KernelRecipe{});
  EXPECT_NEAR(m.sum(), 1.0, 1e-12);
  EXPECT_TRUE(render({}, 8, 8, KernelRecipe{}).sum() == 0.0);
}

TEST(GroundTruth, FixedMatchesDirectStamping) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto pts = random_points(rng, 1 + t % 9, 24 + t % 5, 30);
    DensityMap a = render(pts, 24 + t % 5, 30, KernelRecipe{});
    DensityMap b = oracle::render_fixed(pts, 24 + t % 5, 30, 15, 4.0);
    for (std::size_t i = 0; i < a.grid.size(); ++i) ASSERT_NEAR(a.grid[i], b.grid[i], 1e-12);
  }
}

TEST(GroundTruth, AdaptiveSigmas) {
  // Three collinear points spaced 10 apart, k=2: mean distances 15, 10, 15.
  KernelRecipe r = adaptive();
  r.k_neighbors = 2;
  auto s = adaptive_sigmas(std::vector<Point>{{0, 0}, {10, 0}, {20, 0}}, r);
  EXPECT_NEAR(s[0], 0.3 * 15.0, 1e-12);
  EXPECT_NEAR(s[1], 0.3 * 10.0, 1e-12);
  // k larger than n-1 uses every other point.
  r.k_neighbors = 3;
  s = adaptive_sigmas(std::vector<Point>{{0, 0}, {10, 0}}, r);
  EXPECT_NEAR(s[0], 3.0, 1e-12);
  EXPECT_EQ(adaptive_window(3.0), 19);
  EXPECT_EQ(adaptive_window(0.1), 3);
}

TEST(GroundTruth, AdaptiveMatchesDirectStampingPerPoint) {
  std::vector<Point> pts{{5.2, 7.9}, {20.0, 11.0}, {9.5, 30.1}};
  KernelRecipe r = adaptive();
  DensityMap m = render(pts, 40, 40, r);
  const auto sig = adaptive_sigmas(pts, r);
  DensityMap ref(40, 40);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    DensityMap one = oracle::render_fixed({pts[i]}, 40, 40, adaptive_window(sig[i]), sig[i]);
    for (std::size_t j = 0; j < ref.grid.size(); ++j) ref.grid[j] += one.grid[j];
  }
  for (std::size_t j = 0; j < ref.grid.size(); ++j) ASSERT_NEAR(m.grid[j], ref.grid[j], 1e-12);
}

TEST(GroundTruth, AdaptiveSinglePointFallsBackToFixed) {
  std::vector<Point> one{{10.0, 12.0}};
  DensityMap a = render(one, 32, 32, adaptive());
  DensityMap b = render(one, 32, 32, KernelRecipe{});
  EXPECT_EQ(a.grid, b.grid);
}

TEST(GroundTruth, CountConservedThroughDownsample) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 40; ++t) {
    auto pts = random_points(rng, 1 + t, 48, 64);
    for (auto recipe : {KernelRecipe{}, adaptive()}) {
      DensityMap m = render(pts, 48, 64, recipe);
      EXPECT_NEAR(m.sum(), static_cast<double>(pts.size()), 1e-9);
      DensityMap d = downsample_sum(m, 8);
      EXPECT_EQ(d.height, 6);
      EXPECT_NEAR(d.sum(), m.sum(), 1e-10);
      DensityMap ref = oracle::downsample_sum(m, 8);
      for (std::size_t i = 0; i < d.grid.size(); ++i) EXPECT_NEAR(d.grid[i], ref.grid[i], 1e-13);
    }
  }
}

TEST(GroundTruth, DownsampleRejectsIndivisible) {
  EXPECT_THROW(downsample_sum(DensityMap(12, 16), 8), ValidationError);
  DensityMap ones(16, 16);
  std::fill(ones.grid.begin(), ones.grid.end(), 1.0);
  DensityMap d = downsample_sum(ones, 8);
  for (double v : d.grid) EXPECT_EQ(v, 64.0);
}

TEST(GroundTruth, FlipCommutesWithRendering) {
  std::vector<Point> pts{{3.25, 4.0}, {17.6, 9.1}, {0.0, 0.0}, {31.0, 20.7}};
  DensityMap a = flip_horizontal(render(pts, 24, 32, KernelRecipe{}));
  std::vector<Point> flipped;
  for (auto p : pts) flipped.push_back({31.0 - p.x, p.y});
  DensityMap b = render(flipped, 24, 32, KernelRecipe{});
  for (std::size_t i = 0; i < a.grid.size(); ++i) EXPECT_NEAR(a.grid[i], b.grid[i], 1e-14);
}

TEST(GroundTruth, RejectsOutOfBoundsPoints) {
  EXPECT_THROW(render({{{32.0, 1.0}}}, 16, 32, KernelRecipe{}), ValidationError);
  EXPECT_THROW(render({{{-0.1, 1.0}}}, 16, 32, KernelRecipe{}), ValidationError);
  KernelRecipe bad;
  bad.window = 14;
  EXPECT_THROW(render({}, 8, 8, bad), ValidationError);
}

TEST(GroundTruth, DmapRoundTripAndPgmHeader) {
  std::mt19937_64 rng(5);
  DensityMap m = render(random_points(rng, 6, 16, 24), 16, 24, KernelRecipe{});
  auto bytes = encode_dmap(m);
  ASSERT_EQ(bytes.size(), 16u + 16u * 24u * 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DMAP");
  EXPECT_EQ(decode_dmap(bytes).grid, m.grid);
  bytes.pop_back();
  EXPECT_THROW(decode_dmap(bytes), ValidationError);

  const auto dir = std::filesystem::temp_directory_path() / "hanet_gt_test";
  std::filesystem::create_directories(dir);
  write_dmap(dir / "a.dmap", m);
  EXPECT_EQ(read_dmap(dir / "a.dmap").grid, m.grid);
  write_pgm(dir / "a.pgm", m);
  std::ifstream f(dir / "a.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 24);
  EXPECT_EQ(h, 16);
  EXPECT_EQ(maxval, 255);
  std::filesystem::remove_all(dir);
}

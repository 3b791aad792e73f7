// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hanet {

// Head position in pixel-centre coordinates: (0,0) is the centre of the
// top-left pixel, valid points satisfy 0 <= x <= W-1 and 0 <= y <= H-1.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Pixel a point stamps onto: floor(coord + 0.5).
std::int64_t pixel_index(double coord);

struct KernelRecipe {
  enum class Mode { kFixed, kAdaptive };
  Mode mode = Mode::kFixed;
  int window = 15;       // fixed mode, odd, pixels
  double sigma = 4.0;    // fixed mode, standard deviation in pixels
  double beta = 0.3;     // adaptive mode
  int k_neighbors = 3;   // adaptive mode

  void validate() const;
};

std::string to_string(KernelRecipe::Mode mode);
KernelRecipe::Mode kernel_mode_from_string(const std::string& name);

// Single-channel grid of non-negative density values, row-major H x W.
struct DensityMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> grid;
  KernelRecipe recipe;

  DensityMap() = default;
  DensityMap(std::int64_t h, std::int64_t w) : height(h), width(w), grid(static_cast<std::size_t>(h * w), 0.0) {}
  double& at(std::int64_t y, std::int64_t x) { return grid[static_cast<std::size_t>(y * width + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return grid[static_cast<std::size_t>(y * width + x)]; }
  double sum() const;
};

// Throws ValidationError naming `id` if any point lies outside the image.
void check_points(std::span<const Point> points, std::int64_t height, std::int64_t width,
                  const std::string& id);

// Discrete Gaussian weights for a window x window stencil (row-major),
// normalised over the full stencil. Used as the stamp before truncation.
std::vector<double> gaussian_stencil(int window, double sigma);

DensityMap render_fixed(std::span<const Point> points, std::int64_t height, std::int64_t width,
                        const KernelRecipe& recipe);

// Per-point sigma_i = beta * mean distance to the k nearest other points.
// With fewer than two points the fixed recipe is used instead.
DensityMap render_adaptive(std::span<const Point> points, std::int64_t height, std::int64_t width,
                           const KernelRecipe& recipe);

// Dispatches on recipe.mode.
DensityMap render(std::span<const Point> points, std::int64_t height, std::int64_t width,
                  const KernelRecipe& recipe);

// The sigma values render_adaptive would use, in point order.
std::vector<double> adaptive_sigmas(std::span<const Point> points, const KernelRecipe& recipe);

// Smallest odd integer >= 6*sigma + 1.
int adaptive_window(double sigma);

// Each output cell is the sum of a factor x factor block.
DensityMap downsample_sum(const DensityMap& map, int factor = 8);

DensityMap flip_horizontal(const DensityMap& map);

// Raw density file: "DMAP", u32 H, u32 W, u32 reserved, then H*W float64,
// all little-endian.
void write_dmap(const std::filesystem::path& path, const DensityMap& map);
DensityMap read_dmap(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dmap(const DensityMap& map);
DensityMap decode_dmap(std::span<const std::uint8_t> bytes);

// Binary PGM (P5, maxval 255) preview scaled to the map maximum; negative
// values show as 0.
void write_pgm(const std::filesystem::path& path, const DensityMap& map);

}  // namespace hanet

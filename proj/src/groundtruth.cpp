// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/groundtruth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <fmt/format.h>

#include "hanet/errors.hpp"
#include "hanet/log.hpp"

namespace hanet {

std::int64_t pixel_index(double coord) { return static_cast<std::int64_t>(std::floor(coord + 0.5)); }

void KernelRecipe::validate() const {
  if (mode == Mode::kFixed) {
    if (window < 1 || window % 2 == 0) {
      throw ValidationError(fmt::format("kernel window must be a positive odd integer, got {}", window));
    }
    if (!(sigma > 0.0)) throw ValidationError(fmt::format("kernel sigma must be > 0, got {}", sigma));
  } else {
    if (!(beta > 0.0)) throw ValidationError(fmt::format("adaptive beta must be > 0, got {}", beta));
    if (k_neighbors < 1) {
      throw ValidationError(fmt::format("adaptive k_neighbors must be >= 1, got {}", k_neighbors));
    }
    // The single-point fallback uses the fixed parameters.
    if (window < 1 || window % 2 == 0 || !(sigma > 0.0)) {
      throw ValidationError("adaptive recipe needs a valid fixed fallback window/sigma");
    }
  }
}

std::string to_string(KernelRecipe::Mode mode) {
  return mode == KernelRecipe::Mode::kFixed ? "fixed" : "adaptive";
}

KernelRecipe::Mode kernel_mode_from_string(const std::string& name) {
  if (name == "fixed") return KernelRecipe::Mode::kFixed;
  if (name == "adaptive") return KernelRecipe::Mode::kAdaptive;
  throw ValidationError("unknown kernel mode '" + name + "' (expected fixed|adaptive)");
}

double DensityMap::sum() const { return std::accumulate(grid.begin(), grid.end(), 0.0); }

void check_points(std::span<const Point> points, std::int64_t height, std::int64_t width,
                  const std::string& id) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 ||
        p.x > static_cast<double>(width - 1) || p.y > static_cast<double>(height - 1)) {
      throw ValidationError(fmt::format("record '{}': point {} ({}, {}) lies outside the {}x{} image",
                                        id, i, p.x, p.y, width, height));
    }
  }
}

std::vector<double> gaussian_stencil(int window, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(window) * static_cast<std::size_t>(window), 0.0);
  const int half = window / 2;
  if (!(sigma > 0.0)) {
    w[static_cast<std::size_t>(half * window + half)] = 1.0;
    return w;
  }
  const double denom = 2.0 * sigma * sigma;
  double total = 0.0;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / denom);
      w[static_cast<std::size_t>((dy + half) * window + dx + half)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

// Adds one unit of mass around the point's pixel, renormalised over the
// part of the stencil that falls inside the image.
void stamp(DensityMap& map, const Point& p, int window, double sigma) {
  const std::int64_t cx = pixel_index(p.x);
  const std::int64_t cy = pixel_index(p.y);
  const std::vector<double> stencil = gaussian_stencil(window, sigma);
  const int half = window / 2;
  const std::int64_t y0 = std::max<std::int64_t>(0, cy - half);
  const std::int64_t y1 = std::min<std::int64_t>(map.height - 1, cy + half);
  const std::int64_t x0 = std::max<std::int64_t>(0, cx - half);
  const std::int64_t x1 = std::min<std::int64_t>(map.width - 1, cx + half);
  auto weight = [&](std::int64_t y, std::int64_t x) {
    return stencil[static_cast<std::size_t>((y - cy + half) * window + (x - cx + half))];
  };
  double inside = 0.0;
  for (std::int64_t y = y0; y <= y1; ++y)
    for (std::int64_t x = x0; x <= x1; ++x) inside += weight(y, x);
  for (std::int64_t y = y0; y <= y1; ++y)
    for (std::int64_t x = x0; x <= x1; ++x) map.at(y, x) += weight(y, x) / inside;
}

void check_dims(std::int64_t height, std::int64_t width) {
  if (height < 1 || width < 1) {
    throw ValidationError(fmt::format("density map dimensions must be >= 1, got {}x{}", height, width));
  }
}

}  // namespace

DensityMap render_fixed(std::span<const Point> points, std::int64_t height, std::int64_t width,
                        const KernelRecipe& recipe) {
  check_dims(height, width);
  KernelRecipe fixed = recipe;
  fixed.mode = KernelRecipe::Mode::kFixed;
  fixed.validate();
  check_points(points, height, width, "render_fixed");
  DensityMap map(height, width);
  map.recipe = fixed;
  for (const Point& p : points) stamp(map, p, fixed.window, fixed.sigma);
  return map;
}

int adaptive_window(double sigma) {
  int w = static_cast<int>(std::ceil(6.0 * sigma + 1.0));
  if (w % 2 == 0) ++w;
  return std::max(w, 1);
}

std::vector<double> adaptive_sigmas(std::span<const Point> points, const KernelRecipe& recipe) {
  const std::size_t n = points.size();
  std::vector<double> sigmas(n, 0.0);
  if (n < 2) return sigmas;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(recipe.k_neighbors), n - 1);
  std::vector<double> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j_out = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[j_out++] = std::hypot(points[i].x - points[j].x, points[i].y - points[j].y);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double mean = 0.0;
    for (std::size_t q = 0; q < k; ++q) mean += dist[q];
    mean /= static_cast<double>(k);
    sigmas[i] = recipe.beta * mean;
  }
  return sigmas;
}

DensityMap render_adaptive(std::span<const Point> points, std::int64_t height, std::int64_t width,
                           const KernelRecipe& recipe) {
  check_dims(height, width);
  KernelRecipe adaptive = recipe;
  adaptive.mode = KernelRecipe::Mode::kAdaptive;
  adaptive.validate();
  if (points.size() < 2) {
    logger()->info("render_adaptive: {} point(s), falling back to fixed kernel (window {}, sigma {})",
                   points.size(), recipe.window, recipe.sigma);
    return render_fixed(points, height, width, recipe);
  }
  check_points(points, height, width, "render_adaptive");
  DensityMap map(height, width);
  map.recipe = adaptive;
  const std::vector<double> sigmas = adaptive_sigmas(points, adaptive);
  // Stencils beyond twice the image extent add nothing after truncation.
  const int cap = static_cast<int>(2 * std::max(height, width) + 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int window = std::min(adaptive_window(sigmas[i]), cap);
    stamp(map, points[i], window, sigmas[i]);
  }
  return map;
}

DensityMap render(std::span<const Point> points, std::int64_t height, std::int64_t width,
                  const KernelRecipe& recipe) {
  return recipe.mode == KernelRecipe::Mode::kFixed ? render_fixed(points, height, width, recipe)
                                                   : render_adaptive(points, height, width, recipe);
}

DensityMap downsample_sum(const DensityMap& map, int factor) {
  if (factor < 1 || map.height % factor != 0 || map.width % factor != 0) {
    throw ValidationError(fmt::format("downsample_sum: {}x{} map is not divisible by factor {}",
                                      map.height, map.width, factor));
  }
  DensityMap out(map.height / factor, map.width / factor);
  out.recipe = map.recipe;
  for (std::int64_t y = 0; y < out.height; ++y) {
    for (std::int64_t x = 0; x < out.width; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) s += map.at(y * factor + dy, x * factor + dx);
      out.at(y, x) = s;
    }
  }
  return out;
}

DensityMap flip_horizontal(const DensityMap& map) {
  DensityMap out(map.height, map.width);
  out.recipe = map.recipe;
  for (std::int64_t y = 0; y < map.height; ++y)
    for (std::int64_t x = 0; x < map.width; ++x) out.at(y, map.width - 1 - x) = map.at(y, x);
  return out;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_dmap(const DensityMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + map.grid.size() * 8);
  out.insert(out.end(), {'D', 'M', 'A', 'P'});
  put_u32(out, static_cast<std::uint32_t>(map.height));
  put_u32(out, static_cast<std::uint32_t>(map.width));
  put_u32(out, 0);
  for (double v : map.grid) put_f64(out, v);
  return out;
}

DensityMap decode_dmap(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DMAP", 4) != 0) {
    throw IoError("not a DMAP file (bad magic or truncated header)");
  }
  const std::uint32_t h = get_u32(bytes.data() + 4);
  const std::uint32_t w = get_u32(bytes.data() + 8);
  const std::size_t expect = 16 + static_cast<std::size_t>(h) * w * 8;
  if (bytes.size() != expect) {
    throw IoError(fmt::format("DMAP size {} does not match {}x{} payload ({} bytes)", bytes.size(), h, w,
                              expect));
  }
  DensityMap map(h, w);
  for (std::size_t i = 0; i < map.grid.size(); ++i) map.grid[i] = get_f64(bytes.data() + 16 + 8 * i);
  return map;
}

void write_dmap(const std::filesystem::path& path, const DensityMap& map) {
  const auto bytes = encode_dmap(map);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

DensityMap read_dmap(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dmap(bytes);
}

void write_pgm(const std::filesystem::path& path, const DensityMap& map) {
  double peak = 0.0;
  for (double v : map.grid) peak = std::max(peak, v);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(map.width));
  for (std::int64_t y = 0; y < map.height; ++y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      const double v = peak > 0.0 ? std::max(0.0, map.at(y, x)) / peak : 0.0;
      row[static_cast<std::size_t>(x)] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace hanet

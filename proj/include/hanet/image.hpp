// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hanet {

// 8-bit interleaved RGB, row-major.
struct RgbImage {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(std::int64_t h, std::int64_t w)
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), 0) {}
  std::uint8_t* px(std::int64_t y, std::int64_t x) {
    return pixels.data() + static_cast<std::size_t>((y * width + x) * 3);
  }
  const std::uint8_t* px(std::int64_t y, std::int64_t x) const {
    return pixels.data() + static_cast<std::size_t>((y * width + x) * 3);
  }
  bool operator==(const RgbImage&) const = default;
};

// PNG input accepts gray, RGB, and alpha variants at 8 or 16 bits; everything
// is converted to 8-bit RGB.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace hanet

// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "hanet/errors.hpp"
#include "hanet/log.hpp"

namespace hanet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed JSON in {}: {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// manifest

std::vector<Point> read_points(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) throw ValidationError(path.string() + ": annotation must be a JSON array of [x, y]");
  std::vector<Point> points;
  points.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number()) {
      throw ValidationError(path.string() + ": every annotation entry must be [x, y]");
    }
    points.push_back({item[0].get<double>(), item[1].get<double>()});
  }
  return points;
}

void write_points(const fs::path& path, const std::vector<Point>& points) {
  json j = json::array();
  for (const Point& p : points) j.push_back({p.x, p.y});
  write_json(path, j);
}

AnnotatedImage load_record(const ManifestRecord& record) {
  AnnotatedImage out;
  out.id = record.id;
  out.image = read_png(record.image);
  out.points = read_points(record.points);
  check_points(out.points, out.image.height, out.image.width, record.id);
  return out;
}

DatasetManifest load_manifest(const fs::path& path, std::vector<std::string>* failures) {
  const json j = read_json(path);
  DatasetManifest m;
  m.root = path.parent_path();
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array()) {
    throw ValidationError(path.string() + ": manifest needs a \"records\" array");
  }
  if (j.contains("policy")) {
    const json& p = j["policy"];
    m.policy.patches = p.value("M", m.policy.patches);
    m.policy.size = p.value("m", m.policy.size);
  }
  if (m.policy.patches < 1) throw ValidationError(path.string() + ": policy M must be >= 1");
  if (m.policy.size < 8 || m.policy.size % 8 != 0) {
    throw ValidationError(fmt::format("{}: policy m={} must be a positive multiple of 8", path.string(),
                                      m.policy.size));
  }
  m.split = j.value("split", std::string("train"));
  for (const json& r : j["records"]) {
    if (!r.contains("image") || !r.contains("points")) {
      throw ValidationError(path.string() + ": each record needs \"image\" and \"points\"");
    }
    ManifestRecord rec;
    rec.image = m.root / r["image"].get<std::string>();
    rec.points = m.root / r["points"].get<std::string>();
    rec.id = rec.image.stem().string();
    try {
      if (!fs::exists(rec.image)) {
        throw ValidationError(fmt::format("record '{}': image {} does not exist", rec.id, rec.image.string()));
      }
      if (!fs::exists(rec.points)) {
        throw ValidationError(
            fmt::format("record '{}': annotation {} does not exist", rec.id, rec.points.string()));
      }
      try {
        load_record(rec);
      } catch (const ValidationError& e) {
        const std::string msg = e.what();
        throw ValidationError(msg.find(rec.id) == std::string::npos ? "record '" + rec.id + "': " + msg : msg);
      }
    } catch (const ValidationError& e) {
      if (!failures) throw;
      failures->push_back(e.what());
      continue;
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"image", fs::relative(r.image, path.parent_path()).generic_string()},
                       {"points", fs::relative(r.points, path.parent_path()).generic_string()}});
  }
  write_json(path, {{"records", records},
                    {"split", manifest.split},
                    {"policy", {{"M", manifest.policy.patches}, {"m", manifest.policy.size}}}});
}

std::vector<AnnotatedImage> load_dataset(const DatasetManifest& manifest) {
  std::vector<AnnotatedImage> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back(load_record(r));
  return out;
}

// ---------------------------------------------------------------------------
// patches and augmentation

void AugmentPolicy::validate() const {
  if (!(gray_prob >= 0.0 && gray_prob <= 1.0) || !(hflip_prob >= 0.0 && hflip_prob <= 1.0)) {
    throw ValidationError(
        fmt::format("augment probabilities must lie in [0,1], got gray {} flip {}", gray_prob, hflip_prob));
  }
  if (patch.patches < 1) throw ValidationError("patch count M must be >= 1");
  if (patch.size < 8 || patch.size % 8 != 0) {
    throw ValidationError(fmt::format("patch size m={} must be a positive multiple of 8", patch.size));
  }
}

std::vector<Point> points_in_window(const std::vector<Point>& points, std::int64_t x0, std::int64_t y0,
                                    std::int64_t w, std::int64_t h) {
  std::vector<Point> out;
  for (const Point& p : points) {
    const std::int64_t px = pixel_index(p.x), py = pixel_index(p.y);
    if (px < x0 || px >= x0 + w || py < y0 || py >= y0 + h) continue;
    // Clamping moves a point by at most half a pixel and keeps its pixel.
    out.push_back({std::clamp(p.x - static_cast<double>(x0), 0.0, static_cast<double>(w - 1)),
                   std::clamp(p.y - static_cast<double>(y0), 0.0, static_cast<double>(h - 1))});
  }
  return out;
}

namespace {

RgbImage cut(const RgbImage& src, std::int64_t x0, std::int64_t y0, std::int64_t size) {
  RgbImage out(size, size);
  for (std::int64_t y = 0; y < size; ++y) {
    std::copy_n(src.px(y0 + y, x0), size * 3, out.px(y, 0));
  }
  return out;
}

}  // namespace

std::vector<Crop> sample_patches(const AnnotatedImage& img, const PatchPolicy& policy, Rng& rng) {
  const std::int64_t m = policy.size;
  if (policy.patches < 1 || m < 1) throw ValidationError("sample_patches: invalid patch policy");

  const AnnotatedImage* source = &img;
  AnnotatedImage padded;
  if (img.image.height < m || img.image.width < m) {
    logger()->warn("sample_patches: image '{}' ({}x{}) smaller than patch {}; zero-padding, single crop",
                   img.id, img.image.height, img.image.width, m);
    padded.id = img.id;
    padded.points = img.points;
    padded.image = RgbImage(std::max(img.image.height, m), std::max(img.image.width, m));
    for (std::int64_t y = 0; y < img.image.height; ++y) {
      std::copy_n(img.image.px(y, 0), img.image.width * 3, padded.image.px(y, 0));
    }
    source = &padded;
  }
  const std::int64_t span_x = source->image.width - m + 1;
  const std::int64_t span_y = source->image.height - m + 1;
  const std::int64_t available = span_x * span_y;
  std::uniform_int_distribution<std::int64_t> pick(0, available - 1);

  std::vector<std::int64_t> origins;
  const std::int64_t wanted = source == &padded ? 1 : policy.patches;
  if (available >= wanted) {
    std::set<std::int64_t> seen;
    while (static_cast<std::int64_t>(origins.size()) < wanted) {
      const std::int64_t o = pick(rng);
      if (seen.insert(o).second) origins.push_back(o);
    }
  } else {
    logger()->warn("sample_patches: image '{}' admits {} distinct origin(s) for {} patches; allowing repeats",
                   img.id, available, wanted);
    for (std::int64_t i = 0; i < wanted; ++i) origins.push_back(pick(rng));
  }

  std::vector<Crop> crops;
  crops.reserve(origins.size());
  for (std::int64_t o : origins) {
    Crop c;
    c.origin_x = o % span_x;
    c.origin_y = o / span_x;
    c.padded = source == &padded;
    c.image = cut(source->image, c.origin_x, c.origin_y, m);
    c.points = points_in_window(source->points, c.origin_x, c.origin_y, m, m);
    crops.push_back(std::move(c));
  }
  return crops;
}

RgbImage to_gray(const RgbImage& image) {
  RgbImage out = image;
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    const double luma = 0.299 * image.pixels[i] + 0.587 * image.pixels[i + 1] + 0.114 * image.pixels[i + 2];
    const auto v = static_cast<std::uint8_t>(std::clamp<long>(std::lround(luma), 0, 255));
    out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = v;
  }
  return out;
}

RgbImage flip_horizontal(const RgbImage& image) {
  RgbImage out(image.height, image.width);
  for (std::int64_t y = 0; y < image.height; ++y) {
    for (std::int64_t x = 0; x < image.width; ++x) {
      std::copy_n(image.px(y, x), 3, out.px(y, image.width - 1 - x));
    }
  }
  return out;
}

std::vector<Point> flip_points(const std::vector<Point>& points, std::int64_t width) {
  std::vector<Point> out;
  out.reserve(points.size());
  for (const Point& p : points) out.push_back({static_cast<double>(width - 1) - p.x, p.y});
  return out;
}

void augment(Crop& crop, const AugmentPolicy& policy, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double gray_draw = unit(rng);
  const double flip_draw = unit(rng);
  if (gray_draw < policy.gray_prob) {
    crop.image = to_gray(crop.image);
    crop.gray = true;
  }
  if (flip_draw < policy.hflip_prob) {
    crop.image = flip_horizontal(crop.image);
    crop.points = flip_points(crop.points, crop.image.width);
    crop.flipped = !crop.flipped;
  }
}

Tensor image_to_tensor(const RgbImage& image, const Normalization& norm) {
  Tensor t(Shape{1, 3, image.height, image.width});
  for (std::int64_t y = 0; y < image.height; ++y) {
    for (std::int64_t x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.px(y, x);
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = (p[c] / 255.0 - norm.mean[c]) / norm.std[c];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// batch stream

PatchStream::PatchStream(std::vector<AnnotatedImage> images, AugmentPolicy policy, KernelRecipe recipe,
                         Normalization norm, int batch_size, std::uint64_t seed)
    : images_(std::move(images)),
      policy_(policy),
      recipe_(recipe),
      norm_(norm),
      batch_size_(batch_size),
      rng_(seed) {
  if (images_.empty()) throw ValidationError("PatchStream: dataset is empty");
  if (batch_size_ < 1) throw ValidationError("PatchStream: batch size must be >= 1");
  policy_.validate();
  recipe_.validate();
  order_.resize(images_.size());
  cursor_ = order_.size();
}

void PatchStream::refill() {
  if (cursor_ >= order_.size()) {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
    ++epoch_;
  }
  const AnnotatedImage& img = images_[order_[cursor_++]];
  for (Crop& c : sample_patches(img, policy_.patch, rng_)) {
    augment(c, policy_, rng_);
    ready_.emplace_back(std::move(c), img.id);
  }
}

PatchBatch PatchStream::next() {
  while (static_cast<int>(ready_.size()) < batch_size_) refill();
  const std::int64_t m = policy_.patch.size;
  PatchBatch batch;
  batch.images = Tensor(Shape{batch_size_, 3, m, m});
  batch.gt_maps = Tensor(Shape{batch_size_, 1, m / 8, m / 8});
  const std::int64_t img_len = 3 * m * m;
  const std::int64_t gt_len = (m / 8) * (m / 8);
  for (int b = 0; b < batch_size_; ++b) {
    auto [crop, id] = std::move(ready_.front());
    ready_.pop_front();
    const Tensor t = image_to_tensor(crop.image, norm_);
    std::copy(t.data().begin(), t.data().end(), batch.images.data().begin() + b * img_len);
    const DensityMap gt = downsample_sum(render(crop.points, m, m, recipe_), 8);
    std::copy(gt.grid.begin(), gt.grid.end(), batch.gt_maps.data().begin() + b * gt_len);
    batch.provenance.push_back({id, crop.origin_x, crop.origin_y, crop.padded, crop.gray, crop.flipped,
                                static_cast<std::int64_t>(crop.points.size())});
  }
  batch.epoch = epoch_;
  batch.rng_state = hanet::rng_state(rng_);
  return batch;
}

BatchPrefetcher::BatchPrefetcher(PatchStream stream, std::size_t depth)
    : stream_(std::move(stream)), queue_(depth) {
  worker_ = std::jthread([this](std::stop_token stop) {
    try {
      while (!stop.stop_requested()) {
        if (!queue_.push(stream_.next())) break;
      }
    } catch (...) {
      error_ = std::current_exception();
      queue_.close();
    }
  });
}

BatchPrefetcher::~BatchPrefetcher() {
  worker_.request_stop();
  queue_.close();
}

PatchBatch BatchPrefetcher::next() {
  auto batch = queue_.pop();
  if (!batch) {
    if (error_) std::rethrow_exception(error_);
    throw Error("batch prefetcher closed");
  }
  return std::move(*batch);
}

// ---------------------------------------------------------------------------
// synthetic data

std::vector<AnnotatedImage> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.height < 8 || spec.width < 8 || spec.height % 8 != 0 || spec.width % 8 != 0) {
    throw ValidationError(
        fmt::format("synthetic image size {}x{} must be divisible by 8", spec.height, spec.width));
  }
  if (spec.images < 1) throw ValidationError("synthetic dataset needs at least one image");
  if (spec.heads_lo < 0 || spec.heads_hi < spec.heads_lo) {
    throw ValidationError(fmt::format("invalid head range {}:{}", spec.heads_lo, spec.heads_hi));
  }
  Rng rng(derive_seed(spec.seed, "synthetic"));
  std::uniform_int_distribution<int> count_dist(spec.heads_lo, spec.heads_hi);
  std::uniform_real_distribution<double> xs(1.0, static_cast<double>(spec.width - 2));
  std::uniform_real_distribution<double> ys(1.0, static_cast<double>(spec.height - 2));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 6.0);

  constexpr double kHeadSigma = 1.6;
  constexpr double kHeadGain = 170.0;
  const double tint[3] = {1.0, 0.82, 0.66};

  std::vector<AnnotatedImage> out;
  for (int i = 0; i < spec.images; ++i) {
    AnnotatedImage img;
    img.id = fmt::format("img_{:04d}", i);
    const int heads = count_dist(rng);
    for (int h = 0; h < heads; ++h) img.points.push_back({xs(rng), ys(rng)});

    const double base = 40.0 + 30.0 * unit(rng);
    const double gx = 20.0 * (unit(rng) - 0.5), gy = 20.0 * (unit(rng) - 0.5);
    std::vector<double> field(static_cast<std::size_t>(spec.height * spec.width * 3));
    for (std::int64_t y = 0; y < spec.height; ++y) {
      for (std::int64_t x = 0; x < spec.width; ++x) {
        const double ramp = base + gx * static_cast<double>(x) / static_cast<double>(spec.width) +
                            gy * static_cast<double>(y) / static_cast<double>(spec.height);
        for (int c = 0; c < 3; ++c) field[static_cast<std::size_t>((y * spec.width + x) * 3 + c)] = ramp + noise(rng);
      }
    }
    const int reach = static_cast<int>(std::ceil(3.0 * kHeadSigma));
    for (const Point& p : img.points) {
      const std::int64_t cx = pixel_index(p.x), cy = pixel_index(p.y);
      for (std::int64_t y = std::max<std::int64_t>(0, cy - reach); y <= std::min(spec.height - 1, cy + reach); ++y) {
        for (std::int64_t x = std::max<std::int64_t>(0, cx - reach); x <= std::min(spec.width - 1, cx + reach); ++x) {
          const double d2 = (static_cast<double>(x) - p.x) * (static_cast<double>(x) - p.x) +
                            (static_cast<double>(y) - p.y) * (static_cast<double>(y) - p.y);
          const double v = kHeadGain * std::exp(-d2 / (2.0 * kHeadSigma * kHeadSigma));
          for (int c = 0; c < 3; ++c) field[static_cast<std::size_t>((y * spec.width + x) * 3 + c)] += v * tint[c];
        }
      }
    }
    img.image = RgbImage(spec.height, spec.width);
    for (std::size_t k = 0; k < field.size(); ++k) {
      img.image.pixels[k] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(field[k]), 0, 255));
    }
    out.push_back(std::move(img));
  }
  return out;
}

DatasetManifest make_synthetic(const fs::path& out_dir, const SyntheticSpec& spec) {
  std::vector<AnnotatedImage> images = generate_synthetic(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.split = "train";
  const std::int64_t side = std::min<std::int64_t>(128, std::min(spec.height, spec.width));
  manifest.policy.size = static_cast<int>(side - side % 8);
  manifest.policy.patches = (spec.height > manifest.policy.size || spec.width > manifest.policy.size) ? 4 : 1;
  for (const auto& img : images) {
    ManifestRecord rec;
    rec.id = img.id;
    rec.image = out_dir / (img.id + ".png");
    rec.points = out_dir / (img.id + ".json");
    write_png(rec.image, img.image);
    write_points(rec.points, img.points);
    manifest.records.push_back(std::move(rec));
  }
  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace hanet

// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hanet/groundtruth.hpp"
#include "hanet/image.hpp"
#include "hanet/rng.hpp"
#include "hanet/tensor.hpp"

namespace hanet {

struct AnnotatedImage {
  std::string id;
  RgbImage image;
  std::vector<Point> points;
};

// M patches of side m per image.
struct PatchPolicy {
  int patches = 4;  // M
  int size = 128;   // m, divisible by 8
};

struct ManifestRecord {
  std::filesystem::path image;   // resolved against the manifest directory
  std::filesystem::path points;  // JSON array of [x, y]
  std::string id;                // image file stem
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;
  std::string split = "train";
  PatchPolicy policy;
};

// Parses and validates a manifest: every file must exist and every point
// must lie inside its image. Errors name the failing record.
// With `failures` set, bad records are described there and skipped instead.
DatasetManifest load_manifest(const std::filesystem::path& path, std::vector<std::string>* failures = nullptr);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::vector<Point> read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const std::vector<Point>& points);

AnnotatedImage load_record(const ManifestRecord& record);
std::vector<AnnotatedImage> load_dataset(const DatasetManifest& manifest);

struct AugmentPolicy {
  double gray_prob = 0.2;
  double hflip_prob = 0.5;
  PatchPolicy patch;

  void validate() const;
};

struct Crop {
  RgbImage image;
  std::vector<Point> points;
  std::int64_t origin_x = 0;
  std::int64_t origin_y = 0;
  bool padded = false;
  bool gray = false;
  bool flipped = false;
};

// Draws M crops of side m with pairwise-distinct origins whenever the image
// admits M distinct origins. Points are kept when their pixel lies inside
// the crop and are translated into crop coordinates.
std::vector<Crop> sample_patches(const AnnotatedImage& img, const PatchPolicy& policy, Rng& rng);

// Restricts `points` to the window [x0, x0+w) x [y0, y0+h) (by stamped pixel)
// and translates them into window coordinates.
std::vector<Point> points_in_window(const std::vector<Point>& points, std::int64_t x0,
                                    std::int64_t y0, std::int64_t w, std::int64_t h);

// Grayscale with probability gray_prob, then horizontal flip with
// probability hflip_prob; updates crop.gray / crop.flipped.
void augment(Crop& crop, const AugmentPolicy& policy, Rng& rng);

RgbImage to_gray(const RgbImage& image);
RgbImage flip_horizontal(const RgbImage& image);
std::vector<Point> flip_points(const std::vector<Point>& points, std::int64_t width);

struct Normalization {
  double mean[3] = {0.485, 0.456, 0.406};
  double std[3] = {0.229, 0.224, 0.225};
};

// (1, 3, H, W) tensor of (value/255 - mean) / std per channel.
Tensor image_to_tensor(const RgbImage& image, const Normalization& norm);

struct PatchProvenance {
  std::string source_id;
  std::int64_t origin_x = 0;
  std::int64_t origin_y = 0;
  bool padded = false;
  bool gray = false;
  bool flipped = false;
  std::int64_t heads = 0;
};

struct PatchBatch {
  Tensor images;   // (B, 3, m, m)
  Tensor gt_maps;  // (B, 1, m/8, m/8)
  std::vector<PatchProvenance> provenance;
  std::int64_t epoch = 0;
  std::string rng_state;  // stream RNG after this batch was drawn
};

// Seed-deterministic stream of training batches. Each epoch shuffles the
// images, draws M augmented patches from each, and emits them B at a time.
class PatchStream {
 public:
  PatchStream(std::vector<AnnotatedImage> images, AugmentPolicy policy, KernelRecipe recipe,
              Normalization norm, int batch_size, std::uint64_t seed);
  PatchBatch next();
  std::int64_t epoch() const { return epoch_; }
  std::size_t images() const { return images_.size(); }

 private:
  void refill();

  std::vector<AnnotatedImage> images_;
  AugmentPolicy policy_;
  KernelRecipe recipe_;
  Normalization norm_;
  int batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = 0;
  std::deque<std::pair<Crop, std::string>> ready_;
};

// Fixed-capacity FIFO shared by one producer and one consumer.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // Returns false when the queue was closed.
  bool push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Runs a PatchStream on a background thread, `depth` batches ahead. The
// batch sequence is identical to calling stream.next() directly.
class BatchPrefetcher {
 public:
  BatchPrefetcher(PatchStream stream, std::size_t depth);
  ~BatchPrefetcher();
  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;
  PatchBatch next();

 private:
  PatchStream stream_;
  BoundedQueue<PatchBatch> queue_;
  std::exception_ptr error_;
  std::jthread worker_;
};

struct SyntheticSpec {
  int images = 8;
  std::int64_t height = 64;
  std::int64_t width = 64;
  int heads_lo = 5;
  int heads_hi = 20;
  std::uint64_t seed = 7;
};

// Bright Gaussian blobs ("heads") on a noisy background, with exact point
// annotations. Writes img_XXXX.png, img_XXXX.json and manifest.json into
// `out_dir` and returns the manifest.
DatasetManifest make_synthetic(const std::filesystem::path& out_dir, const SyntheticSpec& spec);

// The same content without touching the filesystem.
std::vector<AnnotatedImage> generate_synthetic(const SyntheticSpec& spec);

}  // namespace hanet

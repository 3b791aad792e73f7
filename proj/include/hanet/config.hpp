// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hanet/attention.hpp"
#include "hanet/data.hpp"
#include "hanet/groundtruth.hpp"

namespace hanet {

// One backbone stage: `convs` 3x3 Conv-BN-ReLU layers of `width` channels.
struct BackboneStage {
  int convs = 1;
  std::int64_t width = 64;
  bool operator==(const BackboneStage&) const = default;
};

// Stages with 2x2 max pooling after each of the first three, giving an
// output stride of exactly 8.
struct BackboneConfig {
  std::vector<BackboneStage> stages{{2, 64}, {2, 128}, {3, 256}, {3, 512}};

  static BackboneConfig full() { return {}; }
  static BackboneConfig toy() { return {{{1, 16}, {1, 32}, {1, 48}, {1, 64}}}; }
  std::int64_t out_channels() const { return stages.back().width; }
  void validate() const;
};

// Which of the ablation architectures to build.
enum class Variant {
  kFull,          // backbone -> attention cascade -> backend
  kNoAttention,   // backbone -> backend
  kBackboneOnly,  // backbone -> 1x1 density head
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  Variant variant = Variant::kFull;
  std::vector<int> scales{1, 2, 3, 6};
  AttentionOptions attention;
  // Backend 3x3 widths; empty means C_b/2, C_b/4, C_b/8.
  std::vector<std::int64_t> backend_widths;
  double init_std = 0.01;

  std::vector<std::int64_t> resolved_backend_widths() const;
  void validate() const;
};

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  double momentum = 0.0;
};

// How the squared-error sum is normalised.
enum class LossReduction {
  kBatch,        // divide by batch size only
  kBatchPixels,  // divide by batch size and pixels per map
};

enum class IterationUnit { kSteps, kEpochs };

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  LossReduction loss_reduction = LossReduction::kBatch;
  int batch_size = 8;
  std::int64_t iterations = 2000;
  IterationUnit iteration_unit = IterationUnit::kSteps;
  std::uint64_t seed = 0;
  std::string train_manifest;
  std::string test_manifest;
  AugmentPolicy augment;
  // Patch policy comes from the train manifest unless set here.
  bool policy_override = false;
  KernelRecipe kernel;
  Normalization normalization;
  // Checkpoint + evaluation every N steps; 0 means only at the end.
  std::int64_t eval_every = 0;
  // Background batch preparation depth; 0 disables the worker thread.
  int prefetch = 2;
  // Clamp negative density to 0 in exported DMAP/PGM files. Counts always
  // use the raw sum.
  bool clamp_exported_maps = true;

  void validate() const;
};

// Named starting points: "full" (VGG-sized) or "toy" (desk-scale).
RunConfig preset(const std::string& name);

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Reads a config file; missing keys keep their defaults.
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& c);

}  // namespace hanet

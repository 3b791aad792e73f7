// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hanet/attention.hpp"
#include "hanet/config.hpp"
#include "hanet/layers.hpp"

namespace hanet {

// Stride-8 VGG-style feature extractor.
struct Backbone {
  std::vector<std::vector<ConvBlock>> stages;
  BackboneConfig config;

  Backbone() = default;
  Backbone(const BackboneConfig& cfg, NormSettings norm, Rng& rng);
  // image: (N,3,H,W) with H,W divisible by 8 -> (N,C_b,H/8,W/8).
  Tensor forward(const Tensor& image, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);
};

// Three Conv-BN-ReLU layers followed by a 1x1 conv to one channel, no final
// activation.
struct Backend {
  std::vector<ConvBlock> blocks;
  Conv2d head;

  Backend() = default;
  Backend(std::int64_t in_channels, const std::vector<std::int64_t>& widths, NormSettings norm, Rng& rng);
  Tensor forward(const Tensor& features, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);
};

struct ForwardTrace {
  Tensor features;              // backbone output
  Tensor attended;              // cascade output (full variant only)
  std::vector<HamOutput> hams;  // per-module outputs and gates
};

// Backbone -> hybrid attention cascade -> backend density regressor.
class HaNet {
 public:
  HaNet(const ModelConfig& cfg, std::uint64_t seed);
  HaNet(const HaNet&) = delete;
  HaNet& operator=(const HaNet&) = delete;
  HaNet(HaNet&&) = default;
  HaNet& operator=(HaNet&&) = default;

  // image: (N,3,H,W) -> density (N,1,H/8,W/8).
  Tensor forward(const Tensor& image, Mode mode, ForwardTrace* trace = nullptr);

  const ModelConfig& config() const { return config_; }
  // Parameters and BN states in registration order, with unique dotted names.
  ParameterList parameters();
  std::int64_t parameter_count();

  Backbone& backbone() { return backbone_; }
  Backend& backend() { return backend_; }
  std::vector<HamParams>& cascade() { return cascade_; }
  CascadeConfig cascade_config() const { return {config_.scales, config_.backbone.out_channels()}; }

 private:
  ModelConfig config_;
  Backbone backbone_;
  std::vector<HamParams> cascade_;
  Backend backend_;
  Conv2d density_head_;  // backbone-only variant
};

// Per-image sum over the map: the estimated head count.
std::vector<double> count_from_map(const Tensor& map);

// ---------------------------------------------------------------------------
// checkpoints

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Versioned container: "HNCK", u32 version, u64 header length, a JSON header
// (config echo, iteration, RNG state, name -> offset/shape table), then the
// raw little-endian float64 payload.
struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  RunConfig config;
  std::int64_t iteration = 0;
  std::string rng_state;
  std::vector<TensorBlob> blobs;  // parameters, then BN running statistics
  std::vector<std::pair<std::string, std::int64_t>> bn_updates;
  std::vector<TensorBlob> optimizer_state;

  const TensorBlob* find(const std::string& name) const;
};

ModelCheckpoint capture(HaNet& model, const RunConfig& config, std::int64_t iteration,
                        const std::string& rng_state);

// Copies checkpoint values into the model. In strict mode every parameter and
// BN state must be present with a matching shape; otherwise only matching
// names are copied (weight import) and the count of copied tensors returned.
std::size_t restore(HaNet& model, const ModelCheckpoint& ckpt, bool strict = true);

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// Builds a model from the checkpoint's config echo and restores its state.
HaNet model_from_checkpoint(const ModelCheckpoint& ckpt);

}  // namespace hanet

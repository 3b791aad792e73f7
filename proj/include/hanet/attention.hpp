// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "hanet/layers.hpp"

// Scale-context attention: a spatial branch (SAM) and a channel branch (CAM)
// that each pool the input into a K x K grid, gate half of the channels, and
// are concatenated into a hybrid module (HAM). HAMs preserve shape, so they
// cascade from global (K=1) to local context.
namespace hanet {

struct AttentionOptions {
  // Hidden width of the CAM bottleneck is K*K*C / reduction (at least 1).
  int reduction = 16;
  // Conv-BN-ReLU after each G3 instead of a bare conv.
  bool branch_bn = true;
  // SAM projects its pooled context through the same G3 conv weights used for
  // the residual features. When false, a separate 3x3 conv is learned.
  bool shared_g3 = true;
  NormSettings norm;
};

struct SamParams {
  ConvBlock g3;    // C -> C/2, 3x3
  Conv2d context;  // C -> C/2, 3x3; only used when !shared_g3
  Conv2d g1;       // C/2 -> 1, 1x1
  bool shared_g3 = true;

  SamParams() = default;
  SamParams(std::int64_t channels, const AttentionOptions& opt, Rng& rng);
  std::int64_t half() const { return g3.conv.out_channels(); }
  void collect(const std::string& prefix, ParameterList& out);
};

struct CamParams {
  ConvBlock g3;  // C -> C/2, 3x3
  Linear fc1;    // K*K*C -> K*K*C / r
  Linear fc2;    // K*K*C / r -> C/2
  int reduction = 16;

  CamParams() = default;
  CamParams(std::int64_t channels, int k, const AttentionOptions& opt, Rng& rng);
  std::int64_t half() const { return g3.conv.out_channels(); }
  void collect(const std::string& prefix, ParameterList& out);
};

struct HamParams {
  int k = 1;
  SamParams sam;
  CamParams cam;

  HamParams() = default;
  HamParams(std::int64_t channels, int k, const AttentionOptions& opt, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out);
};

struct CascadeConfig {
  std::vector<int> scales{1, 2, 3, 6};
  std::int64_t channels = 512;
};

// Gated features plus the gate that produced them.
struct BranchOutput {
  Tensor features;  // (N, C/2, H, W)
  Tensor gate;      // SAM: (N,1,H,W); CAM: (N,C/2,1,1)
};

struct HamOutput {
  Tensor features;  // (N, C, H, W)
  Tensor spatial_gate;
  Tensor channel_gate;
};

BranchOutput sam_forward(const Tensor& x, SamParams& p, int k, Mode mode);
BranchOutput cam_forward(const Tensor& x, CamParams& p, int k, Mode mode);
HamOutput ham_forward(const Tensor& x, HamParams& p, Mode mode);

// Folds ham_forward over `params` in order. When `trace` is non-null it
// receives every module's output and gates.
Tensor cascade_forward(const Tensor& x0, const CascadeConfig& cfg, std::vector<HamParams>& params,
                       Mode mode, std::vector<HamOutput>* trace = nullptr);

// Builds one HamParams per scale.
std::vector<HamParams> make_cascade(const CascadeConfig& cfg, const AttentionOptions& opt, Rng& rng);

void validate(const CascadeConfig& cfg);

}  // namespace hanet

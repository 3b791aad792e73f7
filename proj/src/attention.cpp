// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/attention.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "hanet/errors.hpp"

namespace hanet {

namespace {

void check_input(const Tensor& x, int k, const char* who) {
  const Shape& s = x.shape();
  if (s.c % 2 != 0) {
    throw ValidationError(fmt::format("{}: channel count must be even, got {}", who, s.c));
  }
  if (k < 1 || k > s.h || k > s.w) {
    throw ValidationError(
        fmt::format("{}: scale K={} exceeds spatial size {}x{}", who, k, s.h, s.w));
  }
}

std::int64_t even_half(std::int64_t channels, const char* who) {
  if (channels < 2 || channels % 2 != 0) {
    throw ValidationError(fmt::format("{}: channel count must be even and >= 2, got {}", who, channels));
  }
  return channels / 2;
}

}  // namespace

SamParams::SamParams(std::int64_t channels, const AttentionOptions& opt, Rng& rng)
    : shared_g3(opt.shared_g3) {
  const std::int64_t half = even_half(channels, "SAM");
  g3 = ConvBlock(channels, half, 3, rng, opt.norm, opt.branch_bn, opt.branch_bn);
  if (!shared_g3) context = Conv2d(channels, half, 3, rng);
  g1 = Conv2d(half, 1, 1, rng);
}

void SamParams::collect(const std::string& prefix, ParameterList& out) {
  g3.collect(prefix + ".g3", out);
  if (!shared_g3) context.collect(prefix + ".context", out);
  g1.collect(prefix + ".g1", out);
}

CamParams::CamParams(std::int64_t channels, int k, const AttentionOptions& opt, Rng& rng)
    : reduction(opt.reduction) {
  const std::int64_t half = even_half(channels, "CAM");
  if (opt.reduction < 1) throw ValidationError("CAM: reduction ratio must be >= 1");
  if (k < 1) throw ValidationError("CAM: scale K must be >= 1");
  const std::int64_t flat = static_cast<std::int64_t>(k) * k * channels;
  const std::int64_t hidden = std::max<std::int64_t>(1, flat / opt.reduction);
  g3 = ConvBlock(channels, half, 3, rng, opt.norm, opt.branch_bn, opt.branch_bn);
  fc1 = Linear(flat, hidden, rng);
  fc2 = Linear(hidden, half, rng);
}

void CamParams::collect(const std::string& prefix, ParameterList& out) {
  g3.collect(prefix + ".g3", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

HamParams::HamParams(std::int64_t channels, int k_, const AttentionOptions& opt, Rng& rng)
    : k(k_), sam(channels, opt, rng), cam(channels, k_, opt, rng) {}

void HamParams::collect(const std::string& prefix, ParameterList& out) {
  sam.collect(prefix + ".sam", out);
  cam.collect(prefix + ".cam", out);
}

BranchOutput sam_forward(const Tensor& x, SamParams& p, int k, Mode mode) {
  check_input(x, k, "sam_forward");
  const Shape& s = x.shape();
  if (p.g3.conv.in_channels() != s.c) {
    throw ValidationError(fmt::format("sam_forward: parameters built for {} channels, input {}",
                                      p.g3.conv.in_channels(), s.str()));
  }
  Tensor features = p.g3(x, mode);
  Tensor context = ops::bilinear_resize(ops::adaptive_avg_pool(x, k), s.h, s.w);
  // The pooled context has C channels; it meets the C/2 residual features
  // after passing through the G3 convolution.
  Tensor projected = p.shared_g3 ? p.g3.conv(context) : p.context(context);
  Tensor gate = ops::sigmoid(p.g1(ops::add(features, projected)));
  return {ops::mul(features, gate), gate};
}

BranchOutput cam_forward(const Tensor& x, CamParams& p, int k, Mode mode) {
  check_input(x, k, "cam_forward");
  const Shape& s = x.shape();
  const std::int64_t flat = static_cast<std::int64_t>(k) * k * s.c;
  if (p.fc1.weight.shape().c != flat || p.g3.conv.in_channels() != s.c) {
    throw ValidationError(fmt::format(
        "cam_forward: parameters expect {} pooled features, input {} at K={} gives {}",
        p.fc1.weight.shape().c, s.str(), k, flat));
  }
  Tensor features = p.g3(x, mode);
  Tensor pooled = ops::adaptive_avg_pool(x, k);
  Tensor hidden = ops::relu(p.fc1(pooled));
  Tensor gate = ops::sigmoid(p.fc2(hidden));  // (N, C/2, 1, 1)
  return {ops::mul(features, gate), gate};
}

HamOutput ham_forward(const Tensor& x, HamParams& p, Mode mode) {
  const std::int64_t c = x.shape().c;
  if (p.sam.half() + p.cam.half() != c) {
    throw ValidationError(fmt::format("ham_forward: SAM width {} + CAM width {} != input channels {}",
                                      p.sam.half(), p.cam.half(), c));
  }
  BranchOutput spatial = sam_forward(x, p.sam, p.k, mode);
  BranchOutput channel = cam_forward(x, p.cam, p.k, mode);
  return {ops::concat_channels(spatial.features, channel.features), spatial.gate, channel.gate};
}

void validate(const CascadeConfig& cfg) {
  if (cfg.scales.empty()) throw ValidationError("cascade: scale list must not be empty");
  for (int k : cfg.scales) {
    if (k < 1) throw ValidationError(fmt::format("cascade: scale {} must be >= 1", k));
  }
  if (cfg.channels < 2 || cfg.channels % 2 != 0) {
    throw ValidationError(fmt::format("cascade: channel width {} must be even", cfg.channels));
  }
}

std::vector<HamParams> make_cascade(const CascadeConfig& cfg, const AttentionOptions& opt, Rng& rng) {
  validate(cfg);
  std::vector<HamParams> out;
  out.reserve(cfg.scales.size());
  for (int k : cfg.scales) out.emplace_back(cfg.channels, k, opt, rng);
  return out;
}

Tensor cascade_forward(const Tensor& x0, const CascadeConfig& cfg, std::vector<HamParams>& params,
                       Mode mode, std::vector<HamOutput>* trace) {
  validate(cfg);
  if (params.size() != cfg.scales.size()) {
    throw ValidationError(fmt::format("cascade: {} parameter sets for {} scales", params.size(),
                                      cfg.scales.size()));
  }
  if (x0.shape().c != cfg.channels) {
    throw ValidationError(fmt::format("cascade: input has {} channels, configured for {}",
                                      x0.shape().c, cfg.channels));
  }
  Tensor x = x0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].k != cfg.scales[i]) {
      throw ValidationError(fmt::format("cascade: module {} built for K={}, configured K={}", i,
                                        params[i].k, cfg.scales[i]));
    }
    HamOutput out = ham_forward(x, params[i], mode);
    x = out.features;
    if (trace) trace->push_back(std::move(out));
  }
  return x;
}

}  // namespace hanet

// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hanet/ops.hpp"
#include "hanet/rng.hpp"
#include "hanet/tensor.hpp"

namespace hanet {

using ops::Mode;

struct NamedBatchNorm {
  std::string name;
  ops::BatchNormState* state;
};

// Flat views over a model's learnable state, in registration order.
struct ParameterList {
  std::vector<Parameter> params;
  std::vector<NamedBatchNorm> batchnorms;
};

constexpr double kInitStd = 0.01;

struct Conv2d {
  Tensor weight;  // (C_out, C_in, R, R)
  Tensor bias;    // (1, C_out, 1, 1)
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  Conv2d(std::int64_t in, std::int64_t out, int kernel, Rng& rng, int stride = 1);
  std::int64_t in_channels() const { return weight.shape().c; }
  std::int64_t out_channels() const { return weight.shape().n; }
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, padding); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  ops::BatchNormState state;

  BatchNorm2d() = default;
  BatchNorm2d(std::int64_t channels, double momentum, double eps);
  Tensor operator()(const Tensor& x, Mode mode) { return ops::batchnorm2d(x, gamma, beta, state, mode); }
  void collect(const std::string& prefix, ParameterList& out);
};

struct Linear {
  Tensor weight;  // (F_out, F_in, 1, 1)
  Tensor bias;    // (1, F_out, 1, 1)

  Linear() = default;
  Linear(std::int64_t in, std::int64_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ops::fully_connected(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct NormSettings {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Conv (same padding) followed by optional BN and ReLU.
struct ConvBlock {
  Conv2d conv;
  BatchNorm2d bn;
  bool use_bn = true;
  bool use_relu = true;

  ConvBlock() = default;
  ConvBlock(std::int64_t in, std::int64_t out, int kernel, Rng& rng, NormSettings norm,
            bool use_bn = true, bool use_relu = true);
  Tensor operator()(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);
};

// Gaussian(0, std) tensor.
Tensor gaussian(Shape shape, double stddev, Rng& rng);

}  // namespace hanet

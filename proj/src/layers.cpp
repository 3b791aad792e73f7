// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/layers.hpp"

#include <random>

namespace hanet {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(std::int64_t in, std::int64_t out, int kernel, Rng& rng, int stride_)
    : weight(gaussian(Shape{out, in, kernel, kernel}, kInitStd, rng)),
      bias(Shape{1, out, 1, 1}),
      stride(stride_),
      padding(kernel / 2) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) const {
  out.params.push_back({prefix + ".weight", weight});
  out.params.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(std::int64_t channels, double momentum, double eps)
    : gamma(Shape{1, channels, 1, 1}, 1.0, true),
      beta(Shape{1, channels, 1, 1}, 0.0, true),
      state(channels, momentum, eps) {}

void BatchNorm2d::collect(const std::string& prefix, ParameterList& out) {
  out.params.push_back({prefix + ".gamma", gamma});
  out.params.push_back({prefix + ".beta", beta});
  out.batchnorms.push_back({prefix, &state});
}

Linear::Linear(std::int64_t in, std::int64_t out, Rng& rng)
    : weight(gaussian(Shape{out, in, 1, 1}, kInitStd, rng)), bias(Shape{1, out, 1, 1}) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.params.push_back({prefix + ".weight", weight});
  out.params.push_back({prefix + ".bias", bias});
}

ConvBlock::ConvBlock(std::int64_t in, std::int64_t out, int kernel, Rng& rng, NormSettings norm,
                     bool use_bn_, bool use_relu_)
    : conv(in, out, kernel, rng), use_bn(use_bn_), use_relu(use_relu_) {
  if (use_bn) bn = BatchNorm2d(out, norm.momentum, norm.eps);
}

Tensor ConvBlock::operator()(const Tensor& x, Mode mode) {
  Tensor y = conv(x);
  if (use_bn) y = bn(y, mode);
  if (use_relu) y = ops::relu(y);
  return y;
}

void ConvBlock::collect(const std::string& prefix, ParameterList& out) {
  conv.collect(prefix + ".conv", out);
  if (use_bn) bn.collect(prefix + ".bn", out);
}

}  // namespace hanet

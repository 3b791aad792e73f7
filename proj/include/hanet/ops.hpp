// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "hanet/tensor.hpp"

// Differentiable primitives. Every function validates its shapes and throws
// ValidationError with the offending dimensions on mismatch.
namespace hanet::ops {

// weight: (C_out, C_in, R, R) with odd R; bias: (1, C_out, 1, 1) or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

enum class Mode { kTrain, kEval };

// Running statistics for batch normalization, updated in train mode.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  std::int64_t updates = 0;
  bool warned_uninitialized = false;

  explicit BatchNormState(std::int64_t channels = 0, double momentum = 0.1, double eps = 1e-5);
};

// gamma, beta: (1, C, 1, 1).
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode);

Tensor max_pool2d(const Tensor& input, int kernel = 2, int stride = 2);

// Window for output cell i: [floor(i*H/K), ceil((i+1)*H/K)).
Tensor adaptive_avg_pool(const Tensor& input, int k);

// Half-pixel-centre bilinear resampling with edge clamping.
Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w);

// input flattened to (N, F); weight (F_out, F, 1, 1); bias (1, F_out, 1, 1) or
// undefined. Output is (N, F_out, 1, 1).
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);

enum class Activation { kRelu, kSigmoid };
Tensor activation(const Tensor& input, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin, end).
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end);

// b may equal a's shape, or broadcast as (N,C,1,1) or (N,1,H,W); a batch
// dimension of 1 in b also broadcasts.
enum class Binary { kAdd, kMul };
Tensor elementwise(const Tensor& a, const Tensor& b, Binary kind);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::kAdd); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::kMul); }

Tensor scale(const Tensor& x, double factor);
// Sum of all elements, as a 1x1x1x1 tensor.
Tensor sum(const Tensor& x);
// Per-image sums, shape (N,1,1,1).
Tensor sum_per_image(const Tensor& x);
// Same data viewed with a new shape of equal numel.
Tensor reshape(const Tensor& x, Shape shape);

// Batch-mean of per-image pixel sums of squared differences.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Non-differentiable helper: reflect-pads the bottom/right edges.
Tensor reflect_pad(const Tensor& x, std::int64_t pad_bottom, std::int64_t pad_right);

}  // namespace hanet::ops

// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hanet {

// Dense NCHW shape. All dimensions are at least 1.
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const noexcept { return n * c * h * w; }
  std::int64_t plane() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Node;
struct TensorImpl;
}  // namespace detail

// Reference-counted handle to a 4-D float64 buffer. Copies share storage,
// as with framework tensors; use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  const Shape& shape() const;
  std::int64_t numel() const { return shape().numel(); }
  bool defined() const noexcept { return impl_ != nullptr; }

  std::span<double> data();
  std::span<const double> data() const;
  double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
  // Scalar value of a 1x1x1x1 tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Gradient buffer; allocated as zeros on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // True when produced by a recorded operation (non-leaf).
  bool has_history() const;
  // Independent copy of the values without history or gradient.
  Tensor clone() const;
  // Same storage, cut from history.
  Tensor detach() const;

  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  // Internal access used by the op implementations.
  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// A learnable tensor with a model-unique dotted path name.
struct Parameter {
  std::string name;
  Tensor tensor;
};

// Scoped switch that disables recording (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// One recorded application of a primitive. `seq` is the global recording
// index; backward visits entries in strictly decreasing seq.
struct TapeEntry {
  std::uint64_t seq = 0;
  std::string op;
  std::shared_ptr<detail::Node> node;
};

// The reachable slice of the recording that a backward pass will replay,
// ordered from latest to earliest.
using AutodiffTape = std::vector<TapeEntry>;

// Collects the entries reachable from `root`, in reverse recording order.
AutodiffTape collect_tape(const Tensor& root);

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// `loss` must hold exactly one element.
void backward(const Tensor& loss);

namespace detail {

using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::vector<std::vector<double>>& grad_in)>;

struct Node {
  std::uint64_t seq = 0;
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // grad_in[i] is pre-sized to inputs[i]'s numel (empty when that input
  // needs no gradient); the function accumulates into it.
  BackwardFn fn;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

bool needs_grad(const TensorImpl& t);

// Creates the output tensor of an op and, when recording is on and any
// input needs a gradient, attaches a node carrying `fn`.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn fn);

}  // namespace detail

}  // namespace hanet

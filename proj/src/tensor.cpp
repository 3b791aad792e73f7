// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "hanet/errors.hpp"

namespace hanet {

namespace {

thread_local bool g_grad_mode = true;
std::atomic<std::uint64_t> g_seq{0};

void check_shape(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ValidationError("tensor dimensions must be >= 1, got " + s.str());
  }
}

}  // namespace

std::string Shape::str() const { return fmt::format("({},{},{},{})", n, c, h, w); }

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  impl_->shape = shape;
  impl_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
    throw ValidationError(fmt::format("data length {} does not match shape {} (numel {})",
                                      data.size(), shape.str(), shape.numel()));
  }
  impl_->shape = shape;
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  const Shape& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const Shape& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on tensor of shape " + shape().str());
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }
void Tensor::clear_grad() { impl_->grad.clear(); }

bool Tensor::has_history() const { return impl_->grad_fn != nullptr; }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

namespace detail {

bool needs_grad(const TensorImpl& t) { return t.requires_grad || t.grad_fn != nullptr; }

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn fn) {
  Tensor out(shape, std::move(data), false);
  if (!g_grad_mode) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const auto& in) { return in && needs_grad(*in); });
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  node->inputs = std::move(inputs);
  node->fn = std::move(fn);
  out.impl()->grad_fn = std::move(node);
  return out;
}

}  // namespace detail

AutodiffTape collect_tape(const Tensor& root) {
  AutodiffTape tape;
  if (!root.impl()->grad_fn) return tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.impl()->grad_fn};
  seen.insert(stack.back().get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : node->inputs) {
      if (in && in->grad_fn && seen.insert(in->grad_fn.get()).second) {
        stack.push_back(in->grad_fn);
      }
    }
    tape.push_back(TapeEntry{node->seq, node->op, std::move(node)});
  }
  std::sort(tape.begin(), tape.end(),
            [](const TapeEntry& a, const TapeEntry& b) { return a.seq > b.seq; });
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ValidationError("backward requires a scalar loss, got shape " +
                          (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  auto& root = loss.impl();
  if (!root->grad_fn) {
    if (root->requires_grad) {
      Tensor(root).grad()[0] += 1.0;
    }
    return;
  }

  const AutodiffTape tape = collect_tape(loss);
  std::unordered_map<const detail::Node*, std::vector<double>> pending;
  pending[root->grad_fn.get()] = {1.0};

  for (const TapeEntry& entry : tape) {
    auto it = pending.find(entry.node.get());
    if (it == pending.end()) continue;
    std::vector<double> grad_out = std::move(it->second);
    pending.erase(it);

    const auto& inputs = entry.node->inputs;
    std::vector<std::vector<double>> grad_in(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i] && detail::needs_grad(*inputs[i])) grad_in[i].assign(inputs[i]->data.size(), 0.0);
    }
    entry.node->fn(grad_out, grad_in);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (grad_in[i].empty()) continue;
      auto& in = inputs[i];
      if (in->grad_fn) {
        auto& acc = pending[in->grad_fn.get()];
        if (acc.empty()) {
          acc = std::move(grad_in[i]);
        } else {
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += grad_in[i][k];
        }
      } else if (in->requires_grad) {
        if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
        for (std::size_t k = 0; k < in->grad.size(); ++k) in->grad[k] += grad_in[i][k];
      }
    }
  }
}

}  // namespace hanet

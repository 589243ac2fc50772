// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wdda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace wdda {

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int extent : shape) {
    if (extent < 0) {
      throw ShapeError("negative extent in shape " + shape_to_string(shape));
    }
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

std::vector<double>& detail::TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  check_finite(data, "tensor construction");
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const detail::TensorImpl& Tensor::checked() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

detail::TensorImpl& Tensor::checked() {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<const double> Tensor::data() const { return checked().data; }

std::span<double> Tensor::mutable_data() {
  auto& impl = checked();
  if (!impl.is_leaf()) {
    throw std::logic_error("mutable_data on a non-leaf tensor");
  }
  return impl.data;
}

double Tensor::item() const {
  const auto& impl = checked();
  if (impl.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(impl.shape));
  }
  return impl.data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

void Tensor::set_requires_grad(bool value) {
  auto& impl = checked();
  if (!impl.is_leaf()) {
    throw std::logic_error("requires_grad can only be changed on leaves");
  }
  impl.requires_grad = value;
}

bool Tensor::is_leaf() const { return checked().is_leaf(); }

bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::span<const double> Tensor::grad() const { return checked().grad; }

std::span<double> Tensor::mutable_grad() { return checked().ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = checked().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& impl = checked();
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->data = impl.data;
  return Tensor(std::move(out));
}

Tensor Tensor::clone() const {
  const auto& impl = checked();
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->data = impl.data;
  out->grad = impl.grad;
  out->requires_grad = impl.requires_grad;
  return Tensor(std::move(out));
}

void Tensor::backward() const {
  Tape tape = Tape::record(*this);
  tape.backward();
}

std::vector<Tensor> Tensor::inputs() const {
  std::vector<Tensor> out;
  for (const auto& in : checked().inputs) out.emplace_back(in);
  return out;
}

const char* Tensor::op_name() const {
  const char* op = checked().op;
  return op ? op : "leaf";
}

Tape Tape::record(const Tensor& root) {
  if (!root.defined()) throw std::logic_error("backward on undefined tensor");
  if (root.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_to_string(root.shape()));
  }
  if (!root.requires_grad()) {
    throw std::logic_error(
        "backward on a tensor that does not require grad (empty tape)");
  }
  Tape tape;
  tape.root_ = root.impl();

  // Iterative post-order DFS; only nodes that require grad participate.
  std::unordered_set<const detail::TensorImpl*> visited{root.impl().get()};
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>>
      stack;
  stack.emplace_back(root.impl(), 0);
  while (!stack.empty()) {
    auto node = stack.back().first;
    std::size_t& next = stack.back().second;
    if (next < node->inputs.size()) {
      const auto& in = node->inputs[next++];
      if (in->requires_grad && visited.insert(in.get()).second) {
        stack.emplace_back(in, 0);
      }
      continue;
    }
    tape.nodes_.push_back(std::move(node));
    stack.pop_back();
  }
  return tape;
}

std::vector<Tensor> Tape::nodes() const {
  std::vector<Tensor> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.emplace_back(n);
  return out;
}

void Tape::backward() {
  // Intermediate gradients are per-pass; leaves accumulate.
  for (auto& node : nodes_) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  root_->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::TensorImpl& node = **it;
    if (node.backward_fn) node.backward_fn(node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace wdda

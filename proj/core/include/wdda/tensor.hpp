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

#ifndef WDDA_TENSOR_HPP_
#define WDDA_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wdda {

using Shape = std::vector<int>;

/// Raised when tensor extents do not line up for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would produce (or was fed) NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until a backward pass (or mutable_grad) touches it.
  std::vector<double> grad;
  bool requires_grad = false;

  // Populated only for operation outputs recorded while grad mode is on.
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl&)> backward_fn;
  const char* op = nullptr;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major n-dimensional array with optional reverse-mode gradient.
//
// Tensor is a shared handle: copies alias the same storage, matching the
// define-by-run graph in which operation outputs keep their inputs alive.
// Values are stored as double; parameters and optimizer state are kept
// representable in 32-bit floats by the optimizer (see nn.hpp), so the
// serialized float payload is lossless.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of a leaf's values. Throws for operation outputs, whose
  // values are owned by the graph.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // New leaf holding a copy of the values, disconnected from the graph.
  Tensor detach() const;
  // Deep copy of values (and gradient, if any) as a leaf with the same
  // requires_grad flag.
  Tensor clone() const;

  // Reverse pass from a scalar loss. Leaf gradients accumulate across calls.
  void backward() const;

  std::vector<Tensor> inputs() const;
  const char* op_name() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  const detail::TensorImpl& checked() const;
  detail::TensorImpl& checked();

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of the operations reachable from a root tensor. Every
// entry's inputs appear before it. Rebuilt on every backward pass, so the
// graph is define-by-run.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  // Topologically ordered nodes (inputs first, root last).
  std::vector<Tensor> nodes() const;
  void backward();

 private:
  std::shared_ptr<detail::TensorImpl> root_;
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Throws NumericError naming `what` if any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* what);

// Rounds every value to the nearest 32-bit float.
void round_to_float(std::span<double> values);

}  // namespace wdda

#endif  // WDDA_TENSOR_HPP_

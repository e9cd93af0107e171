// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gestigo::nn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Graph node behind a Tensor handle. Owns data, gradient and the closure
/// that propagates the gradient to its parents.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Shared handle to a dense row-major array with optional gradient.
///
/// Copies alias the same storage. Operations in ops.hpp record a backward
/// closure on their result whenever gradient recording is enabled on the
/// calling thread and any input requires a gradient.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  /// Throws ShapeError when data.size() != product(shape).
  static Tensor from(const Shape& shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Empty span when no gradient has been accumulated yet.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Value of a one-element tensor.
  T item() const;

  /// Same storage (identity, not equality).
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  /// New leaf with copied data and no graph.
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Thread-local switch for gradient recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a one-element tensor. Gradients of leaves accumulate
/// across calls until zero_grad(). Throws GraphError when `loss` has no
/// recorded graph and ShapeError when it is not a scalar.
template <class T>
void backward(Tensor<T>& loss);

/// Throws NumericError naming `what` on the first non-finite value.
template <class T>
void check_finite(std::span<const T> values, const char* what);

namespace detail {

/// Result node wired to `parents`; the closure is kept only when recording.
template <class T>
Tensor<T> make_result(const Shape& shape, const char* op,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn);

}  // namespace detail

}  // namespace gestigo::nn

// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::nn {

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError(fmt::format("non-positive dimension in shape {}", shape_string(shape)));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ", "));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <class T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data.assign(shape_numel(shape), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError(fmt::format("{} values do not fill shape {}", data.size(), shape_string(shape)));
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError(fmt::format("item() on shape {}", shape_string(shape())));
  return node_->data[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

template <class T>
void check_finite(std::span<const T> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError(fmt::format("non-finite value {} at index {} in {}", values[i], i, what));
}

template <class T>
void backward(Tensor<T>& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError(fmt::format("backward needs a scalar, got shape {}", shape_string(loss.shape())));
  Node<T>* root = loss.node();
  if (!root->requires_grad) throw GraphError("backward on a tensor with no recorded graph");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), T(0));
  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf()) continue;
    n->backward_fn(*n);
  }
  for (Node<T>* n : order)
    if (n->is_leaf()) check_finite<T>(n->grad, "gradient");
}

namespace detail {

template <class T>
Tensor<T> make_result(const Shape& shape, const char* op,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data.assign(shape_numel(shape), T(0));
  node->op = op;
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(const Shape&, const char*,
                                   std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const Shape&, const char*,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(Tensor<float>&);
template void backward(Tensor<double>&);
template void check_finite(std::span<const float>, const char*);
template void check_finite(std::span<const double>, const char*);

}  // namespace gestigo::nn

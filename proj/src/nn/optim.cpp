// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::nn {

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <class T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto data = p.data();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] = static_cast<T>(data[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
    check_finite<T>(data, "adam update");
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0 || step < 0 || step > total_steps)
    throw ArgumentError(fmt::format("cosine_lr: step {} outside [0, {}]", step, total_steps));
  return base_lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                   static_cast<double>(total_steps))) /
         2.0;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace gestigo::nn

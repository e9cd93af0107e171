// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gestigo/nn/tensor.hpp"

namespace gestigo::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-5;
};

/// Adam with bias correction. Holds first/second moment buffers per parameter.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  /// One update with learning rate `lr`. Parameters without a gradient are
  /// treated as having a zero gradient.
  void step(double lr);
  void zero_grad();

  std::int64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

/// base_lr * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

}  // namespace gestigo::nn

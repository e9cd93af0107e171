// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gestigo/nn/ops.hpp"
#include "gestigo/rng.hpp"

namespace gestigo::nn {

enum class LayerKind : std::uint8_t {
  kConv2d,
  kMaxPool2d,
  kAdaptiveAvgPool,
  kAdaptiveMaxPool,
  kBatchNorm2d,
  kBatchNorm1d,
  kDropout,
  kLinear,
  kRelu,
  kFlatten,
  kConcat,
};

std::string_view to_string(LayerKind kind);

/// Kind plus hyperparameters. Fields a kind does not use stay zero.
///
/// kConcat is the dual pooling stage of the classifier head: adaptive average
/// and adaptive max pooling to `out` x `out`, concatenated on channels.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int in = 0;        // channels / features
  int out = 0;       // channels / features / pooled size
  int kernel = 0;
  int stride = 0;
  int padding = 0;
  double p = 0.0;    // dropout probability
  double eps = 0.0;
  double momentum = 0.0;

  static LayerSpec conv2d(int in, int out, int kernel, int stride = 1, int padding = 0);
  static LayerSpec max_pool2d(int kernel, int stride);
  static LayerSpec adaptive_avg_pool(int out);
  static LayerSpec adaptive_max_pool(int out);
  static LayerSpec batch_norm2d(int channels, double eps = 1e-5, double momentum = 0.1);
  static LayerSpec batch_norm1d(int features, double eps = 1e-5, double momentum = 0.1);
  static LayerSpec dropout(double p);
  static LayerSpec linear(int in, int out);
  static LayerSpec relu();
  static LayerSpec flatten();
  static LayerSpec concat_pool(int out = 1);

  /// Throws ArgumentError on a non-positive or out-of-range hyperparameter.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class Mode { kTrain, kEval };

/// Per-forward state: mode and the generator dropout draws from.
struct ForwardContext {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;
  Exec exec = Exec::kParallel;

  bool training() const { return mode == Mode::kTrain; }
};

/// One layer instance: spec, learnable parameters and non-learnable buffers.
template <class T>
class Layer {
 public:
  /// Parameters are initialized from `rng` (He-uniform weights).
  Layer(const LayerSpec& spec, Rng& rng);

  const LayerSpec& spec() const { return spec_; }
  /// Eval-mode calls are read-only; train mode updates batchnorm buffers.
  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) const;

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  /// Running statistics (batchnorm only).
  std::vector<Tensor<T>>& buffers() { return buffers_; }
  const std::vector<Tensor<T>>& buffers() const { return buffers_; }

 private:
  LayerSpec spec_;
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> buffers_;
};

template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const std::vector<LayerSpec>& specs, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, ForwardContext& ctx) const;

  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<LayerSpec> specs() const;
  std::vector<Tensor<T>> parameters() const;
  /// Parameters and buffers of each layer, layer by layer, in declaration order.
  std::vector<Tensor<T>> state() const;
  std::size_t parameter_count() const;

 private:
  std::vector<Layer<T>> layers_;
};

}  // namespace gestigo::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gestigo/condense/raster.hpp"
#include "gestigo/nn/layers.hpp"

namespace gestigo::net {

using condense::RasterImage;

/// Architecture and data contract of an end-to-end ensemble-tuner model.
struct ModelConfig {
  int class_count = 14;
  int stream_count = 3;
  std::vector<int> encoder_widths{16, 32, 64, 128};
  std::vector<int> tuner_widths{8, 16};
  int head_hidden = 512;
  int tuner_hidden = 128;
  double pool_dropout = 0.25;
  double hidden_dropout = 0.5;
  std::vector<int> stage_sizes{224, 276, 328, 380};
  int pseudo_size = 224;
  /// Side of the condensed master images the stage inputs are downscaled from.
  int master_px = 960;

  std::string dataset;
  std::vector<std::string> vo_names;      // stream order
  std::vector<int> class_labels;          // dataset labels (1-based) of output classes
  std::vector<std::string> class_names;
  std::uint64_t seed = 17;

  /// Input side used for inference: the last progressive stage.
  int eval_size() const { return stage_sizes.back(); }

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  std::string to_header() const;
  static ModelConfig from_header(const std::string& text);
};

/// Multi-stream encoder + classifier head shared by every stream, a pseudo-
/// image fusion step, a lightweight tuner and the homoscedastic log-variances.
template <class T>
class E2eetModel {
 public:
  explicit E2eetModel(ModelConfig config);

  struct Output {
    std::vector<nn::Tensor<T>> stream_logits;
    std::vector<nn::Tensor<T>> stream_probs;
    nn::Tensor<T> pseudo;
    nn::Tensor<T> tuner_logits;
    nn::Tensor<T> tuner_probs;
  };

  /// `streams` are j tensors [B,3,S,S] in configured VO order; every stream
  /// runs through the same encoder and head objects.
  Output forward(const std::vector<nn::Tensor<T>>& streams, nn::ForwardContext& ctx) const;

  /// Tuner alone on a pseudo-image tensor [B,3,P,P].
  nn::Tensor<T> forward_tuner(const nn::Tensor<T>& pseudo, nn::ForwardContext& ctx) const;

  /// j stream losses followed by the tuner loss; labels are 0-based.
  std::vector<nn::Tensor<T>> losses(const Output& out, std::span<const int> labels) const;
  nn::Tensor<T> total_loss(const std::vector<nn::Tensor<T>>& losses) const;

  const ModelConfig& config() const { return config_; }
  const nn::Sequential<T>& encoder() const { return encoder_; }
  const nn::Sequential<T>& head() const { return head_; }
  const nn::Sequential<T>& tuner() const { return tuner_; }
  nn::Sequential<T>& encoder() { return encoder_; }
  nn::Sequential<T>& head() { return head_; }
  nn::Sequential<T>& tuner() { return tuner_; }
  /// s_k = log sigma_k^2, shape [j+1].
  const nn::Tensor<T>& log_vars() const { return log_vars_; }

  std::vector<nn::Tensor<T>> parameters() const;
  /// Every parameter and buffer in checkpoint order.
  std::vector<nn::Tensor<T>> state() const;
  std::vector<nn::LayerSpec> specs() const;
  std::size_t encoder_parameter_count() const;
  std::size_t tuner_parameter_count() const;

 private:
  ModelConfig config_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> head_;
  nn::Sequential<T> tuner_;
  nn::Tensor<T> log_vars_;
};

/// Layer list of a conv encoder: per width, 3x3 conv -> BN -> ReLU -> 2x2 max pool.
std::vector<nn::LayerSpec> encoder_specs(int in_channels, const std::vector<int>& widths);
/// concat(avg, max pool) -> flatten -> BN -> dropout -> linear -> ReLU -> BN -> dropout -> linear.
std::vector<nn::LayerSpec> head_specs(int features, int hidden, int classes, double pool_dropout,
                                      double hidden_dropout);

void save_model(const E2eetModel<float>& model, const std::filesystem::path& path);
/// Throws ConfigError when the stored layers do not match the header.
std::shared_ptr<E2eetModel<float>> load_model(const std::filesystem::path& path);

/// Copies every parameter and buffer of `src` into `dst` (same config).
template <class T, class U>
void copy_state(const E2eetModel<T>& src, E2eetModel<U>& dst);

/// 8-bit pseudo-image: bands per stream, cells per class, round(255 p).
/// Throws ArgumentError on malformed probability vectors.
RasterImage pseudo_image(const std::vector<std::vector<double>>& probs, int size);
/// Mean cell intensity / 255 per (stream, class).
std::vector<std::vector<double>> decode_pseudo_image(const RasterImage& image, int streams,
                                                     int classes);

/// Stacks images into [B,3,H,W] with values scaled to [0,1].
template <class T>
nn::Tensor<T> images_to_tensor(const std::vector<const RasterImage*>& images);

}  // namespace gestigo::net

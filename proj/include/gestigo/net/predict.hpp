// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gestigo/condense/geometry.hpp"
#include "gestigo/net/model.hpp"

namespace gestigo::net {

/// j per-stream probability vectors plus the tuner's; losses only when a label was given.
struct StreamPrediction {
  std::vector<std::vector<double>> per_stream_probs;
  std::vector<double> tuner_probs;
  std::vector<double> per_stream_losses;
  std::optional<double> tuner_loss;

  /// Argmax of the tuner vector; ties go to the lowest index.
  int decided_class() const;
};

/// Index of the largest entry, lowest index on ties.
int argmax(std::span<const double> values);

/// One sample = j images in stream order, already at the network input size.
using ViewSet = std::vector<const RasterImage*>;

/// Eval-mode forward in batches. Results do not depend on `batch_size`.
std::vector<StreamPrediction> infer(const E2eetModel<float>& model, const std::vector<ViewSet>& samples,
                                    std::span<const int> labels = {}, int batch_size = 32,
                                    nn::Exec exec = nn::Exec::kParallel);

/// Downscales master images to the model's eval size, then runs `infer`.
std::vector<StreamPrediction> infer_master(const E2eetModel<float>& model,
                                           const std::vector<ViewSet>& masters,
                                           std::span<const int> labels = {}, int batch_size = 32);

/// Camera poses for the model's configured VO order.
std::vector<condense::ViewOrientation> model_views(const ModelConfig& config);

/// Condenses the configured VOs at master size and runs both sub-networks.
/// Throws ConfigError when `vos` differs from the model's VO order.
StreamPrediction predict(const condense::SkeletonSequence& seq, const std::vector<condense::VoName>& vos,
                         const E2eetModel<float>& model, std::optional<int> label = std::nullopt);

/// Master-size images of one sequence for the model's VOs.
std::vector<RasterImage> condense_views(const condense::SkeletonSequence& seq, const ModelConfig& config);

}  // namespace gestigo::net

// SPDX-License-Identifier: Apache-2.0
#include "gestigo/net/predict.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gestigo/condense/render.hpp"
#include "gestigo/error.hpp"

namespace gestigo::net {

int argmax(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

int StreamPrediction::decided_class() const { return argmax(tuner_probs); }

namespace {

std::vector<double> row(const nn::Tensor<float>& t, int b) {
  const int n = t.dim(1);
  const auto d = t.data();
  return {d.begin() + static_cast<std::ptrdiff_t>(b) * n, d.begin() + static_cast<std::ptrdiff_t>(b + 1) * n};
}

}  // namespace

std::vector<StreamPrediction> infer(const E2eetModel<float>& model, const std::vector<ViewSet>& samples,
                                    std::span<const int> labels, int batch_size, nn::Exec exec) {
  const int j = model.config().stream_count;
  if (!labels.empty() && labels.size() != samples.size())
    throw ArgumentError(fmt::format("infer: {} labels for {} samples", labels.size(), samples.size()));
  if (batch_size < 1) throw ArgumentError("infer: batch size must be positive");
  for (const auto& s : samples)
    if (static_cast<int>(s.size()) != j)
      throw ArgumentError(fmt::format("infer: sample has {} views, model expects {}", s.size(), j));

  nn::NoGradGuard no_grad;
  nn::ForwardContext ctx{nn::Mode::kEval, nullptr, exec};
  std::vector<StreamPrediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<nn::Tensor<float>> streams;
    for (int k = 0; k < j; ++k) {
      std::vector<const RasterImage*> imgs;
      for (std::size_t i = start; i < end; ++i) imgs.push_back(samples[i][static_cast<std::size_t>(k)]);
      streams.push_back(images_to_tensor<float>(imgs));
    }
    const auto o = model.forward(streams, ctx);
    for (std::size_t i = start; i < end; ++i) {
      const int b = static_cast<int>(i - start);
      StreamPrediction p;
      for (int k = 0; k < j; ++k) p.per_stream_probs.push_back(row(o.stream_probs[static_cast<std::size_t>(k)], b));
      p.tuner_probs = row(o.tuner_probs, b);
      if (!labels.empty()) {
        const int y = labels[i];
        if (y < 0 || y >= model.config().class_count)
          throw ArgumentError(fmt::format("infer: label {} outside [0, {})", y, model.config().class_count));
        // Computed in double from the float probabilities.
        for (const auto& probs : p.per_stream_probs) p.per_stream_losses.push_back(-std::log(std::max(probs[static_cast<std::size_t>(y)], 1e-300)));
        p.tuner_loss = -std::log(std::max(p.tuner_probs[static_cast<std::size_t>(y)], 1e-300));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<StreamPrediction> infer_master(const E2eetModel<float>& model, const std::vector<ViewSet>& masters,
                                           std::span<const int> labels, int batch_size) {
  const int size = model.config().eval_size();
  std::vector<std::vector<RasterImage>> resized(masters.size());
  std::vector<ViewSet> views(masters.size());
  for (std::size_t i = 0; i < masters.size(); ++i) {
    for (const RasterImage* m : masters[i]) resized[i].push_back(condense::resize_area(*m, size, size));
    for (const auto& r : resized[i]) views[i].push_back(&r);
  }
  return infer(model, views, labels, batch_size);
}

std::vector<condense::ViewOrientation> model_views(const ModelConfig& config) {
  if (static_cast<int>(config.vo_names.size()) != config.stream_count)
    throw ConfigError("model has no VO sequence for its streams");
  const auto id = dataset::dataset_from_string(config.dataset);
  std::vector<condense::ViewOrientation> out;
  for (const auto& name : config.vo_names) out.push_back(condense::lookup_vo(id, condense::vo_from_string(name)));
  return out;
}

std::vector<RasterImage> condense_views(const condense::SkeletonSequence& seq, const ModelConfig& config) {
  const auto cfg = condense::RenderConfig::for_size(config.master_px);
  std::vector<RasterImage> out;
  for (const auto& vo : model_views(config)) out.push_back(condense::condense(seq, vo, cfg));
  return out;
}

StreamPrediction predict(const condense::SkeletonSequence& seq, const std::vector<condense::VoName>& vos,
                         const E2eetModel<float>& model, std::optional<int> label) {
  const auto& cfg = model.config();
  bool match = vos.size() == cfg.vo_names.size();
  for (std::size_t i = 0; match && i < vos.size(); ++i)
    match = condense::to_string(vos[i]) == condense::to_string(condense::vo_from_string(cfg.vo_names[i]));
  if (!match) {
    std::vector<std::string_view> got;
    for (auto v : vos) got.push_back(condense::to_string(v));
    throw ConfigError(fmt::format("VO sequence [{}] does not match the model's [{}]", fmt::join(got, ","),
                                  fmt::join(cfg.vo_names, ",")));
  }
  const auto masters = condense_views(seq, cfg);
  ViewSet views;
  for (const auto& m : masters) views.push_back(&m);
  std::vector<int> labels;
  if (label) labels.push_back(*label);
  return infer_master(model, {views}, labels, 1).front();
}

}  // namespace gestigo::net

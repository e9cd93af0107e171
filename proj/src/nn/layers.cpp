// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/layers.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kAdaptiveAvgPool: return "adaptive_avg_pool";
    case LayerKind::kAdaptiveMaxPool: return "adaptive_max_pool";
    case LayerKind::kBatchNorm2d: return "batchnorm2d";
    case LayerKind::kBatchNorm1d: return "batchnorm1d";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(int in, int out, int kernel, int stride, int padding) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.in = in;
  s.out = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::max_pool2d(int kernel, int stride) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2d;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::adaptive_avg_pool(int out) {
  LayerSpec s;
  s.kind = LayerKind::kAdaptiveAvgPool;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::adaptive_max_pool(int out) {
  LayerSpec s;
  s.kind = LayerKind::kAdaptiveMaxPool;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::batch_norm2d(int channels, double eps, double momentum) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm2d;
  s.in = s.out = channels;
  s.eps = eps;
  s.momentum = momentum;
  return s;
}

LayerSpec LayerSpec::batch_norm1d(int features, double eps, double momentum) {
  LayerSpec s = batch_norm2d(features, eps, momentum);
  s.kind = LayerKind::kBatchNorm1d;
  return s;
}

LayerSpec LayerSpec::dropout(double p) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.p = p;
  return s;
}

LayerSpec LayerSpec::linear(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::concat_pool(int out) {
  LayerSpec s;
  s.kind = LayerKind::kConcat;
  s.out = out;
  return s;
}

void LayerSpec::validate() const {
  const auto bad = [this](const char* what) {
    throw ArgumentError(fmt::format("layer {}: {}", describe(), what));
  };
  switch (kind) {
    case LayerKind::kConv2d:
      if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || padding < 0) bad("bad conv hyperparameters");
      break;
    case LayerKind::kMaxPool2d:
      if (kernel <= 0 || stride <= 0) bad("bad pool hyperparameters");
      break;
    case LayerKind::kAdaptiveAvgPool:
    case LayerKind::kAdaptiveMaxPool:
    case LayerKind::kConcat:
      if (out <= 0) bad("output size must be positive");
      break;
    case LayerKind::kBatchNorm2d:
    case LayerKind::kBatchNorm1d:
      if (in <= 0 || !(eps > 0.0) || !(momentum > 0.0 && momentum <= 1.0)) bad("bad batchnorm hyperparameters");
      break;
    case LayerKind::kDropout:
      if (!(p >= 0.0 && p < 1.0)) bad("drop probability outside [0,1)");
      break;
    case LayerKind::kLinear:
      if (in <= 0 || out <= 0) bad("features must be positive");
      break;
    case LayerKind::kRelu:
    case LayerKind::kFlatten:
      break;
  }
}

std::string LayerSpec::describe() const {
  switch (kind) {
    case LayerKind::kConv2d:
      return fmt::format("conv2d({}->{}, k={}, s={}, p={})", in, out, kernel, stride, padding);
    case LayerKind::kMaxPool2d: return fmt::format("maxpool2d(k={}, s={})", kernel, stride);
    case LayerKind::kAdaptiveAvgPool: return fmt::format("adaptive_avg_pool({})", out);
    case LayerKind::kAdaptiveMaxPool: return fmt::format("adaptive_max_pool({})", out);
    case LayerKind::kBatchNorm2d: return fmt::format("batchnorm2d({})", in);
    case LayerKind::kBatchNorm1d: return fmt::format("batchnorm1d({})", in);
    case LayerKind::kDropout: return fmt::format("dropout({})", p);
    case LayerKind::kLinear: return fmt::format("linear({}->{})", in, out);
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kConcat: return fmt::format("concat(avg,max pool {})", out);
  }
  return "?";
}

namespace {

template <class T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  auto t = Tensor<T>::zeros(shape, true);
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

template <class T>
Layer<T>::Layer(const LayerSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  switch (spec_.kind) {
    case LayerKind::kConv2d: {
      const double fan_in = static_cast<double>(spec_.in) * spec_.kernel * spec_.kernel;
      params_.push_back(uniform_tensor<T>({spec_.out, spec_.in, spec_.kernel, spec_.kernel},
                                          std::sqrt(6.0 / fan_in), rng));
      params_.push_back(uniform_tensor<T>({spec_.out}, 1.0 / std::sqrt(fan_in), rng));
      break;
    }
    case LayerKind::kLinear: {
      const double fan_in = spec_.in;
      params_.push_back(uniform_tensor<T>({spec_.out, spec_.in}, std::sqrt(6.0 / fan_in), rng));
      params_.push_back(uniform_tensor<T>({spec_.out}, 1.0 / std::sqrt(fan_in), rng));
      break;
    }
    case LayerKind::kBatchNorm2d:
    case LayerKind::kBatchNorm1d:
      params_.push_back(Tensor<T>::full({spec_.in}, T(1), true));
      params_.push_back(Tensor<T>::zeros({spec_.in}, true));
      buffers_.push_back(Tensor<T>::zeros({spec_.in}));
      buffers_.push_back(Tensor<T>::full({spec_.in}, T(1)));
      break;
    default:
      break;
  }
}

template <class T>
Tensor<T> Layer<T>::forward(const Tensor<T>& x, ForwardContext& ctx) const {
  const auto expect_channels = [&](std::size_t rank, int channels) {
    if (x.rank() != rank || x.dim(1) != channels)
      throw ShapeError(fmt::format("{}: input shape {} does not match", spec_.describe(),
                                   shape_string(x.shape())));
  };
  switch (spec_.kind) {
    case LayerKind::kConv2d:
      expect_channels(4, spec_.in);
      return conv2d(x, params_[0], params_[1], spec_.stride, spec_.padding, ctx.exec);
    case LayerKind::kMaxPool2d:
      return max_pool2d(x, spec_.kernel, spec_.stride);
    case LayerKind::kAdaptiveAvgPool:
      return adaptive_avg_pool2d(x, spec_.out, spec_.out);
    case LayerKind::kAdaptiveMaxPool:
      return adaptive_max_pool2d(x, spec_.out, spec_.out);
    case LayerKind::kBatchNorm2d:
    case LayerKind::kBatchNorm1d: {
      expect_channels(spec_.kind == LayerKind::kBatchNorm2d ? 4 : 2, spec_.in);
      Tensor<T> running_mean = buffers_[0];
      Tensor<T> running_var = buffers_[1];
      return batch_norm(x, params_[0], params_[1], running_mean, running_var, ctx.training(),
                        spec_.momentum, spec_.eps);
    }
    case LayerKind::kDropout: {
      if (!ctx.training() || spec_.p == 0.0) return x;
      if (!ctx.rng) throw ArgumentError("dropout in train mode needs a generator");
      return dropout(x, spec_.p, true, *ctx.rng);
    }
    case LayerKind::kLinear:
      expect_channels(2, spec_.in);
      return linear(x, params_[0], params_[1]);
    case LayerKind::kRelu:
      return relu(x);
    case LayerKind::kFlatten:
      return flatten(x);
    case LayerKind::kConcat:
      return concat<T>({adaptive_avg_pool2d(x, spec_.out, spec_.out),
                        adaptive_max_pool2d(x, spec_.out, spec_.out)});
  }
  throw ArgumentError("unknown layer kind");
}

template <class T>
Sequential<T>::Sequential(const std::vector<LayerSpec>& specs, Rng& rng) {
  layers_.reserve(specs.size());
  for (const auto& s : specs) layers_.emplace_back(s, rng);
}

template <class T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, ForwardContext& ctx) const {
  Tensor<T> h = x;
  for (const auto& layer : layers_) h = layer.forward(h, ctx);
  return h;
}

template <class T>
std::vector<LayerSpec> Sequential<T>::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec());
  return out;
}

template <class T>
std::vector<Tensor<T>> Sequential<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& l : layers_)
    for (const auto& p : l.parameters()) out.push_back(p);
  return out;
}

template <class T>
std::vector<Tensor<T>> Sequential<T>::state() const {
  std::vector<Tensor<T>> out;
  for (const auto& l : layers_) {
    for (const auto& p : l.parameters()) out.push_back(p);
    for (const auto& b : l.buffers()) out.push_back(b);
  }
  return out;
}

template <class T>
std::size_t Sequential<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template class Layer<float>;
template class Layer<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace gestigo::nn

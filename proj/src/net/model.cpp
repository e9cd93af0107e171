// SPDX-License-Identifier: Apache-2.0
#include "gestigo/net/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/nn/checkpoint.hpp"

namespace gestigo::net {

using nn::LayerSpec;
using nn::Tensor;

namespace {

constexpr std::string_view kHeaderFormat = "gestigo-e2eet";

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, const std::string& key) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(fmt::format("model header: {} is not an integer: '{}'", key, s));
  return v;
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(fmt::format("model header: {} is not a number: '{}'", key, s));
  return v;
}

std::vector<int> parse_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_int(part, key));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  const auto bad = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (class_count < 2) bad(fmt::format("class_count {} < 2", class_count));
  if (stream_count < 1 || stream_count > 3) bad(fmt::format("stream_count {} outside [1,3]", stream_count));
  if (encoder_widths.empty() || tuner_widths.empty()) bad("encoder widths must not be empty");
  for (int w : encoder_widths)
    if (w <= 0) bad("encoder widths must be positive");
  for (int w : tuner_widths)
    if (w <= 0) bad("tuner widths must be positive");
  if (head_hidden <= 0 || tuner_hidden <= 0) bad("hidden widths must be positive");
  if (!(pool_dropout >= 0 && pool_dropout < 1 && hidden_dropout >= 0 && hidden_dropout < 1))
    bad("dropout probabilities outside [0,1)");
  if (stage_sizes.empty()) bad("no stage sizes");
  const int min_input = 1 << encoder_widths.size();
  for (int s : stage_sizes)
    if (s < min_input) bad(fmt::format("stage size {} below {} for {} pooling blocks", s, min_input, encoder_widths.size()));
  const int min_pseudo = std::max({class_count, stream_count, 1 << tuner_widths.size()});
  if (pseudo_size < min_pseudo) bad(fmt::format("pseudo_size {} below {}", pseudo_size, min_pseudo));
  if (master_px <= 0) bad("master_px must be positive");
  if (!vo_names.empty() && static_cast<int>(vo_names.size()) != stream_count)
    bad(fmt::format("{} VO names for {} streams", vo_names.size(), stream_count));
  if (!class_labels.empty() && static_cast<int>(class_labels.size()) != class_count)
    bad(fmt::format("{} class labels for {} classes", class_labels.size(), class_count));
  if (!class_names.empty() && static_cast<int>(class_names.size()) != class_count)
    bad(fmt::format("{} class names for {} classes", class_names.size(), class_count));
}

std::string ModelConfig::to_header() const {
  std::ostringstream o;
  o << "format=" << kHeaderFormat << '\n';
  o << "classes=" << class_count << '\n';
  o << "streams=" << stream_count << '\n';
  o << "encoder_widths=" << fmt::format("{}", fmt::join(encoder_widths, ",")) << '\n';
  o << "tuner_widths=" << fmt::format("{}", fmt::join(tuner_widths, ",")) << '\n';
  o << "head_hidden=" << head_hidden << '\n';
  o << "tuner_hidden=" << tuner_hidden << '\n';
  o << "pool_dropout=" << fmt::format("{}", pool_dropout) << '\n';
  o << "hidden_dropout=" << fmt::format("{}", hidden_dropout) << '\n';
  o << "stage_sizes=" << fmt::format("{}", fmt::join(stage_sizes, ",")) << '\n';
  o << "pseudo_size=" << pseudo_size << '\n';
  o << "master_px=" << master_px << '\n';
  o << "dataset=" << dataset << '\n';
  o << "vos=" << fmt::format("{}", fmt::join(vo_names, ",")) << '\n';
  o << "class_labels=" << fmt::format("{}", fmt::join(class_labels, ",")) << '\n';
  o << "class_names=" << fmt::format("{}", fmt::join(class_names, "|")) << '\n';
  o << "seed=" << seed << '\n';
  return o.str();
}

ModelConfig ModelConfig::from_header(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("model header: malformed line '{}'", line));
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (kv["format"] != kHeaderFormat) throw ConfigError("model header: not an e2eET model");
  const auto need = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(fmt::format("model header: missing {}", key));
    return it->second;
  };
  ModelConfig c;
  c.class_count = parse_int(need("classes"), "classes");
  c.stream_count = parse_int(need("streams"), "streams");
  c.encoder_widths = parse_ints(need("encoder_widths"), "encoder_widths");
  c.tuner_widths = parse_ints(need("tuner_widths"), "tuner_widths");
  c.head_hidden = parse_int(need("head_hidden"), "head_hidden");
  c.tuner_hidden = parse_int(need("tuner_hidden"), "tuner_hidden");
  c.pool_dropout = parse_double(need("pool_dropout"), "pool_dropout");
  c.hidden_dropout = parse_double(need("hidden_dropout"), "hidden_dropout");
  c.stage_sizes = parse_ints(need("stage_sizes"), "stage_sizes");
  c.pseudo_size = parse_int(need("pseudo_size"), "pseudo_size");
  c.master_px = parse_int(need("master_px"), "master_px");
  c.dataset = need("dataset");
  c.vo_names = split(need("vos"), ',');
  c.class_labels = parse_ints(need("class_labels"), "class_labels");
  c.class_names = split(need("class_names"), '|');
  c.seed = static_cast<std::uint64_t>(std::stoull(need("seed")));
  c.validate();
  return c;
}

std::vector<LayerSpec> encoder_specs(int in_channels, const std::vector<int>& widths) {
  std::vector<LayerSpec> out;
  int c = in_channels;
  for (int w : widths) {
    out.push_back(LayerSpec::conv2d(c, w, 3, 1, 1));
    out.push_back(LayerSpec::batch_norm2d(w));
    out.push_back(LayerSpec::relu());
    out.push_back(LayerSpec::max_pool2d(2, 2));
    c = w;
  }
  return out;
}

std::vector<LayerSpec> head_specs(int features, int hidden, int classes, double pool_dropout,
                                  double hidden_dropout) {
  return {LayerSpec::concat_pool(1),
          LayerSpec::flatten(),
          LayerSpec::batch_norm1d(2 * features),
          LayerSpec::dropout(pool_dropout),
          LayerSpec::linear(2 * features, hidden),
          LayerSpec::relu(),
          LayerSpec::batch_norm1d(hidden),
          LayerSpec::dropout(hidden_dropout),
          LayerSpec::linear(hidden, classes)};
}

template <class T>
E2eetModel<T>::E2eetModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  encoder_ = nn::Sequential<T>(encoder_specs(3, config_.encoder_widths), rng);
  head_ = nn::Sequential<T>(head_specs(config_.encoder_widths.back(), config_.head_hidden,
                                       config_.class_count, config_.pool_dropout,
                                       config_.hidden_dropout),
                            rng);
  auto tuner = encoder_specs(3, config_.tuner_widths);
  for (const auto& s : head_specs(config_.tuner_widths.back(), config_.tuner_hidden,
                                  config_.class_count, config_.pool_dropout, config_.hidden_dropout))
    tuner.push_back(s);
  tuner_ = nn::Sequential<T>(tuner, rng);
  log_vars_ = Tensor<T>::zeros({config_.stream_count + 1}, true);
  if (tuner_parameter_count() >= encoder_parameter_count())
    throw ConfigError(fmt::format("tuner has {} parameters, not fewer than the encoder's {}",
                                  tuner_parameter_count(), encoder_parameter_count()));
}

template <class T>
typename E2eetModel<T>::Output E2eetModel<T>::forward(const std::vector<Tensor<T>>& streams,
                                                      nn::ForwardContext& ctx) const {
  if (static_cast<int>(streams.size()) != config_.stream_count)
    throw ArgumentError(fmt::format("model expects {} streams, got {}", config_.stream_count, streams.size()));
  for (const auto& s : streams)
    if (s.rank() != 4 || s.shape() != streams[0].shape() || s.dim(1) != 3 || s.dim(2) != s.dim(3))
      throw ArgumentError(fmt::format("stream input {} is not a batch of equal square RGB images",
                                      nn::shape_string(s.shape())));
  Output out;
  for (const auto& s : streams) {
    auto logits = head_.forward(encoder_.forward(s, ctx), ctx);
    out.stream_probs.push_back(nn::softmax(logits));
    out.stream_logits.push_back(std::move(logits));
  }
  out.pseudo = nn::probs_to_pseudo(out.stream_probs, config_.pseudo_size);
  out.tuner_logits = tuner_.forward(out.pseudo, ctx);
  out.tuner_probs = nn::softmax(out.tuner_logits);
  return out;
}

template <class T>
Tensor<T> E2eetModel<T>::forward_tuner(const Tensor<T>& pseudo, nn::ForwardContext& ctx) const {
  if (pseudo.rank() != 4 || pseudo.dim(1) != 3 || pseudo.dim(2) != config_.pseudo_size ||
      pseudo.dim(3) != config_.pseudo_size)
    throw ShapeError(fmt::format("tuner expects [B, 3, {0}, {0}], got {1}", config_.pseudo_size,
                                 nn::shape_string(pseudo.shape())));
  return nn::softmax(tuner_.forward(pseudo, ctx));
}

template <class T>
std::vector<Tensor<T>> E2eetModel<T>::losses(const Output& out, std::span<const int> labels) const {
  std::vector<Tensor<T>> ls;
  for (const auto& logits : out.stream_logits) ls.push_back(nn::cross_entropy(logits, labels));
  ls.push_back(nn::cross_entropy(out.tuner_logits, labels));
  return ls;
}

template <class T>
Tensor<T> E2eetModel<T>::total_loss(const std::vector<Tensor<T>>& losses) const {
  return nn::homoscedastic_loss(losses, log_vars_);
}

template <class T>
std::vector<Tensor<T>> E2eetModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto* seq : {&encoder_, &head_, &tuner_})
    for (const auto& p : seq->parameters()) out.push_back(p);
  out.push_back(log_vars_);
  return out;
}

template <class T>
std::vector<Tensor<T>> E2eetModel<T>::state() const {
  std::vector<Tensor<T>> out;
  for (const auto* seq : {&encoder_, &head_, &tuner_})
    for (const auto& p : seq->state()) out.push_back(p);
  out.push_back(log_vars_);
  return out;
}

template <class T>
std::vector<LayerSpec> E2eetModel<T>::specs() const {
  std::vector<LayerSpec> out;
  for (const auto* seq : {&encoder_, &head_, &tuner_})
    for (const auto& s : seq->specs()) out.push_back(s);
  return out;
}

template <class T>
std::size_t E2eetModel<T>::encoder_parameter_count() const {
  return encoder_.parameter_count();
}

template <class T>
std::size_t E2eetModel<T>::tuner_parameter_count() const {
  return tuner_.parameter_count();
}

void save_model(const E2eetModel<float>& model, const std::filesystem::path& path) {
  nn::write_checkpoint({model.config().to_header(), model.specs(), nn::save_tensors(model.state())}, path);
}

std::shared_ptr<E2eetModel<float>> load_model(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::read_checkpoint(path);
  auto model = std::make_shared<E2eetModel<float>>(ModelConfig::from_header(ckpt.header));
  if (ckpt.specs != model->specs())
    throw ConfigError(fmt::format("{}: stored layer list does not match the header", path.string()));
  auto state = model->state();
  nn::load_tensors(ckpt.tensors, state);
  return model;
}

template <class T, class U>
void copy_state(const E2eetModel<T>& src, E2eetModel<U>& dst) {
  auto a = src.state();
  auto b = dst.state();
  if (a.size() != b.size()) throw ConfigError("copy_state: models differ in structure");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) throw ConfigError("copy_state: tensor shapes differ");
    auto d = b[i].data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<U>(a[i].data()[k]);
  }
}

RasterImage pseudo_image(const std::vector<std::vector<double>>& probs, int size) {
  if (probs.empty()) throw ArgumentError("pseudo_image: no streams");
  const std::size_t n = probs[0].size();
  for (const auto& p : probs) {
    if (p.size() != n || n < 2) throw ArgumentError("pseudo_image: probability vectors differ in length");
    double s = 0.0;
    for (double v : p) {
      if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9)
        throw ArgumentError(fmt::format("pseudo_image: probability {} outside [0,1]", v));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-4) throw ArgumentError(fmt::format("pseudo_image: probabilities sum to {}", s));
  }
  const auto rows = nn::split_bounds(size, static_cast<int>(probs.size()));
  const auto cols = nn::split_bounds(size, static_cast<int>(n));
  RasterImage img(size, size);
  for (std::size_t j = 0; j < probs.size(); ++j)
    for (std::size_t c = 0; c < n; ++c) {
      const double v = std::clamp(probs[j][c], 0.0, 1.0);
      const auto level = static_cast<std::uint8_t>(std::lround(255.0 * v));
      for (int y = rows[j]; y < rows[j + 1]; ++y)
        for (int x = cols[c]; x < cols[c + 1]; ++x) img.set(x, y, {level, level, level});
    }
  return img;
}

std::vector<std::vector<double>> decode_pseudo_image(const RasterImage& image, int streams, int classes) {
  if (image.width() != image.height()) throw ShapeError("decode_pseudo_image: image is not square");
  const auto rows = nn::split_bounds(image.height(), streams);
  const auto cols = nn::split_bounds(image.width(), classes);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(streams), std::vector<double>(static_cast<std::size_t>(classes)));
  for (int j = 0; j < streams; ++j)
    for (int c = 0; c < classes; ++c) {
      double s = 0.0;
      std::size_t count = 0;
      for (int y = rows[static_cast<std::size_t>(j)]; y < rows[static_cast<std::size_t>(j) + 1]; ++y)
        for (int x = cols[static_cast<std::size_t>(c)]; x < cols[static_cast<std::size_t>(c) + 1]; ++x) {
          const auto px = image.at(x, y);
          s += (px.r + px.g + px.b) / 3.0;
          ++count;
        }
      out[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = s / static_cast<double>(count) / 255.0;
    }
  return out;
}

template <class T>
Tensor<T> images_to_tensor(const std::vector<const RasterImage*>& images) {
  if (images.empty()) throw ArgumentError("images_to_tensor: empty batch");
  const int h = images[0]->height();
  const int w = images[0]->width();
  auto t = Tensor<T>::zeros({static_cast<int>(images.size()), 3, h, w});
  auto d = t.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->height() != h || images[b]->width() != w)
      throw ShapeError(fmt::format("images_to_tensor: image {} is {}x{}, expected {}x{}", b,
                                   images[b]->width(), images[b]->height(), w, h));
    const auto px = images[b]->pixels();
    T* out = d.data() + b * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<T>(px[i * 3 + c]) / T(255);
  }
  return t;
}

template class E2eetModel<float>;
template class E2eetModel<double>;
template void copy_state(const E2eetModel<float>&, E2eetModel<double>&);
template void copy_state(const E2eetModel<double>&, E2eetModel<float>&);
template void copy_state(const E2eetModel<float>&, E2eetModel<float>&);
template Tensor<float> images_to_tensor(const std::vector<const RasterImage*>&);
template Tensor<double> images_to_tensor(const std::vector<const RasterImage*>&);

}  // namespace gestigo::net

#include <cmath>
#include <set>

#include "doctest.h"
#include "gestigo/error.hpp"
#include "gestigo/net/augment.hpp"
#include "gestigo/net/model.hpp"
#include "gestigo/net/predict.hpp"
#include "gestigo/net/train.hpp"
#include "gestigo/nn/ops.hpp"
#include "gestigo/synth/generator.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

using namespace gestigo;
using namespace gestigo::net;
using gestigo::testing::TempDir;
using nn::Tensor;

namespace {

ModelConfig tiny_config(int classes, int streams) {
  ModelConfig c;
  c.class_count = classes;
  c.stream_count = streams;
  c.encoder_widths = {4, 6};
  c.tuner_widths = {2};
  c.head_hidden = 8;
  c.tuner_hidden = 4;
  c.stage_sizes = {12, 16};
  c.pseudo_size = 8;
  c.master_px = 32;
  c.seed = 3;
  return c;
}

RasterImage noise_image(int size, Rng& rng) {
  RasterImage img(size, size);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Smooth test card: gradients plus a disc, so resampling errors stay small.
RasterImage smooth_image(int size) {
  RasterImage img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - size / 2.0, dy = y - size / 2.0;
      const double r = std::sqrt(dx * dx + dy * dy) / size;
      img.set(x, y,
              {static_cast<std::uint8_t>(255.0 * x / size), static_cast<std::uint8_t>(255.0 * y / size),
               static_cast<std::uint8_t>(std::clamp(255.0 * (0.6 - r), 0.0, 255.0))});
    }
  return img;
}

std::vector<double> random_simplex(int n, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double s = 0.0;
  for (auto& v : p) s += v = -std::log(1.0 - rng.uniform());
  for (auto& v : p) v /= s;
  return p;
}

// Band/cell layout: equal spans, remainder to the last one.
std::pair<int, int> span_of(int index, int parts, int total) {
  const int w = total / parts;
  return {index * w, index == parts - 1 ? total : (index + 1) * w};
}

Tensor<double> to_double(const Tensor<float>& t) {
  std::vector<double> d(t.data().begin(), t.data().end());
  return Tensor<double>::from(t.shape(), std::move(d));
}

}  // namespace

TEST_CASE("model header round trip and validation") {
  ModelConfig c = tiny_config(5, 3);
  c.dataset = "LMDHG";
  c.vo_names = {"custom", "top-down", "front-away"};
  c.class_labels = {1, 3, 5, 7, 9};
  c.class_names = {"a b", "c", "d", "e", "f"};
  c.pool_dropout = 0.125;
  const auto back = ModelConfig::from_header(c.to_header());
  CHECK(back.to_header() == c.to_header());
  CHECK(back.class_names == c.class_names);
  CHECK(back.pool_dropout == c.pool_dropout);
  CHECK(back.eval_size() == 16);

  auto expect_bad = [](ModelConfig m) { CHECK_THROWS_AS(m.validate(), ConfigError); };
  ModelConfig m = c;
  m.class_count = 1;
  expect_bad(m);
  m = c;
  m.stream_count = 4;
  expect_bad(m);
  m = c;
  m.hidden_dropout = 1.0;
  expect_bad(m);
  m = c;
  m.stage_sizes = {3};
  expect_bad(m);
  m = c;
  m.pseudo_size = 4;
  expect_bad(m);
  m = c;
  m.vo_names = {"custom"};
  expect_bad(m);
  CHECK_THROWS_AS(ModelConfig::from_header("format=gestigo-e2eet\nclasses=3\n"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_header("nonsense"), ConfigError);
}

TEST_CASE("pseudo-image round trip stays within one gray level") {
  Rng rng(2024);
  for (int j : {1, 2, 3})
    for (int n : {2, 14, 28, 45})
      for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::vector<double>> probs;
        for (int k = 0; k < j; ++k) probs.push_back(random_simplex(n, rng));
        const auto img = pseudo_image(probs, 224);
        const auto back = decode_pseudo_image(img, j, n);
        double worst = 0.0;
        for (int k = 0; k < j; ++k)
          for (int c = 0; c < n; ++c)
            worst = std::max(worst, std::abs(back[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] -
                                             probs[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)]));
        REQUIRE(worst <= 1.0 / 255.0);
      }
}

TEST_CASE("pseudo-image layout") {
  const auto img = pseudo_image({{1.0, 0.0}}, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) CHECK(img.at(x, y).g == (x < 5 ? 255 : 0));

  std::vector<std::vector<double>> uniform(3, std::vector<double>(7, 1.0 / 7.0));
  const auto gray = pseudo_image(uniform, 30);
  for (auto v : gray.pixels()) CHECK(v == 36);

  Rng rng(4);
  std::vector<std::vector<double>> probs;
  for (int k = 0; k < 3; ++k) probs.push_back(random_simplex(5, rng));
  const int size = 23;
  const auto p = pseudo_image(probs, size);
  for (int k = 0; k < 3; ++k) {
    const auto [y0, y1] = span_of(k, 3, size);
    for (int c = 0; c < 5; ++c) {
      const auto [x0, x1] = span_of(c, 5, size);
      const auto want = static_cast<std::uint8_t>(std::lround(255.0 * probs[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)]));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) CHECK(p.at(x, y) == dataset::Rgb{want, want, want});
    }
  }
  CHECK_THROWS_AS(pseudo_image({{0.5, 0.6}}, 8), ArgumentError);
  CHECK_THROWS_AS(pseudo_image({{1.5, -0.5}}, 8), ArgumentError);
  CHECK_THROWS_AS(pseudo_image({{0.5, 0.5}, {1.0}}, 8), ArgumentError);
  CHECK_THROWS_AS(pseudo_image({}, 8), ArgumentError);
}

TEST_CASE("float pseudo tensor agrees with the 8-bit image") {
  Rng rng(9);
  std::vector<Tensor<double>> probs;
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 2; ++k) {
    rows.push_back(random_simplex(6, rng));
    probs.push_back(Tensor<double>::from({1, 6}, rows.back()));
  }
  const auto t = nn::probs_to_pseudo(probs, 17);
  const auto img = pseudo_image(rows, 17);
  for (int y = 0; y < 17; ++y)
    for (int x = 0; x < 17; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = t.data()[static_cast<std::size_t>((ch * 17 + y) * 17 + x)];
        CHECK(std::lround(255.0 * v) == img.at(x, y).r);
      }
}

TEST_CASE("homoscedastic loss closed forms") {
  Rng rng(12);
  E2eetModel<double> model(tiny_config(4, 3));
  std::vector<Tensor<double>> losses;
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double v = rng.uniform(0.1, 4.0);
    sum += v;
    losses.push_back(Tensor<double>::from({1}, {v}));
  }
  CHECK(std::abs(model.total_loss(losses).item() - sum) <= 1e-7);

  // With s = ln L the objective is stationary in s and equals 1 + ln L per term.
  std::vector<double> s0;
  double want = 0.0;
  for (const auto& l : losses) {
    s0.push_back(std::log(l.item()));
    want += 1.0 + std::log(l.item());
  }
  auto s = Tensor<double>::from({4}, s0, true);
  auto total = nn::homoscedastic_loss(losses, s);
  CHECK(total.item() == doctest::Approx(want).epsilon(1e-12));
  nn::backward(total);
  for (double g : s.grad()) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("full model gradients match finite differences in float64") {
  ModelConfig c = tiny_config(3, 2);
  c.pool_dropout = 0.2;
  c.hidden_dropout = 0.3;
  E2eetModel<double> model(c);
  Rng rng(31);
  std::vector<Tensor<double>> streams;
  for (int k = 0; k < 2; ++k) streams.push_back(gestigo::testing::random_tensor({4, 3, 12, 12}, rng, 0.0, 1.0, false));
  const std::vector<int> labels{0, 2, 1, 2};
  auto params = model.parameters();
  for (auto& p : params)
    for (auto& v : p.storage()) v += rng.uniform(-0.05, 0.05);
  const auto loss = [&] {
    Rng drop(77);
    nn::ForwardContext ctx{nn::Mode::kTrain, &drop, nn::Exec::kParallel};
    const auto out = model.forward(streams, ctx);
    return model.total_loss(model.losses(out, labels));
  };
  const auto r = gestigo::testing::grad_check(loss, params, 3, 5, 1e-5);
  CAPTURE(r.worst);
  CHECK(r.probes >= 5);
  CHECK(r.ok());
}

TEST_CASE("streams share one encoder and every parameter learns") {
  const ModelConfig c = tiny_config(3, 2);
  E2eetModel<double> model(c);
  std::set<const double*> seen;
  for (const auto& p : model.parameters()) CHECK(seen.insert(p.data().data()).second);
  std::size_t shared = 0;
  for (const auto& p : model.encoder().parameters()) shared += seen.count(p.data().data());
  CHECK(shared == model.encoder().parameters().size());
  CHECK(model.tuner_parameter_count() < model.encoder_parameter_count());

  Rng rng(8);
  std::vector<Tensor<double>> streams;
  for (int k = 0; k < 2; ++k) streams.push_back(gestigo::testing::random_tensor({3, 3, 12, 12}, rng, 0.0, 1.0, false));
  const std::vector<int> labels{0, 1, 2};
  auto grads_of = [&](int which) {
    for (auto& p : model.parameters()) p.zero_grad();
    Rng drop(1);
    nn::ForwardContext ctx{nn::Mode::kTrain, &drop, nn::Exec::kParallel};
    const auto out = model.forward(streams, ctx);
    auto ls = model.losses(out, labels);
    auto l = which < 0 ? model.total_loss(ls) : ls[static_cast<std::size_t>(which)];
    nn::backward(l);
    std::vector<std::vector<double>> g;
    for (auto& p : model.encoder().parameters())
      g.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                  : std::vector<double>(p.numel(), 0.0));
    return g;
  };
  const auto g0 = grads_of(0);
  const auto g1 = grads_of(1);
  // Both streams push gradient into the same encoder weights.
  double n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < g0.size(); ++i)
    for (std::size_t e = 0; e < g0[i].size(); ++e) {
      n0 += std::abs(g0[i][e]);
      n1 += std::abs(g1[i][e]);
    }
  CHECK(n0 > 0.0);
  CHECK(n1 > 0.0);

  grads_of(-1);
  for (auto& p : model.parameters()) {
    REQUIRE(p.has_grad());
    double n = 0.0;
    for (double g : p.grad()) n += std::abs(g);
    CHECK(n > 0.0);
  }
}

TEST_CASE("forward contracts") {
  E2eetModel<float> model(tiny_config(4, 3));
  Rng rng(5);
  RasterImage a = noise_image(16, rng), b = noise_image(16, rng), c = noise_image(16, rng);
  nn::ForwardContext ctx;
  std::vector<Tensor<float>> streams{images_to_tensor<float>({&a}), images_to_tensor<float>({&b}),
                                     images_to_tensor<float>({&c})};
  const auto out = model.forward(streams, ctx);
  CHECK(out.stream_probs.size() == 3);
  CHECK(out.pseudo.shape() == nn::Shape{1, 3, 8, 8});
  CHECK(out.tuner_probs.shape() == nn::Shape{1, 4});
  streams.pop_back();
  CHECK_THROWS_AS(model.forward(streams, ctx), ArgumentError);
  CHECK_THROWS_AS(model.forward_tuner(Tensor<float>::zeros({1, 3, 9, 9}), ctx), ShapeError);
  // Fully convolutional: any input size large enough for the pools works.
  RasterImage big = noise_image(40, rng);
  CHECK_NOTHROW(model.forward({images_to_tensor<float>({&big}), images_to_tensor<float>({&big}),
                               images_to_tensor<float>({&big})},
                              ctx));
  const auto t = images_to_tensor<float>({&a});
  CHECK(t.data()[0] == doctest::Approx(a.at(0, 0).r / 255.0));
  CHECK(t.data()[16 * 16] == doctest::Approx(a.at(0, 0).g / 255.0));
  CHECK_THROWS_AS(images_to_tensor<float>({&a, &big}), ShapeError);
}

TEST_CASE("inference is deterministic and batch invariant") {
  ModelConfig cfg = tiny_config(5, 3);
  cfg.dataset = "DHG1428_14G";
  cfg.vo_names = {"custom", "top-down", "front-away"};
  E2eetModel<float> model(cfg);
  Rng rng(6);
  std::vector<RasterImage> images;
  for (int i = 0; i < 21; ++i) images.push_back(noise_image(16, rng));
  std::vector<ViewSet> samples;
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) {
    samples.push_back({&images[static_cast<std::size_t>(3 * i)], &images[static_cast<std::size_t>(3 * i + 1)],
                       &images[static_cast<std::size_t>(3 * i + 2)]});
    labels.push_back(i % 5);
  }
  const auto a = infer(model, samples, labels, 32);
  const auto b = infer(model, samples, labels, 1);
  const auto c = infer(model, samples, labels, 3, nn::Exec::kSerial);
  REQUIRE(a.size() == 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].per_stream_probs.size() == 3);
    CHECK(a[i].tuner_probs == b[i].tuner_probs);
    CHECK(a[i].per_stream_probs == b[i].per_stream_probs);
    for (std::size_t k = 0; k < a[i].tuner_probs.size(); ++k)
      CHECK(a[i].tuner_probs[k] == doctest::Approx(c[i].tuner_probs[k]).epsilon(1e-5));
    CHECK(a[i].tuner_loss.has_value());
    CHECK(*a[i].tuner_loss == doctest::Approx(-std::log(a[i].tuner_probs[static_cast<std::size_t>(labels[i])])));
    double s = 0.0;
    for (double p : a[i].tuner_probs) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_FALSE(infer(model, samples)[0].tuner_loss.has_value());

  const auto seq = synth::dhg_gesture(4, 1, 2, 1, 17, 4);
  using condense::VoName;
  const std::vector<VoName> vos{VoName::kCustom, VoName::kTopDown, VoName::kFrontAway};
  const auto p1 = predict(seq, vos, model, 2);
  const auto p2 = predict(seq, vos, model, 2);
  CHECK(p1.tuner_probs == p2.tuner_probs);
  CHECK(p1.per_stream_losses.size() == 3);
  CHECK(p1.decided_class() == argmax(p1.tuner_probs));
  CHECK_THROWS_AS(predict(seq, {VoName::kTopDown, VoName::kCustom, VoName::kFrontAway}, model),
                  ConfigError);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("save and load are bit exact") {
  TempDir tmp("ckpt");
  ModelConfig cfg = tiny_config(3, 2);
  cfg.dataset = "LMDHG";
  cfg.vo_names = {"custom", "top-down"};
  cfg.class_names = {"x", "y", "z"};
  cfg.class_labels = {2, 4, 6};
  E2eetModel<float> model(cfg);
  Rng rng(2);
  for (auto& p : model.parameters())
    for (auto& v : p.storage()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
  save_model(model, tmp.path() / "m.ckpt");
  const auto back = load_model(tmp.path() / "m.ckpt");
  CHECK(back->config().to_header() == cfg.to_header());
  const auto s1 = model.state();
  const auto s2 = back->state();
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    REQUIRE(s1[i].numel() == s2[i].numel());
    CHECK(std::equal(s1[i].data().begin(), s1[i].data().end(), s2[i].data().begin()));
  }

  E2eetModel<double> shadow(cfg);
  copy_state(model, shadow);
  RasterImage img = noise_image(16, rng);
  nn::ForwardContext ctx;
  const auto f = model.forward({images_to_tensor<float>({&img}), images_to_tensor<float>({&img})}, ctx);
  const auto d = shadow.forward({images_to_tensor<double>({&img}), images_to_tensor<double>({&img})}, ctx);
  const auto fd = to_double(f.tuner_probs);
  for (std::size_t i = 0; i < fd.numel(); ++i) CHECK(fd.data()[i] == doctest::Approx(d.tuner_probs.data()[i]).epsilon(1e-4));

  ModelConfig other = cfg;
  other.encoder_widths = {4, 6, 8};
  E2eetModel<double> mismatch(other);
  CHECK_THROWS_AS(copy_state(model, mismatch), ConfigError);
}

TEST_CASE("augmentation geometry") {
  const RasterImage img = smooth_image(64);
  AugmentPlan none;
  CHECK(apply(img, none) == img);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(flip_horizontal(img).at(0, 5) == img.at(63, 5));
  CHECK(warp(img, identity_homography()) == img);
  CHECK(adjust_color(img, 1.0, 1.0) == img);

  const auto back = rotate(rotate(img, 12.0), -12.0);
  double diff = 0.0;
  int n = 0;
  for (int y = 16; y < 48; ++y)
    for (int x = 16; x < 48; ++x)
      for (int ch = 0; ch < 3; ++ch, ++n)
        diff += std::abs(static_cast<int>(back.pixels()[static_cast<std::size_t>(3 * (y * 64 + x) + ch)]) -
                         static_cast<int>(img.pixels()[static_cast<std::size_t>(3 * (y * 64 + x) + ch)]));
  CHECK(diff / n < 4.0);

  const auto h = compose(rotation_homography(20.0), affine_homography(1.1, 0.05, -0.02));
  const auto hi = compose(h, invert(h));
  for (int i = 0; i < 9; ++i) CHECK(hi[static_cast<std::size_t>(i)] / hi[8] == doctest::Approx(identity_homography()[static_cast<std::size_t>(i)]).epsilon(1e-12));

  const std::array<double, 8> corners{0.1, 0.0, 0.9, 0.1, 1.0, 0.95, 0.0, 0.8};
  const auto ph = perspective_homography(corners);
  const double unit[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (int k = 0; k < 4; ++k) {
    const double x = unit[k][0], y = unit[k][1];
    const double w = ph[6] * x + ph[7] * y + ph[8];
    CHECK((ph[0] * x + ph[1] * y + ph[2]) / w == doctest::Approx(corners[static_cast<std::size_t>(2 * k)]));
    CHECK((ph[3] * x + ph[4] * y + ph[5]) / w == doctest::Approx(corners[static_cast<std::size_t>(2 * k + 1)]));
  }

  AugmentConfig cfg;
  const auto p1 = plan_augment(99, cfg);
  const auto p2 = plan_augment(99, cfg);
  CHECK(p1.flip == p2.flip);
  CHECK(p1.warp == p2.warp);
  CHECK(apply(img, p1) == apply(img, p2));
  cfg.enabled = false;
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(apply(img, plan_augment(s, cfg)) == img);
}

TEST_CASE("color jitter keeps the mean under contrast changes") {
  const RasterImage img = smooth_image(32);
  auto mean = [](const RasterImage& im) {
    double s = 0.0;
    for (auto v : im.pixels()) s += v;
    return s / static_cast<double>(im.pixels().size());
  };
  CHECK(mean(adjust_color(img, 1.0, 0.9)) == doctest::Approx(mean(img)).epsilon(0.01));
  CHECK(mean(adjust_color(img, 0.9, 1.0)) == doctest::Approx(0.9 * mean(img)).epsilon(0.02));
}

TEST_CASE("class index remapping") {
  CHECK(class_index(1, {}) == 0);
  CHECK(class_index(14, {}) == 13);
  CHECK(class_index(9, {7, 8, 9}) == 2);
  CHECK(class_index(3, {7, 8, 9}) == -1);
}

TEST_CASE("a separable two-class problem is learned") {
  ModelConfig cfg = tiny_config(2, 1);
  cfg.encoder_widths = {8, 16};
  cfg.head_hidden = 16;
  cfg.pool_dropout = 0.0;
  cfg.hidden_dropout = 0.0;
  E2eetModel<float> model(cfg);
  Rng rng(40);
  auto make = [&](int label) {
    RasterImage img(32, 32, {16, 16, 16});
    const int cx = 4 + static_cast<int>(rng.below(24));
    const int cy = 4 + static_cast<int>(rng.below(24));
    const dataset::Rgb color = label == 0 ? dataset::Rgb{240, 60, 40} : dataset::Rgb{40, 80, 240};
    for (int y = std::max(0, cy - 3); y < std::min(32, cy + 4); ++y)
      for (int x = std::max(0, cx - 3); x < std::min(32, cx + 4); ++x) img.set(x, y, color);
    Sample s;
    s.views.push_back(img);
    s.label = label;
    return s;
  };
  SampleSet data;
  for (int i = 0; i < 96; ++i) data.train.push_back(make(i % 2));
  for (int i = 0; i < 40; ++i) data.val.push_back(make(i % 2));
  TrainConfig tc;
  tc.epochs_per_stage = 5;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  tc.augment.enabled = false;
  const auto report = train(model, data, tc);
  CHECK(report.epochs.size() == 10);
  CHECK(report.chosen_lr == 3e-3);
  CHECK(report.best_val_accuracy >= 0.95);
  const auto acc = accuracy_at(model, data.val, cfg.eval_size());
  CHECK(acc.streams.size() == 1);
  CHECK(acc.tuner == doctest::Approx(report.epochs[report.best_epoch].val_accuracy));
  CHECK(summary_header(1).find('\t') != std::string::npos);
}

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gestigo/condense/encode.hpp"
#include "gestigo/condense/geometry.hpp"
#include "gestigo/condense/png_io.hpp"
#include "gestigo/condense/raster.hpp"
#include "gestigo/condense/render.hpp"
#include "gestigo/error.hpp"
#include "gestigo/rng.hpp"
#include "gestigo/synth/generator.hpp"
#include "tempdir.hpp"

using namespace gestigo;
using namespace gestigo::condense;
using dataset::DatasetId;
using gestigo::testing::TempDir;

namespace {

// Linear interpolation at real-valued source position, long double.
std::vector<Vec3> oracle_resample(std::span<const Vec3> src, std::size_t joints, std::size_t out) {
  const std::size_t n = src.size() / joints;
  std::vector<Vec3> r(out * joints);
  for (std::size_t k = 0; k < out; ++k) {
    const long double u = static_cast<long double>(k) * static_cast<long double>(n - 1) /
                          static_cast<long double>(out - 1);
    std::size_t i = static_cast<std::size_t>(std::floor(u));
    if (i >= n - 1) i = n - 2;
    const long double w = u - static_cast<long double>(i);
    for (std::size_t j = 0; j < joints; ++j)
      for (int a = 0; a < 3; ++a) {
        const long double p = src[i * joints + j][a];
        const long double q = src[(i + 1) * joints + j][a];
        r[k * joints + j][a] = static_cast<double>((1.0L - w) * p + w * q);
      }
  }
  return r;
}

SkeletonSequence translated(const SkeletonSequence& s, Vec3 d) {
  std::vector<Vec3> c(s.coords().begin(), s.coords().end());
  for (auto& v : c) {
    v.x += d.x;
    v.y += d.y;
    v.z += d.z;
  }
  return s.with_coords(std::move(c));
}

}  // namespace

TEST_CASE("resample matches an independent interpolation") {
  Rng rng(1234);
  const auto schema = dataset::dhg22_schema();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t frames = 2 + rng.below(400);
    const auto seq = synth::random_sequence(schema, frames, rng.next(), rng.uniform(0.01, 3.0));
    const auto out = resample_sequence(seq, 250);
    REQUIRE(out.frame_count() == 250);
    const auto want = oracle_resample(seq.coords(), seq.joint_count(), 250);
    const auto got = out.coords();
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
      for (int a = 0; a < 3; ++a) {
        const double scale = std::max(1.0, std::abs(want[i][a]));
        worst = std::max(worst, std::abs(got[i][a] - want[i][a]) / scale);
      }
    CHECK(worst <= 1e-12);
    for (std::size_t j = 0; j < seq.joint_count(); ++j) {
      CHECK(out.frame(0)[j] == seq.frame(0)[j]);
      CHECK(out.frame(249)[j] == seq.frame(frames - 1)[j]);
    }
  }
  CHECK_THROWS_AS(resample_sequence(synth::random_sequence(schema, 5, 1), 1), ArgumentError);
}

TEST_CASE("camera basis is a proper rotation") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const ViewOrientation vo{VoName::kCustom, rng.uniform(-180, 180), rng.uniform(-360, 360)};
    const Mat3 b = camera_basis(vo);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += b.m[r][k] * b.m[c][k];
        CHECK(dot == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-12));
      }
    CHECK(b.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Mat3 id = camera_basis({VoName::kTopDown, 0.0, 0.0});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(id.m[r][c] == (r == c ? 1.0 : 0.0));
  // Azimuth 90 turns world +z into camera right.
  const Mat3 side = camera_basis({VoName::kSideLeft, 0.0, 90.0});
  CHECK(side.apply({0, 0, 1}).x == doctest::Approx(1.0));
  // Elevation 90 looks straight down: world +z becomes camera up.
  const Mat3 down = camera_basis({VoName::kFrontTo, 90.0, 0.0});
  CHECK(down.apply({0, 0, 1}).y == doctest::Approx(-1.0));
  CHECK(down.apply({0, 1, 0}).z == doctest::Approx(1.0));
  CHECK_THROWS_AS(camera_basis({VoName::kCustom, std::nan(""), 0.0}), ArgumentError);
}

TEST_CASE("VO tables and lists") {
  for (auto id : dataset::all_datasets()) {
    const auto t = vo_table(id);
    for (std::size_t i = 0; i < 6; ++i) CHECK(t[i].name == all_vo_names()[i]);
  }
  const auto dhg = vo_table(DatasetId::kDhg1428_14G);
  CHECK(dhg[5].elevation_deg == 30.0);
  CHECK(dhg[5].azimuth_deg == -132.5);
  CHECK(vo_from_string("axonometric") == VoName::kCustom);
  CHECK_THROWS_AS(vo_from_string("sideways"), ArgumentError);
  const auto list = parse_vo_list(DatasetId::kLmdhg, "custom,top-down,front-away");
  REQUIRE(list.size() == 3);
  CHECK(list[0].name == VoName::kCustom);
  CHECK(list[2].name == VoName::kFrontAway);
  CHECK(parse_vo_list(DatasetId::kFpha, "all").size() == 6);
  CHECK_THROWS_AS(parse_vo_list(DatasetId::kFpha, "custom,custom"), ArgumentError);
  CHECK_THROWS_AS(parse_vo_list(DatasetId::kFpha, "custom,"), ArgumentError);
  for (VoName v : all_vo_names()) CHECK(vo_from_string(to_string(v)) == v);
}

TEST_CASE("fit centers the gesture and sizes the view") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto seq = synth::random_sequence(dataset::lmdhg46_schema(), 3 + rng.below(60),
                                            rng.next(), rng.uniform(0.05, 2.0));
    const double gamma = 0.125;
    const auto fit = fit_sequence(seq, 1.0, gamma);
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    long double mean[3] = {0, 0, 0};
    for (const auto& v : seq.coords())
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], v[a]);
        hi[a] = std::max(hi[a], v[a]);
      }
    for (const auto& v : fit.centered.coords())
      for (int a = 0; a < 3; ++a) mean[a] += v[a];
    double max_extent = 0.0;
    for (int a = 0; a < 3; ++a) {
      CHECK(fit.extent[a] == doctest::Approx(hi[a] - lo[a]).epsilon(1e-12));
      max_extent = std::max(max_extent, hi[a] - lo[a]);
      const double m = static_cast<double>(mean[a] / fit.centered.coords().size());
      CHECK(m == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(fit.target[a] == 0.5);
    }
    CHECK(fit.zoom == doctest::Approx(max_extent + gamma).epsilon(1e-12));
  }
  CHECK_THROWS_AS(fit_sequence(synth::random_sequence(dataset::dhg22_schema(), 4, 1), 0.0, 0.1),
                  ArgumentError);
  CHECK_THROWS_AS(fit_sequence(synth::random_sequence(dataset::dhg22_schema(), 4, 1), 1.0, -0.1),
                  ArgumentError);
}

TEST_CASE("gesture centroid projects to the image center and joints stay on canvas") {
  const int px = 960;
  for (int g = 1; g <= 14; ++g) {
    const auto seq = resample_sequence(synth::dhg_gesture(g, 1 + g % 2, 1 + g % 5, 1, 17, g), 250);
    const auto fit = fit_sequence(seq, 1.0, 0.125);
    for (const auto& vo : vo_table(DatasetId::kDhg1428_14G)) {
      Vec3 c;
      for (const auto& v : fit.centered.coords())
        for (int a = 0; a < 3; ++a) c[a] += v[a];
      for (int a = 0; a < 3; ++a) c[a] /= static_cast<double>(fit.centered.coords().size());
      const auto p = project(std::span<const Vec3>(&c, 1), fit, vo, px)[0];
      CHECK(std::abs(p.x - px / 2.0) <= 0.5);
      CHECK(std::abs(p.y - px / 2.0) <= 0.5);
      for (const auto& q : project(fit.centered.coords(), fit, vo, px)) {
        CHECK(q.x >= 0.0);
        CHECK(q.x <= px);
        CHECK(q.y >= 0.0);
        CHECK(q.y <= px);
      }
    }
  }
}

TEST_CASE("projection matches a hand-built orthographic camera") {
  const auto seq = synth::random_sequence(dataset::dhg22_schema(), 10, 9, 0.4);
  const auto fit = fit_sequence(seq, 1.0, 0.125);
  const ViewOrientation vo{VoName::kCustom, 30.0, -132.5};
  const double el = 30.0 * std::numbers::pi / 180, az = -132.5 * std::numbers::pi / 180;
  // Camera axes from the composed rotations R_x(el) R_y(az).
  const Vec3 right{std::cos(az), 0.0, std::sin(az)};
  const Vec3 up{std::sin(el) * std::sin(az), std::cos(el), -std::sin(el) * std::cos(az)};
  const auto got = project(fit.centered.coords(), fit, vo, 100);
  for (std::size_t i = 0; i < got.size(); ++i) {
    const Vec3 p = fit.centered.coords()[i];
    const Vec3 d{p.x - 0.5, p.y - 0.5, p.z - 0.5};
    const double u = d.x * right.x + d.y * right.y + d.z * right.z;
    const double v = d.x * up.x + d.y * up.y + d.z * up.z;
    CHECK(got[i].x == doctest::Approx(50.0 + u * 100.0 / fit.zoom).epsilon(1e-12));
    CHECK(got[i].y == doctest::Approx(50.0 - v * 100.0 / fit.zoom).epsilon(1e-12));
  }
}

TEST_CASE("raster primitives") {
  RasterImage img(20, 10, {1, 2, 3});
  CHECK(img.width() == 20);
  CHECK(img.at(19, 9) == dataset::Rgb{1, 2, 3});
  blend_pixel(img, 0, 0, {255, 255, 255}, 1.0);
  CHECK(img.at(0, 0) == dataset::Rgb{255, 255, 255});
  blend_pixel(img, 1, 0, {201, 102, 3}, 0.5);
  CHECK(img.at(1, 0) == dataset::Rgb{101, 52, 3});
  blend_pixel(img, -1, 50, {9, 9, 9}, 1.0);  // off-canvas is ignored
  CHECK(snap_subpixel(0.3) == std::round(0.3 * 256) / 256);

  RasterImage disc(41, 41);
  draw_disc(disc, 20.5, 20.5, 8.0, {255, 0, 0});
  CHECK(disc.at(20, 20).r == 255);
  CHECK(disc.at(0, 0).r == 0);
  double covered = 0.0;
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) covered += disc.at(x, y).r / 255.0;
  CHECK(covered == doctest::Approx(std::numbers::pi * 64).epsilon(0.05));

  RasterImage line(50, 50);
  draw_line(line, 5.5, 25.5, 44.5, 25.5, 3.0, {0, 255, 0});
  CHECK(line.at(25, 25).g == 255);
  CHECK(line.at(25, 10).g == 0);
  CHECK_THROWS_AS(RasterImage(0, 4), ArgumentError);
}

TEST_CASE("area resize preserves block means") {
  Rng rng(8);
  RasterImage src(12, 12);
  for (auto& v : src.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
  const auto half = resize_area(src, 6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      double sum = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) sum += src.at(2 * x + dx, 2 * y + dy).g;
      CHECK(std::abs(half.at(x, y).g - sum / 4.0) <= 0.5 + 1e-9);
    }
  RasterImage flat(30, 30, {40, 80, 120});
  CHECK(resize_area(flat, 7, 11) == RasterImage(7, 11, {40, 80, 120}));
  CHECK(resize_area(src, 12, 12) == src);
  CHECK_THROWS_AS(resize_area(src, 0, 3), ArgumentError);
}

TEST_CASE("png round trip") {
  Rng rng(21);
  TempDir tmp("png");
  for (int trial = 0; trial < 10; ++trial) {
    RasterImage img(1 + static_cast<int>(rng.below(70)), 1 + static_cast<int>(rng.below(70)));
    for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = encode_png(img);
    CHECK(decode_png(bytes) == img);
    CHECK(encode_png(decode_png(bytes)) == bytes);
    write_png(img, tmp.path() / "a" / "b.png");
    CHECK(read_png(tmp.path() / "a" / "b.png") == img);
  }
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(decode_png(junk), ParseError);
  CHECK_THROWS_AS(read_png(tmp.path() / "missing.png"), NotFoundError);
  CHECK_THROWS_AS(encode_png(RasterImage{}), ArgumentError);
}

TEST_CASE("condensed images are deterministic and translation invariant") {
  const auto cfg = RenderConfig::for_size(224);
  for (int g = 1; g <= 6; ++g) {
    const auto seq = synth::dhg_gesture(g, 2, 3, 2, 4, g);
    for (const auto& vo : vo_table(DatasetId::kDhg1428_14G)) {
      const auto a = encode_png(condense::condense(seq, vo, cfg));
      CHECK(a == encode_png(condense::condense(seq, vo, cfg)));
      CHECK(a == encode_png(condense::condense(translated(seq, {0.75, -1.5, 2.25}), vo, cfg)));
    }
  }
}

TEST_CASE("rendered image contents") {
  const auto seq = synth::dhg_gesture(9, 2, 1, 1, 17, 9);
  const auto cfg = RenderConfig::for_size(960);
  const auto img = condense::condense(seq, lookup_vo(DatasetId::kDhg1428_14G, VoName::kTopDown), cfg);
  CHECK(img.width() == 960);
  CHECK(img.at(0, 0) == cfg.background);
  const auto& schema = seq.schema();
  bool bone = false;
  std::vector<bool> tip(schema.fingertip_colors.size(), false);
  for (int y = 0; y < 960; ++y)
    for (int x = 0; x < 960; ++x) {
      const auto c = img.at(x, y);
      bone = bone || c == schema.bone_color;
      for (std::size_t f = 0; f < tip.size(); ++f) tip[f] = tip[f] || c == schema.fingertip_colors[f];
    }
  CHECK(bone);
  for (bool t : tip) CHECK(t);
  CHECK(trail_alpha(0, 249, cfg) == cfg.alpha_min);
  CHECK(trail_alpha(248, 249, cfg) == doctest::Approx(cfg.alpha_max));
  RenderConfig bad = cfg;
  bad.alpha_min = 0.9;
  bad.alpha_max = 0.5;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("parallel batch equals the serial reference") {
  std::vector<SkeletonSequence> seqs;
  for (int i = 0; i < 12; ++i) seqs.push_back(synth::lmdhg_gesture(1 + i % 13, 1 + i, 1, 3));
  const auto views = parse_vo_list(DatasetId::kLmdhg, "all");
  const auto cfg = RenderConfig::for_size(96);
  const auto par = condense_batch(seqs, views, cfg);
  const auto ser = condense_batch_serial(seqs, views, cfg);
  REQUIRE(par.size() == seqs.size() * views.size());
  for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i] == ser[i]);
  CHECK(par[7] == condense::condense(seqs[1], views[1], cfg));
}

TEST_CASE("encode writes the image tree and sidecar") {
  TempDir tmp("enc");
  synth::TreeOptions opt;
  opt.subjects = 1;
  opt.repetitions = 1;
  opt.gestures = {1, 2};
  synth::write_tree(DatasetId::kDhg1428_14G, tmp.path() / "raw", opt);
  dataset::ParseOptions po;
  po.enforce_protocol_counts = false;
  const auto m = dataset::parse_dataset(DatasetId::kDhg1428_14G, tmp.path() / "raw", po);
  EncodeOptions eo;
  eo.views = parse_vo_list(m.dataset_id, "top-down,custom");
  eo.render = RenderConfig::for_size(64);
  CHECK(encode_dataset(m, tmp.path() / "enc", eo) == m.entries.size() * 2);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const auto p = encoded_image_path(tmp.path() / "enc", m.dataset_id, VoName::kCustom, e.split,
                                      e.label, e.locator);
    REQUIRE(std::filesystem::exists(p));
    CHECK(read_png(p) == condense::condense(dataset::load_sequence(m, i), eo.views[1], eo.render));
  }
  const auto back = dataset::read_index(encoded_manifest_path(tmp.path() / "enc", m.dataset_id), m.root);
  CHECK(back == m);
  CHECK(sequence_id("gesture_1/finger_2/x.txt") == "gesture_1__finger_2__x");
  eo.views.clear();
  CHECK_THROWS_AS(encode_dataset(m, tmp.path() / "enc2", eo), ArgumentError);
}

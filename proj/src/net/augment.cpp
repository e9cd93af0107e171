// SPDX-License-Identifier: Apache-2.0
#include "gestigo/net/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gestigo/error.hpp"
#include "gestigo/rng.hpp"

namespace gestigo::net {

Homography identity_homography() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Homography compose(const Homography& a, const Homography& b) {
  Homography r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[3 * i + j] += a[3 * i + k] * b[3 * k + j];
  return r;
}

Homography invert(const Homography& m) {
  const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
  const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
  const double det = a * A + b * B + c * C;
  if (std::abs(det) < 1e-15) throw NumericError("singular homography");
  Homography r{A, -(b * i - c * h), b * f - c * e, B, a * i - c * g, -(a * f - c * d), C, -(a * h - b * g), a * e - b * d};
  for (double& v : r) v /= det;
  return r;
}

Homography rotation_homography(double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(t), sn = std::sin(t);
  // y points down, so a counter-clockwise turn on screen uses -t.
  const Homography to_center{1, 0, -0.5, 0, 1, -0.5, 0, 0, 1};
  const Homography back{1, 0, 0.5, 0, 1, 0.5, 0, 0, 1};
  const Homography rot{cs, sn, 0, -sn, cs, 0, 0, 0, 1};
  return compose(back, compose(rot, to_center));
}

Homography affine_homography(double scale, double tx, double ty) {
  return {scale, 0, 0.5 - 0.5 * scale + tx, 0, scale, 0.5 - 0.5 * scale + ty, 0, 0, 1};
}

Homography perspective_homography(const std::array<double, 8>& corners) {
  static constexpr double src[8] = {0, 0, 1, 0, 1, 1, 0, 1};
  double m[8][9] = {};
  for (int k = 0; k < 4; ++k) {
    const double x = src[2 * k], y = src[2 * k + 1], u = corners[2 * k], v = corners[2 * k + 1];
    double* r0 = m[2 * k];
    double* r1 = m[2 * k + 1];
    r0[0] = x, r0[1] = y, r0[2] = 1, r0[6] = -u * x, r0[7] = -u * y, r0[8] = u;
    r1[3] = x, r1[4] = y, r1[5] = 1, r1[6] = -v * x, r1[7] = -v * y, r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-12) throw NumericError("degenerate perspective corners");
    std::swap(m[piv], m[col]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 9; ++c) m[r][c] -= f * m[col][c];
    }
  }
  Homography h{};
  for (int k = 0; k < 8; ++k) h[static_cast<std::size_t>(k)] = m[k][8] / m[k][k];
  h[8] = 1.0;
  return h;
}

AugmentPlan plan_augment(std::uint64_t seed, const AugmentConfig& cfg) {
  AugmentPlan plan;
  if (!cfg.enabled) return plan;
  Rng rng(seed);
  plan.flip = rng.bernoulli(cfg.flip_p);
  if (rng.bernoulli(cfg.affine_p)) {
    const double s = rng.uniform(1.0 - cfg.affine_scale, 1.0 + cfg.affine_scale);
    const double tx = rng.uniform(-cfg.affine_translate, cfg.affine_translate);
    const double ty = rng.uniform(-cfg.affine_translate, cfg.affine_translate);
    plan.warp = compose(affine_homography(s, tx, ty), plan.warp);
    plan.warped = true;
  }
  if (rng.bernoulli(cfg.perspective_p)) {
    std::array<double, 8> c{0, 0, 1, 0, 1, 1, 0, 1};
    for (double& v : c) v += rng.uniform(-cfg.perspective_distortion, cfg.perspective_distortion) / 2.0;
    plan.warp = compose(perspective_homography(c), plan.warp);
    plan.warped = true;
  }
  if (rng.bernoulli(cfg.rotate_p)) {
    plan.warp = compose(rotation_homography(rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees)), plan.warp);
    plan.warped = true;
  }
  if (rng.bernoulli(cfg.jitter_p)) {
    plan.brightness = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    plan.contrast = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
  }
  return plan;
}

RasterImage flip_horizontal(const RasterImage& image) {
  RasterImage out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) out.set(image.width() - 1 - x, y, image.at(x, y));
  return out;
}

RasterImage warp(const RasterImage& image, const Homography& source_to_dest) {
  const int w = image.width(), h = image.height();
  RasterImage out(w, h);
  if (image.empty()) return out;
  const Homography inv = invert(source_to_dest);
  const dataset::Rgb fill = image.at(0, 0);
  const auto src = image.pixels();
  auto dst = out.pixels();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w, v = (y + 0.5) / h;
      const double den = inv[6] * u + inv[7] * v + inv[8];
      const double su = (inv[0] * u + inv[1] * v + inv[2]) / den * w - 0.5;
      const double sv = (inv[3] * u + inv[4] * v + inv[5]) / den * h - 0.5;
      std::uint8_t* o = &dst[3 * (static_cast<std::size_t>(y) * w + x)];
      if (!(su >= -0.5 && su <= w - 0.5 && sv >= -0.5 && sv <= h - 0.5)) {
        o[0] = fill.r, o[1] = fill.g, o[2] = fill.b;
        continue;
      }
      const double cu = std::clamp(su, 0.0, w - 1.0), cv = std::clamp(sv, 0.0, h - 1.0);
      const int x0 = static_cast<int>(cu), y0 = static_cast<int>(cv);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = cu - x0, fy = cv - y0;
      for (int c = 0; c < 3; ++c) {
        const auto p = [&](int xx, int yy) { return static_cast<double>(src[3 * (static_cast<std::size_t>(yy) * w + xx) + c]); };
        const double val = (1 - fy) * ((1 - fx) * p(x0, y0) + fx * p(x1, y0)) + fy * ((1 - fx) * p(x0, y1) + fx * p(x1, y1));
        o[c] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
    }
  }
  return out;
}

RasterImage rotate(const RasterImage& image, double degrees) { return warp(image, rotation_homography(degrees)); }

RasterImage adjust_color(const RasterImage& image, double brightness, double contrast) {
  RasterImage out = image;
  auto px = out.pixels();
  if (px.empty()) return out;
  double mean = 0.0;
  for (auto v : px) mean += v;
  mean /= static_cast<double>(px.size());
  for (auto& v : px)
    v = static_cast<std::uint8_t>(std::clamp(std::lround((v - mean) * contrast + mean * brightness), 0L, 255L));
  return out;
}

RasterImage apply(const RasterImage& image, const AugmentPlan& plan) {
  RasterImage out = plan.flip ? flip_horizontal(image) : image;
  if (plan.warped) out = warp(out, plan.warp);
  if (plan.brightness != 1.0 || plan.contrast != 1.0) out = adjust_color(out, plan.brightness, plan.contrast);
  return out;
}

}  // namespace gestigo::net

// SPDX-License-Identifier: Apache-2.0
#include "gestigo/condense/raster.hpp"

#include <algorithm>
#include <cmath>

#include "gestigo/error.hpp"

namespace gestigo::condense {

RasterImage::RasterImage(int width, int height, Rgb fill_color)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ArgumentError("raster: dimensions must be positive");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  fill(fill_color);
}

void RasterImage::fill(Rgb c) {
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
}

void blend_pixel(RasterImage& canvas, int x, int y, Rgb color, double alpha) {
  if (alpha <= 0.0) return;
  if (x < 0 || y < 0 || x >= canvas.width() || y >= canvas.height()) return;
  const Rgb d = canvas.at(x, y);
  auto mix = [alpha](std::uint8_t dst, std::uint8_t src) {
    const double v = dst + alpha * (static_cast<double>(src) - dst);
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };
  canvas.set(x, y, {mix(d.r, color.r), mix(d.g, color.g), mix(d.b, color.b)});
}

double snap_subpixel(double v) { return std::round(v * 256.0) / 256.0; }

void draw_line(RasterImage& canvas, double x0, double y0, double x1, double y1, double width,
               Rgb color, double opacity) {
  x0 = snap_subpixel(x0);
  y0 = snap_subpixel(y0);
  x1 = snap_subpixel(x1);
  y1 = snap_subpixel(y1);
  const double half = 0.5 * width;
  const double reach = half + 1.0;
  const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - reach)));
  const int xmax = std::min(canvas.width() - 1, static_cast<int>(std::ceil(std::max(x0, x1) + reach)));
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - reach)));
  const int ymax = std::min(canvas.height() - 1, static_cast<int>(std::ceil(std::max(y0, y1) + reach)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      const double px = x + 0.5 - x0, py = y + 0.5 - y0;
      double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - t * dx, ey = py - t * dy;
      const double dist = std::sqrt(ex * ex + ey * ey);
      const double coverage = std::clamp(half + 0.5 - dist, 0.0, 1.0);
      blend_pixel(canvas, x, y, color, coverage * opacity);
    }
  }
}

void draw_disc(RasterImage& canvas, double cx, double cy, double radius, Rgb color,
               double opacity) {
  cx = snap_subpixel(cx);
  cy = snap_subpixel(cy);
  const double reach = radius + 1.0;
  const int xmin = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int xmax = std::min(canvas.width() - 1, static_cast<int>(std::ceil(cx + reach)));
  const int ymin = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int ymax = std::min(canvas.height() - 1, static_cast<int>(std::ceil(cy + reach)));
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      const double ex = x + 0.5 - cx, ey = y + 0.5 - cy;
      const double dist = std::sqrt(ex * ex + ey * ey);
      const double coverage = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
      blend_pixel(canvas, x, y, color, coverage * opacity);
    }
  }
}

namespace {

// Source interval [i*scale, (i+1)*scale) split into (index, weight) runs.
struct Tap {
  int index;
  double weight;
};

std::vector<std::vector<Tap>> area_taps(int src, int dst) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double a = i * scale, b = (i + 1) * scale;
    for (int s = static_cast<int>(std::floor(a)); s < std::min(src, static_cast<int>(std::ceil(b))); ++s) {
      const double w = std::min<double>(b, s + 1) - std::max<double>(a, s);
      if (w > 1e-12) taps[i].push_back({s, w / scale});
    }
  }
  return taps;
}

}  // namespace

RasterImage resize_area(const RasterImage& src, int width, int height) {
  if (width <= 0 || height <= 0) throw ArgumentError("resize: dimensions must be positive");
  if (width == src.width() && height == src.height()) return src;
  const auto xt = area_taps(src.width(), width);
  const auto yt = area_taps(src.height(), height);
  // Horizontal pass into doubles, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(src.height()) * width * 3, 0.0);
  const auto in = src.pixels();
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < width; ++x)
      for (const Tap& t : xt[x])
        for (int c = 0; c < 3; ++c)
          tmp[(static_cast<std::size_t>(y) * width + x) * 3 + c] +=
              t.weight * in[(static_cast<std::size_t>(y) * src.width() + t.index) * 3 + c];
  RasterImage out(width, height);
  auto px = out.pixels();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (const Tap& t : yt[y]) v += t.weight * tmp[(static_cast<std::size_t>(t.index) * width + x) * 3 + c];
        px[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

}  // namespace gestigo::condense

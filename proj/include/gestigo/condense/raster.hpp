// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gestigo/dataset/schema.hpp"

namespace gestigo::condense {

using dataset::Rgb;

/// Row-major 8-bit RGB image.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  Rgb at(int x, int y) const {
    const std::uint8_t* p = &pixels_[3 * (static_cast<std::size_t>(y) * width_ + x)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = &pixels_[3 * (static_cast<std::size_t>(y) * width_ + x)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void fill(Rgb c);

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Source-over blend of `color` at `alpha` into one pixel, rounded to 8 bits.
void blend_pixel(RasterImage& canvas, int x, int y, Rgb color, double alpha);

/// Primitive endpoints snap to a 1/256-pixel grid before coverage is computed.
double snap_subpixel(double v);

/// Capsule of the given width between two points; coverage falls off over one
/// pixel at the edge. `opacity` scales coverage.
void draw_line(RasterImage& canvas, double x0, double y0, double x1, double y1, double width,
               Rgb color, double opacity = 1.0);

/// Filled disc with a one-pixel analytic edge.
void draw_disc(RasterImage& canvas, double cx, double cy, double radius, Rgb color,
               double opacity = 1.0);

/// Area-averaging resize (each output pixel is the mean of the source area
/// it covers).
RasterImage resize_area(const RasterImage& src, int width, int height);

}  // namespace gestigo::condense

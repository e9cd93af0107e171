// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "gestigo/condense/raster.hpp"

namespace gestigo::net {

using condense::RasterImage;

struct AugmentConfig {
  bool enabled = true;
  double flip_p = 0.5;
  double affine_p = 0.3;
  double affine_translate = 0.1;  // fraction of the side
  double affine_scale = 0.1;
  double perspective_p = 0.2;
  double perspective_distortion = 0.1;
  double rotate_p = 0.3;
  double rotate_degrees = 15.0;
  double jitter_p = 0.3;
  double jitter = 0.1;  // brightness and contrast factors in [1-j, 1+j]
};

/// 3x3 row-major homography in normalized coordinates (unit square, origin top-left).
using Homography = std::array<double, 9>;

Homography identity_homography();
Homography compose(const Homography& a, const Homography& b);  // a after b
Homography invert(const Homography& h);

/// Concrete random choices for one image.
struct AugmentPlan {
  bool flip = false;
  Homography warp = identity_homography();  // source -> destination
  bool warped = false;
  double brightness = 1.0;
  double contrast = 1.0;
};

AugmentPlan plan_augment(std::uint64_t seed, const AugmentConfig& cfg);
RasterImage apply(const RasterImage& image, const AugmentPlan& plan);

RasterImage flip_horizontal(const RasterImage& image);
/// Bilinear inverse mapping; pixels that map outside take the top-left pixel's color.
RasterImage warp(const RasterImage& image, const Homography& source_to_dest);
/// Counter-clockwise rotation about the image center.
RasterImage rotate(const RasterImage& image, double degrees);
/// out = clamp((v - mean) * contrast + mean * brightness), mean over all channels.
RasterImage adjust_color(const RasterImage& image, double brightness, double contrast);

Homography rotation_homography(double degrees);
Homography affine_homography(double scale, double tx, double ty);
/// Maps the unit-square corners (TL, TR, BR, BL) to `corners` (x0,y0,...,x3,y3).
Homography perspective_homography(const std::array<double, 8>& corners);

}  // namespace gestigo::net

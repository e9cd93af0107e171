// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gestigo/condense/geometry.hpp"
#include "gestigo/condense/raster.hpp"

namespace gestigo::condense {

inline constexpr double kDefaultPadding = 0.125;
inline constexpr double kDefaultCanonicalLength = 1.0;
inline constexpr std::size_t kDefaultTemporalWindow = 250;
inline constexpr int kDefaultImagePx = 960;

struct RenderConfig {
  int image_px = kDefaultImagePx;
  Rgb background{16, 16, 16};
  double bone_width_px = 3.0;
  double marker_radius_px = 4.0;
  double alpha_min = 0.10;
  double alpha_max = 1.00;
  std::size_t temporal_window = kDefaultTemporalWindow;

  /// Default config with stroke sizes scaled from the 960 px reference.
  static RenderConfig for_size(int image_px);
  void validate() const;
};

/// Draws the bones of one frame, fully opaque, in the schema bone colour.
void render_spatial(std::span<const Vec3> frame, const dataset::JointSchema& schema,
                    const FitResult& fit, const ViewOrientation& vo, const RenderConfig& cfg,
                    RasterImage& canvas);

/// Draws fingertip trails: one marker per frame and fingertip, alpha ramping
/// linearly from alpha_min (first trail frame) to alpha_max (last), composited
/// earliest first. `frames` are the trail frames (all but the final pose).
void render_temporal(std::span<const std::span<const Vec3>> frames,
                     const dataset::JointSchema& schema, const FitResult& fit,
                     const ViewOrientation& vo, const RenderConfig& cfg, RasterImage& canvas);

/// Opacity of trail frame `index` (0-based) out of `count` trail frames.
double trail_alpha(std::size_t index, std::size_t count, const RenderConfig& cfg);

/// Full gesture-to-image mapping: resample, fit, trails, final pose.
RasterImage condense(const SkeletonSequence& seq, const ViewOrientation& vo,
                     const RenderConfig& cfg, double padding = kDefaultPadding,
                     double canonical_length = kDefaultCanonicalLength);

/// Condenses every (sequence, view) pair; output index is seq * views + view.
/// Parallel over gestures with OpenMP.
std::vector<RasterImage> condense_batch(std::span<const SkeletonSequence> seqs,
                                        std::span<const ViewOrientation> views,
                                        const RenderConfig& cfg, double padding = kDefaultPadding,
                                        double canonical_length = kDefaultCanonicalLength);

/// Single-threaded reference for condense_batch.
std::vector<RasterImage> condense_batch_serial(std::span<const SkeletonSequence> seqs,
                                               std::span<const ViewOrientation> views,
                                               const RenderConfig& cfg,
                                               double padding = kDefaultPadding,
                                               double canonical_length = kDefaultCanonicalLength);

}  // namespace gestigo::condense

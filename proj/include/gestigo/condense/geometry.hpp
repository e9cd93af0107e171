// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gestigo/dataset/manifest.hpp"
#include "gestigo/dataset/sequence.hpp"

namespace gestigo::condense {

using dataset::SkeletonSequence;
using dataset::Vec3;

enum class VoName { kTopDown, kFrontTo, kFrontAway, kSideRight, kSideLeft, kCustom };

std::string_view to_string(VoName name);
/// Accepts the canonical names plus "axonometric" as an alias of "custom".
VoName vo_from_string(std::string_view name);
const std::array<VoName, 6>& all_vo_names();

/// Virtual camera pose in degrees.
struct ViewOrientation {
  VoName name = VoName::kTopDown;
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;
};

/// Camera angles for one dataset family, in canonical VO order
/// (top-down, front-to, front-away, side-right, side-left, custom).
std::array<ViewOrientation, 6> vo_table(dataset::DatasetId id);
ViewOrientation lookup_vo(dataset::DatasetId id, VoName name);
/// Parses a comma-separated VO list; "all" expands to the six canonical VOs.
std::vector<ViewOrientation> parse_vo_list(dataset::DatasetId id, std::string_view list);

struct Mat3 {
  std::array<std::array<double, 3>, 3> m{};

  static Mat3 identity() { return {{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}}; }
  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  friend Mat3 operator*(const Mat3& a, const Mat3& b);
  double determinant() const;
};

/// World-to-camera rotation: azimuth about the vertical (y) axis, then
/// elevation about the camera-right (x) axis. Rows are the camera right, up
/// and depth axes expressed in world coordinates.
Mat3 camera_basis(const ViewOrientation& vo);

/// Piecewise-linear resampling of every joint coordinate to `frames` frames
/// over normalized time. Endpoints are copied exactly.
SkeletonSequence resample_sequence(const SkeletonSequence& seq, std::size_t frames);

struct FitResult {
  SkeletonSequence centered;
  Vec3 target;          // camera look-at point P = (L/2, L/2, L/2)
  double zoom = 0.0;    // Z_i: orthographic view extent
  double padding = 0.0; // gamma
  double canonical_length = 1.0;
  Vec3 extent;          // per-axis max - min of the centered coordinates
};

/// Shifts the gesture so its centroid lands on the look-at point and sets the
/// zoom to the largest per-axis extent plus padding.
FitResult fit_sequence(const SkeletonSequence& seq, double canonical_length, double padding);

struct Pixel {
  double x = 0.0;
  double y = 0.0;
};

/// Orthographic projection onto an image_px square canvas; y grows downward.
std::vector<Pixel> project(std::span<const Vec3> points, const FitResult& fit,
                           const ViewOrientation& vo, int image_px);

/// Single-point form of project() with a precomputed basis.
inline Pixel project_point(const Vec3& p, const Vec3& target, const Mat3& basis, double zoom,
                           double image_px) {
  const Vec3 c = basis.apply({p.x - target.x, p.y - target.y, p.z - target.z});
  const double s = image_px / zoom;
  return {0.5 * image_px + c.x * s, 0.5 * image_px - c.y * s};
}

}  // namespace gestigo::condense

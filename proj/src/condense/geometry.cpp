// SPDX-License-Identifier: Apache-2.0
#include "gestigo/condense/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::condense {

namespace {

constexpr std::array<VoName, 6> kVoOrder = {VoName::kTopDown,   VoName::kFrontTo,
                                            VoName::kFrontAway, VoName::kSideRight,
                                            VoName::kSideLeft,  VoName::kCustom};

struct VoRow {
  double elevation, azimuth;
};

// Rows in kVoOrder; (elevation, azimuth) in degrees.
constexpr VoRow kDhg[6] = {{0.0, 0.0}, {90.0, 180.0}, {-90.0, 0.0},
                           {0.0, -90.0}, {0.0, 90.0}, {30.0, -132.5}};
constexpr VoRow kFpha[6] = {{90.0, 0.0}, {0.0, 180.0}, {0.0, 0.0},
                            {0.0, 90.0}, {0.0, -90.0}, {25.0, 115.0}};
constexpr VoRow kLmdhg[6] = {{0.0, 0.0}, {-90.0, -180.0}, {90.0, 0.0},
                             {0.0, 90.0}, {0.0, -90.0}, {-15.0, -135.0}};

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Neumaier-compensated running sum.
struct Sum {
  double s = 0.0, c = 0.0;
  void add(double v) {
    const double t = s + v;
    if (std::abs(s) >= std::abs(v)) {
      c += (s - t) + v;
    } else {
      c += (v - t) + s;
    }
    s = t;
  }
  double value() const { return s + c; }
};

}  // namespace

std::string_view to_string(VoName name) {
  switch (name) {
    case VoName::kTopDown: return "top-down";
    case VoName::kFrontTo: return "front-to";
    case VoName::kFrontAway: return "front-away";
    case VoName::kSideRight: return "side-right";
    case VoName::kSideLeft: return "side-left";
    case VoName::kCustom: return "custom";
  }
  return "custom";
}

VoName vo_from_string(std::string_view name) {
  if (name == "axonometric") return VoName::kCustom;
  for (VoName v : kVoOrder)
    if (to_string(v) == name) return v;
  throw ArgumentError(fmt::format("unknown view orientation '{}'", name));
}

const std::array<VoName, 6>& all_vo_names() { return kVoOrder; }

std::array<ViewOrientation, 6> vo_table(dataset::DatasetId id) {
  const std::string_view family = dataset::vo_family(id);
  const VoRow* rows = nullptr;
  if (family == "DHG1428" || family == "SHREC2017") {
    rows = kDhg;
  } else if (family == "FPHA") {
    rows = kFpha;
  } else if (family == "LMDHG") {
    rows = kLmdhg;
  } else {
    throw ArgumentError(fmt::format("no view-orientation table for {}", family));
  }
  std::array<ViewOrientation, 6> out;
  for (std::size_t i = 0; i < 6; ++i) out[i] = {kVoOrder[i], rows[i].elevation, rows[i].azimuth};
  return out;
}

ViewOrientation lookup_vo(dataset::DatasetId id, VoName name) {
  for (const auto& vo : vo_table(id))
    if (vo.name == name) return vo;
  throw ArgumentError("view orientation missing from table");
}

std::vector<ViewOrientation> parse_vo_list(dataset::DatasetId id, std::string_view list) {
  std::vector<ViewOrientation> out;
  if (list == "all") {
    const auto table = vo_table(id);
    return {table.begin(), table.end()};
  }
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto token = list.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                          : comma - start);
    if (token.empty()) throw ArgumentError(fmt::format("empty entry in VO list '{}'", list));
    const VoName name = vo_from_string(token);
    for (const auto& existing : out)
      if (existing.name == name)
        throw ArgumentError(fmt::format("view orientation '{}' repeated", token));
    out.push_back(lookup_vo(id, name));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
      r.m[i][j] = s;
    }
  return r;
}

double Mat3::determinant() const {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 camera_basis(const ViewOrientation& vo) {
  if (!std::isfinite(vo.elevation_deg) || !std::isfinite(vo.azimuth_deg))
    throw ArgumentError("view orientation angles must be finite");
  const double az = deg2rad(vo.azimuth_deg);
  const double el = deg2rad(vo.elevation_deg);
  const double ca = std::cos(az), sa = std::sin(az);
  const double ce = std::cos(el), se = std::sin(el);
  // R_x(el) * R_y(az), expanded.
  Mat3 r;
  r.m = {{{ca, 0.0, sa}, {se * sa, ce, -se * ca}, {-ce * sa, se, ce * ca}}};
  return r;
}

SkeletonSequence resample_sequence(const SkeletonSequence& seq, std::size_t frames) {
  if (frames < 2) throw ArgumentError(fmt::format("resample: need at least 2 frames, got {}", frames));
  const std::size_t in_frames = seq.frame_count();
  const std::size_t joints = seq.joint_count();
  const auto src = seq.coords();
  std::vector<Vec3> out(frames * joints);
  const std::size_t last_in = in_frames - 1;
  for (std::size_t k = 0; k < frames; ++k) {
    // Exact rational position k * (in-1) / (out-1) split into integer and fraction.
    const std::size_t num = k * last_in;
    const std::size_t den = frames - 1;
    const std::size_t i0 = num / den;
    const double frac = static_cast<double>(num % den) / static_cast<double>(den);
    const Vec3* a = src.data() + i0 * joints;
    Vec3* dst = out.data() + k * joints;
    if (frac == 0.0) {
      std::copy(a, a + joints, dst);
      continue;
    }
    const Vec3* b = a + joints;
    for (std::size_t j = 0; j < joints; ++j)
      for (int axis = 0; axis < 3; ++axis)
        dst[j][axis] = a[j][axis] + frac * (b[j][axis] - a[j][axis]);
  }
  return seq.with_coords(std::move(out));
}

FitResult fit_sequence(const SkeletonSequence& seq, double canonical_length, double padding) {
  if (!(canonical_length > 0.0) || !std::isfinite(canonical_length))
    throw ArgumentError("fit: canonical length must be positive");
  if (!(padding >= 0.0) || !std::isfinite(padding))
    throw ArgumentError("fit: padding must be non-negative");
  const auto coords = seq.coords();
  Sum sum[3];
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-lo.x, -lo.y, -lo.z};
  for (const Vec3& v : coords)
    for (int a = 0; a < 3; ++a) {
      sum[a].add(v[a]);
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  const double n = static_cast<double>(coords.size());
  const double half = 0.5 * canonical_length;
  const Vec3 target{half, half, half};
  Vec3 shift;
  for (int a = 0; a < 3; ++a) shift[a] = target[a] - sum[a].value() / n;

  std::vector<Vec3> centered(coords.begin(), coords.end());
  for (Vec3& v : centered)
    for (int a = 0; a < 3; ++a) v[a] += shift[a];

  Vec3 extent;
  double max_extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    extent[a] = hi[a] - lo[a];
    max_extent = std::max(max_extent, extent[a]);
  }
  const double zoom = max_extent + padding;
  if (!(zoom > 0.0)) throw ArgumentError("fit: zero-extent gesture needs positive padding");

  FitResult fit{seq.with_coords(std::move(centered)), target, zoom, padding, canonical_length, extent};
  return fit;
}

std::vector<Pixel> project(std::span<const Vec3> points, const FitResult& fit,
                           const ViewOrientation& vo, int image_px) {
  if (image_px <= 0) throw ArgumentError("project: image size must be positive");
  const Mat3 basis = camera_basis(vo);
  std::vector<Pixel> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw ArgumentError("project: non-finite point");
    out.push_back(project_point(p, fit.target, basis, fit.zoom, image_px));
  }
  return out;
}

}  // namespace gestigo::condense

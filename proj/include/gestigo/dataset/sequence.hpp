// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gestigo/dataset/schema.hpp"

namespace gestigo::dataset {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// An ordered set of skeleton frames sharing one joint schema.
///
/// Coordinates are stored frame-major in a single buffer. Construction goes
/// through create(), which enforces the invariants: every frame has
/// schema->joint_count joints, at least two frames, all values finite.
class SkeletonSequence {
 public:
  static SkeletonSequence create(SchemaPtr schema, std::vector<Vec3> coords, int label,
                                 std::optional<std::string> subject = std::nullopt,
                                 std::string source_path = {});

  std::size_t frame_count() const { return coords_.size() / joint_count(); }
  std::size_t joint_count() const { return static_cast<std::size_t>(schema_->joint_count); }

  std::span<const Vec3> frame(std::size_t t) const {
    return {coords_.data() + t * joint_count(), joint_count()};
  }
  std::span<const Vec3> coords() const { return coords_; }

  const JointSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  int label() const { return label_; }
  const std::optional<std::string>& subject() const { return subject_; }
  const std::string& source_path() const { return source_path_; }

  /// Same metadata, different coordinates (re-validated).
  SkeletonSequence with_coords(std::vector<Vec3> coords) const;

 private:
  SkeletonSequence() = default;

  SchemaPtr schema_;
  std::vector<Vec3> coords_;
  int label_ = 0;
  std::optional<std::string> subject_;
  std::string source_path_;
};

/// Writes one frame per line, whitespace-separated x y z per joint, using
/// shortest round-trip formatting.
std::string format_frames(const SkeletonSequence& seq);

/// Reads the frame format above. `leading_index` skips one leading column per
/// line when a line has exactly one extra token. Throws ParseError.
std::vector<Vec3> parse_frames(const std::string& text, int joint_count,
                               const std::string& file_name, bool leading_index = false);

}  // namespace gestigo::dataset

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gestigo::dataset {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Joint layout of a hand skeleton plus the colours used to draw it.
///
/// `fingertips` lists one joint per rendered trail, thumb to pinky, five per
/// hand. `fingertip_colors` is parallel to `fingertips`.
struct JointSchema {
  std::string name;
  int joint_count = 0;
  std::vector<std::pair<int, int>> bones;
  std::vector<int> fingertips;
  std::vector<Rgb> fingertip_colors;
  Rgb bone_color{230, 230, 230};

  int hand_count() const { return static_cast<int>(fingertips.size()) / 5; }

  /// Throws SchemaError when an invariant does not hold.
  void validate() const;
};

using SchemaPtr = std::shared_ptr<const JointSchema>;

/// Red, green, blue, yellow, magenta; thumb to pinky.
const std::vector<Rgb>& finger_palette();

/// Same hue at half saturation, used for the second hand.
Rgb desaturate_half(Rgb c);

/// 22 joints: wrist, palm, then four joints per finger (DHG1428, SHREC2017).
SchemaPtr dhg22_schema();
/// 21 joints: wrist, five MCPs, then PIP/DIP/TIP per finger (FPHA).
SchemaPtr fpha21_schema();
/// 21 joints: wrist then four joints per finger (browser hand-landmark model).
SchemaPtr landmark21_schema();
/// Two hands of 23 joints each (LMDHG).
SchemaPtr lmdhg46_schema();

/// Schema matching a joint count and fingertip list announced by a client.
/// Known layouts are returned as-is; anything else gets a bone-less schema.
SchemaPtr schema_for(int joint_count, const std::vector<int>& fingertips);

}  // namespace gestigo::dataset

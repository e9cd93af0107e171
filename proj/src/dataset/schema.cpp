// SPDX-License-Identifier: Apache-2.0
#include "gestigo/dataset/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::dataset {

void JointSchema::validate() const {
  if (joint_count <= 0) throw SchemaError(fmt::format("schema {}: joint_count must be positive", name));
  for (const auto& [a, b] : bones) {
    if (a < 0 || b < 0 || a >= joint_count || b >= joint_count)
      throw SchemaError(fmt::format("schema {}: bone ({}, {}) out of range", name, a, b));
  }
  if (fingertips.empty() || fingertips.size() % 5 != 0)
    throw SchemaError(fmt::format("schema {}: need five fingertips per hand, got {}", name,
                                  fingertips.size()));
  std::set<int> seen;
  for (int f : fingertips) {
    if (f < 0 || f >= joint_count)
      throw SchemaError(fmt::format("schema {}: fingertip {} out of range", name, f));
    if (!seen.insert(f).second)
      throw SchemaError(fmt::format("schema {}: duplicate fingertip {}", name, f));
  }
  if (fingertip_colors.size() != fingertips.size())
    throw SchemaError(fmt::format("schema {}: fingertip colour count mismatch", name));
}

const std::vector<Rgb>& finger_palette() {
  static const std::vector<Rgb> palette = {
      {255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}, {255, 0, 255}};
  return palette;
}

Rgb desaturate_half(Rgb c) {
  const int v = std::max({c.r, c.g, c.b});
  auto half = [v](int ch) {
    return static_cast<std::uint8_t>(std::lround(v - 0.5 * (v - ch)));
  };
  return {half(c.r), half(c.g), half(c.b)};
}

namespace {

std::vector<Rgb> palette_for_hands(int hands) {
  std::vector<Rgb> out = finger_palette();
  for (int h = 1; h < hands; ++h)
    for (const Rgb& c : finger_palette()) out.push_back(desaturate_half(c));
  return out;
}

// Four-joint finger chains hanging off a root joint; used by three layouts.
void add_chain(std::vector<std::pair<int, int>>& bones, int root, int first) {
  bones.emplace_back(root, first);
  bones.emplace_back(first, first + 1);
  bones.emplace_back(first + 1, first + 2);
  bones.emplace_back(first + 2, first + 3);
}

}  // namespace

SchemaPtr dhg22_schema() {
  static const SchemaPtr schema = [] {
    auto s = std::make_shared<JointSchema>();
    s->name = "dhg22";
    s->joint_count = 22;
    s->bones.emplace_back(0, 1);
    add_chain(s->bones, 0, 2);  // thumb hangs off the wrist
    for (int first : {6, 10, 14, 18}) add_chain(s->bones, 1, first);
    s->fingertips = {5, 9, 13, 17, 21};
    s->fingertip_colors = palette_for_hands(1);
    s->validate();
    return s;
  }();
  return schema;
}

SchemaPtr fpha21_schema() {
  static const SchemaPtr schema = [] {
    auto s = std::make_shared<JointSchema>();
    s->name = "fpha21";
    s->joint_count = 21;
    for (int f = 0; f < 5; ++f) {
      const int mcp = 1 + f;
      const int pip = 6 + 3 * f;
      s->bones.emplace_back(0, mcp);
      s->bones.emplace_back(mcp, pip);
      s->bones.emplace_back(pip, pip + 1);
      s->bones.emplace_back(pip + 1, pip + 2);
    }
    s->fingertips = {8, 11, 14, 17, 20};
    s->fingertip_colors = palette_for_hands(1);
    s->validate();
    return s;
  }();
  return schema;
}

SchemaPtr landmark21_schema() {
  static const SchemaPtr schema = [] {
    auto s = std::make_shared<JointSchema>();
    s->name = "landmark21";
    s->joint_count = 21;
    for (int first : {1, 5, 9, 13, 17}) add_chain(s->bones, 0, first);
    s->fingertips = {4, 8, 12, 16, 20};
    s->fingertip_colors = palette_for_hands(1);
    s->validate();
    return s;
  }();
  return schema;
}

SchemaPtr lmdhg46_schema() {
  static const SchemaPtr schema = [] {
    auto s = std::make_shared<JointSchema>();
    s->name = "lmdhg46";
    s->joint_count = 46;
    // Per hand: elbow, wrist, palm, then four joints per finger.
    for (int hand = 0; hand < 2; ++hand) {
      const int base = 23 * hand;
      s->bones.emplace_back(base + 0, base + 1);
      s->bones.emplace_back(base + 1, base + 2);
      for (int f = 0; f < 5; ++f) add_chain(s->bones, base + 2, base + 3 + 4 * f);
      for (int f = 0; f < 5; ++f) s->fingertips.push_back(base + 6 + 4 * f);
    }
    s->fingertip_colors = palette_for_hands(2);
    s->validate();
    return s;
  }();
  return schema;
}

SchemaPtr schema_for(int joint_count, const std::vector<int>& fingertips) {
  for (const SchemaPtr& known :
       {dhg22_schema(), fpha21_schema(), landmark21_schema(), lmdhg46_schema()}) {
    if (known->joint_count == joint_count && known->fingertips == fingertips) return known;
  }
  auto s = std::make_shared<JointSchema>();
  s->name = fmt::format("generic{}", joint_count);
  s->joint_count = joint_count;
  s->fingertips = fingertips;
  s->fingertip_colors = palette_for_hands(static_cast<int>(fingertips.size()) / 5);
  s->fingertip_colors.resize(fingertips.size(), finger_palette().front());
  s->validate();
  return s;
}

}  // namespace gestigo::dataset

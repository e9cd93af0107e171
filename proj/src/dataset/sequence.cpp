// SPDX-License-Identifier: Apache-2.0
#include "gestigo/dataset/sequence.hpp"

#include <charconv>
#include <cmath>
#include <string_view>
#include <utility>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::dataset {

SkeletonSequence SkeletonSequence::create(SchemaPtr schema, std::vector<Vec3> coords, int label,
                                          std::optional<std::string> subject,
                                          std::string source_path) {
  if (!schema) throw ArgumentError("sequence: null schema");
  const auto joints = static_cast<std::size_t>(schema->joint_count);
  if (coords.size() % joints != 0)
    throw ArgumentError(fmt::format("sequence: {} coordinates is not a multiple of {} joints",
                                    coords.size(), joints));
  if (coords.size() / joints < 2)
    throw ArgumentError(fmt::format("sequence: need at least 2 frames, got {}",
                                    coords.size() / joints));
  for (const Vec3& v : coords) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw ArgumentError("sequence: non-finite coordinate");
  }
  SkeletonSequence s;
  s.schema_ = std::move(schema);
  s.coords_ = std::move(coords);
  s.label_ = label;
  s.subject_ = std::move(subject);
  s.source_path_ = std::move(source_path);
  return s;
}

SkeletonSequence SkeletonSequence::with_coords(std::vector<Vec3> coords) const {
  return create(schema_, std::move(coords), label_, subject_, source_path_);
}

std::string format_frames(const SkeletonSequence& seq) {
  std::string out;
  out.reserve(seq.coords().size() * 3 * 12);
  for (std::size_t t = 0; t < seq.frame_count(); ++t) {
    bool first = true;
    for (const Vec3& v : seq.frame(t)) {
      for (int a = 0; a < 3; ++a) {
        if (!first) out.push_back(' ');
        first = false;
        fmt::format_to(std::back_inserter(out), "{}", v[a]);
      }
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<Vec3> parse_frames(const std::string& text, int joint_count,
                               const std::string& file_name, bool leading_index) {
  const std::size_t expected = static_cast<std::size_t>(joint_count) * 3;
  std::vector<Vec3> coords;
  std::vector<double> values;
  std::size_t line_no = 0;
  std::string_view rest(text);
  while (!rest.empty()) {
    ++line_no;
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    values.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      const std::string_view token = line.substr(pos, end - pos);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError(file_name, line_no, fmt::format("non-numeric token '{}'", token));
      if (!std::isfinite(v)) throw ParseError(file_name, line_no, "non-finite coordinate");
      values.push_back(v);
      pos = end;
    }
    if (values.empty()) continue;

    std::size_t offset = 0;
    if (leading_index && values.size() == expected + 1) offset = 1;
    if (values.size() - offset != expected)
      throw ParseError(file_name, line_no,
                       fmt::format("expected {} values, got {}", expected, values.size()));
    for (std::size_t j = 0; j < static_cast<std::size_t>(joint_count); ++j)
      coords.push_back({values[offset + 3 * j], values[offset + 3 * j + 1],
                        values[offset + 3 * j + 2]});
  }
  const std::size_t frames = coords.size() / static_cast<std::size_t>(joint_count);
  if (frames < 2)
    throw ParseError(file_name, 0, fmt::format("need at least 2 frames, got {}", frames));
  return coords;
}

}  // namespace gestigo::dataset

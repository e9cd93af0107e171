// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gestigo/condense/raster.hpp"

namespace gestigo::condense {

/// 8-bit RGB PNG, no alpha channel.
std::vector<std::uint8_t> encode_png(const RasterImage& image);
/// Accepts any 8-bit PNG colour type; alpha is dropped, grey is expanded.
RasterImage decode_png(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");

void write_png(const RasterImage& image, const std::filesystem::path& path);
RasterImage read_png(const std::filesystem::path& path);

}  // namespace gestigo::condense

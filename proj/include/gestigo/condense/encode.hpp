// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gestigo/condense/render.hpp"
#include "gestigo/dataset/manifest.hpp"

namespace gestigo::condense {

struct EncodeOptions {
  std::vector<ViewOrientation> views;
  RenderConfig render;
  double padding = kDefaultPadding;
  double canonical_length = kDefaultCanonicalLength;
};

/// File-system-safe identifier for a manifest locator ("a/b/c.txt" -> "a__b__c").
std::string sequence_id(const std::string& locator);

/// `<out>/<dataset>/<vo>/<split>/<class>/<sequence-id>.png`
std::filesystem::path encoded_image_path(const std::filesystem::path& out,
                                         dataset::DatasetId dataset, VoName vo,
                                         dataset::SplitTag split, int label,
                                         const std::string& locator);

/// Sidecar manifest of an encoded dataset: `<out>/<dataset>/manifest.tsv`.
std::filesystem::path encoded_manifest_path(const std::filesystem::path& out,
                                            dataset::DatasetId dataset);

/// Condenses every manifest entry from every view and writes the PNG layout
/// plus the manifest sidecar. Parallel over gestures. Returns images written.
std::size_t encode_dataset(const dataset::DatasetManifest& manifest,
                           const std::filesystem::path& out, const EncodeOptions& options);

}  // namespace gestigo::condense

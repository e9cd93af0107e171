// SPDX-License-Identifier: Apache-2.0
#include "gestigo/condense/encode.hpp"

#include <exception>

#include <fmt/format.h>

#include "gestigo/condense/png_io.hpp"
#include "gestigo/error.hpp"

namespace fs = std::filesystem;

namespace gestigo::condense {

std::string sequence_id(const std::string& locator) {
  std::string id = locator;
  const auto dot = id.rfind('.');
  const auto slash = id.rfind('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) id.resize(dot);
  std::string out;
  for (char c : id) {
    if (c == '/') {
      out += "__";
    } else {
      out += c;
    }
  }
  return out;
}

fs::path encoded_image_path(const fs::path& out, dataset::DatasetId dataset, VoName vo,
                            dataset::SplitTag split, int label, const std::string& locator) {
  return out / std::string(dataset::to_string(dataset)) / std::string(to_string(vo)) /
         std::string(dataset::to_string(split)) / fmt::format("{:02}", label) /
         (sequence_id(locator) + ".png");
}

fs::path encoded_manifest_path(const fs::path& out, dataset::DatasetId dataset) {
  return out / std::string(dataset::to_string(dataset)) / "manifest.tsv";
}

std::size_t encode_dataset(const dataset::DatasetManifest& manifest, const fs::path& out,
                           const EncodeOptions& options) {
  if (options.views.empty()) throw ArgumentError("encode: no view orientations given");
  options.render.validate();
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(manifest.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& entry = manifest.entries[static_cast<std::size_t>(i)];
      const auto seq = dataset::load_sequence(manifest, static_cast<std::size_t>(i));
      for (const auto& vo : options.views) {
        const RasterImage image =
            condense(seq, vo, options.render, options.padding, options.canonical_length);
        write_png(image, encoded_image_path(out, manifest.dataset_id, vo.name, entry.split,
                                            entry.label, entry.locator));
      }
    } catch (...) {
#pragma omp critical(gestigo_encode_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  dataset::write_index(manifest, encoded_manifest_path(out, manifest.dataset_id));
  return manifest.entries.size() * options.views.size();
}

}  // namespace gestigo::condense

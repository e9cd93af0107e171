// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gestigo/dataset/schema.hpp"
#include "gestigo/dataset/sequence.hpp"

namespace gestigo::dataset {

enum class DatasetId {
  kShrec2017_14G,
  kShrec2017_28G,
  kDhg1428_14G,
  kDhg1428_28G,
  kLmdhg,
  kFpha,
};

std::string_view to_string(DatasetId id);
/// Throws ArgumentError on an unknown name.
DatasetId dataset_from_string(std::string_view name);
const std::vector<DatasetId>& all_datasets();

/// Which view-orientation table a dataset uses (14G and 28G share one).
std::string_view vo_family(DatasetId id);

int class_count(DatasetId id);
SchemaPtr schema_for(DatasetId id);
std::vector<std::string> class_names(DatasetId id);

enum class SplitTag { kTrain, kVal };
std::string_view to_string(SplitTag tag);

struct ManifestEntry {
  std::string locator;  // skeleton file, relative to the dataset root
  int label = 0;        // 1-based class index
  std::string subject;
  SplitTag split = SplitTag::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Per-dataset totals of the evaluation protocol.
struct ProtocolCounts {
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t val = 0;
};
ProtocolCounts protocol_counts(DatasetId id);

inline constexpr std::uint64_t kDefaultSplitSeed = 17;

struct DatasetManifest {
  DatasetId dataset_id = DatasetId::kDhg1428_14G;
  int class_count = 0;
  std::uint64_t seed = kDefaultSplitSeed;
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;  // lexicographic by locator
  bool camera_transform = false;       // FPHA only: apply the world-to-camera extrinsic

  SchemaPtr schema() const { return schema_for(dataset_id); }

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.dataset_id == b.dataset_id && a.class_count == b.class_count && a.seed == b.seed &&
           a.entries == b.entries && a.camera_transform == b.camera_transform;
  }
};

struct ParseOptions {
  std::uint64_t seed = kDefaultSplitSeed;
  /// Reject trees whose entry and split counts differ from the protocol.
  bool enforce_protocol_counts = true;
  bool fpha_camera_transform = false;
};

/// Scans a dataset tree laid out as documented in docs/datasets.md.
DatasetManifest parse_dataset(DatasetId id, const std::filesystem::path& root,
                              const ParseOptions& options = {});

/// Reads entry `index` of the manifest from disk.
SkeletonSequence load_sequence(const DatasetManifest& manifest, std::size_t index);

struct SplitView {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
};
SplitView split(const DatasetManifest& manifest);

/// Index file: a header line with dataset_id, class count and seed, then one
/// tab-separated `locator label subject split` line per entry.
std::string format_index(const DatasetManifest& manifest);
DatasetManifest parse_index(const std::string& text, const std::filesystem::path& root,
                            const std::string& file_name = "<index>");
void write_index(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest read_index(const std::filesystem::path& file, const std::filesystem::path& root);

/// Deterministic 70:30 shuffle-split used when no official split file exists.
/// Returns a train flag per position of `count` sorted entries.
std::vector<bool> seeded_split(std::size_t count, double train_fraction, std::uint64_t seed);

}  // namespace gestigo::dataset

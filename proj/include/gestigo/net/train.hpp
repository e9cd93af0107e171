// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gestigo/condense/geometry.hpp"
#include "gestigo/net/augment.hpp"
#include "gestigo/net/model.hpp"

namespace gestigo::net {

/// One gesture: j master-size images in stream order and a 0-based class.
/// Images live either in memory (`views`) or as PNG files read on demand.
struct Sample {
  std::vector<RasterImage> views;
  std::vector<std::filesystem::path> files;
  int label = 0;
  std::string locator;

  std::size_t view_count() const { return views.empty() ? files.size() : views.size(); }
  RasterImage view(std::size_t k) const;
};

struct SampleSet {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Maps 1-based dataset labels to output classes. Empty `class_labels`
/// keeps every class; otherwise only listed labels are kept and class k is
/// class_labels[k]. Returns -1 for dropped labels.
int class_index(int dataset_label, const std::vector<int>& class_labels);

/// Indexes an encoded dataset layout (PNG tree plus manifest sidecar); images
/// are read when used.
SampleSet load_encoded(const std::filesystem::path& encoded_root, dataset::DatasetId id,
                       const std::vector<condense::VoName>& vos, const std::vector<int>& class_labels = {});

/// Condenses a manifest in memory at `master_px`. Parallel over gestures.
SampleSet condense_set(const dataset::DatasetManifest& manifest,
                       const std::vector<condense::ViewOrientation>& vos, int master_px,
                       const std::vector<int>& class_labels = {});

struct TrainConfig {
  int epochs_per_stage = 8;
  int batch_size = 16;
  std::vector<double> lr_grid{3e-3, 1e-3, 3e-4};
  /// Fixed learning rate; skips the grid probe.
  std::optional<double> lr;
  int probe_epochs = 1;
  AugmentConfig augment;
  std::uint64_t seed = 17;
  nn::Exec exec = nn::Exec::kParallel;
  /// Written whenever validation accuracy improves. Empty disables.
  std::filesystem::path checkpoint;
  /// Receives train.log and summary.tsv. Empty disables.
  std::filesystem::path report_dir;
  std::ostream* progress = nullptr;
};

struct EpochRecord {
  int stage = 0;  // 1-based
  int size = 0;
  int epoch = 0;  // 1-based within the stage
  double lr = 0.0;
  std::vector<double> losses;  // mean L_1..L_{j+1} over the epoch
  std::vector<double> log_vars;
  double total = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> stream_val_accuracy;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<std::pair<double, double>> lr_probe;  // (lr, val accuracy)
  double chosen_lr = 0.0;
  double best_val_accuracy = -1.0;
  std::size_t best_epoch = 0;  // index into epochs
};

/// Progressive-resizing training. On return the model holds the weights of the
/// best validation epoch. A NumericError propagates after logging; the last
/// checkpoint on disk is left untouched.
TrainReport train(E2eetModel<float>& model, const SampleSet& data, const TrainConfig& config);

/// Tuner accuracy and per-stream accuracies of `samples` at input `size`.
struct Accuracy {
  double tuner = 0.0;
  std::vector<double> streams;
};
Accuracy accuracy_at(const E2eetModel<float>& model, const std::vector<Sample>& samples, int size,
                     nn::Exec exec = nn::Exec::kParallel);

std::string summary_header(int streams);
std::string summary_line(const EpochRecord& r);

}  // namespace gestigo::net

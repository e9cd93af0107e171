// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gestigo/condense/raster.hpp"
#include "gestigo/net/model.hpp"
#include "gestigo/net/train.hpp"

namespace gestigo::eval {

struct EvalReport {
  std::string dataset_id;
  std::vector<std::string> vo_sequence;
  std::vector<std::string> class_names;
  std::uint64_t seed = 17;
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // rows = truth, columns = prediction
  std::vector<double> per_class_accuracy;

  int class_count() const { return static_cast<int>(confusion.size()); }
  std::int64_t total() const;
  /// Throws ArgumentError when accuracy or per-class values disagree with the matrix.
  void validate() const;
};

/// Builds a report from 0-based truth and predicted classes.
EvalReport make_report(int class_count, std::span<const int> truth, std::span<const int> predicted);

/// Tuner decisions of a frozen model on master-size validation samples.
EvalReport evaluate(const net::E2eetModel<float>& model, const std::vector<net::Sample>& val,
                    std::uint64_t seed = 17);

struct ConfusedPair {
  int a = 0;  // a < b
  int b = 0;
  std::int64_t count = 0;

  friend bool operator==(const ConfusedPair&, const ConfusedPair&) = default;
};

/// Symmetrized off-diagonal counts, descending; ties by (a, b). Zero pairs omitted.
std::vector<ConfusedPair> confusion_pairs(const EvalReport& report, int k);

/// Summary text followed by a tab-separated confusion section.
std::string format_report(const EvalReport& report);
EvalReport parse_report(const std::string& text, const std::string& name = "<report>");
std::string confusion_tsv(const EvalReport& report);

/// Row-normalized heat map, `cell_px` per cell.
condense::RasterImage confusion_heatmap(const EvalReport& report, int cell_px = 16);

/// Writes `<stem>.txt`, `<stem>.tsv` and `<stem>.png`.
void write_report(const EvalReport& report, const std::filesystem::path& stem);

}  // namespace gestigo::eval

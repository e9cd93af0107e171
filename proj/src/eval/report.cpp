// SPDX-License-Identifier: Apache-2.0
#include "gestigo/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gestigo/condense/png_io.hpp"
#include "gestigo/error.hpp"
#include "gestigo/net/predict.hpp"

namespace gestigo::eval {

std::int64_t EvalReport::total() const {
  std::int64_t n = 0;
  for (const auto& r : confusion)
    for (auto v : r) n += v;
  return n;
}

void EvalReport::validate() const {
  const auto n = confusion.size();
  if (n == 0) throw ArgumentError("report: empty confusion matrix");
  std::int64_t trace = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (confusion[i].size() != n) throw ArgumentError("report: confusion matrix is not square");
    for (auto v : confusion[i])
      if (v < 0) throw ArgumentError("report: negative count");
    trace += confusion[i][i];
  }
  const auto t = total();
  if (t == 0) throw ArgumentError("report: no samples");
  if (accuracy != static_cast<double>(trace) / static_cast<double>(t))
    throw ArgumentError("report: accuracy disagrees with the confusion trace");
  if (per_class_accuracy.size() != n) throw ArgumentError("report: per-class accuracy length");
}

EvalReport make_report(int class_count, std::span<const int> truth, std::span<const int> predicted) {
  if (truth.empty()) throw ArgumentError("evaluate: empty validation set");
  if (truth.size() != predicted.size()) throw ArgumentError("evaluate: truth and prediction lengths differ");
  if (class_count < 1) throw ArgumentError("evaluate: class count must be positive");
  EvalReport r;
  const auto n = static_cast<std::size_t>(class_count);
  r.confusion.assign(n, std::vector<std::int64_t>(n, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 || predicted[i] >= class_count)
      throw ArgumentError(fmt::format("evaluate: class out of range at sample {}", i));
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  std::int64_t trace = 0;
  for (std::size_t c = 0; c < n; ++c) {
    trace += r.confusion[c][c];
    std::int64_t row = 0;
    for (auto v : r.confusion[c]) row += v;
    r.per_class_accuracy.push_back(row == 0 ? 0.0 : static_cast<double>(r.confusion[c][c]) / static_cast<double>(row));
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(truth.size());
  return r;
}

EvalReport evaluate(const net::E2eetModel<float>& model, const std::vector<net::Sample>& val, std::uint64_t seed) {
  if (val.empty()) throw ArgumentError("evaluate: empty validation set");
  constexpr std::size_t kChunk = 64;
  std::vector<int> truth;
  std::vector<int> decided;
  for (std::size_t start = 0; start < val.size(); start += kChunk) {
    const std::size_t end = std::min(val.size(), start + kChunk);
    std::vector<std::vector<condense::RasterImage>> images(end - start);
    std::vector<net::ViewSet> views(end - start);
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t k = 0; k < val[i].view_count(); ++k) images[i - start].push_back(val[i].view(k));
      for (const auto& img : images[i - start]) views[i - start].push_back(&img);
      truth.push_back(val[i].label);
    }
    for (const auto& p : net::infer_master(model, views)) decided.push_back(p.decided_class());
  }
  EvalReport r = make_report(model.config().class_count, truth, decided);
  r.dataset_id = model.config().dataset;
  r.vo_sequence = model.config().vo_names;
  r.class_names = model.config().class_names;
  r.seed = seed;
  return r;
}

std::vector<ConfusedPair> confusion_pairs(const EvalReport& report, int k) {
  std::vector<ConfusedPair> out;
  const int n = report.class_count();
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const auto c = report.confusion[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +
                     report.confusion[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
      if (c > 0) out.push_back({a, b, c});
    }
  std::stable_sort(out.begin(), out.end(), [](const ConfusedPair& x, const ConfusedPair& y) { return x.count > y.count; });
  if (k >= 0 && out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

namespace {

std::string class_name(const EvalReport& r, int c) {
  return static_cast<std::size_t>(c) < r.class_names.size() ? r.class_names[static_cast<std::size_t>(c)]
                                                            : fmt::format("class {}", c + 1);
}

}  // namespace

std::string confusion_tsv(const EvalReport& report) {
  std::string out = "truth\\pred";
  for (int c = 0; c < report.class_count(); ++c) out += fmt::format("\t{}", c + 1);
  out += '\n';
  for (int r = 0; r < report.class_count(); ++r)
    out += fmt::format("{}\t{}\n", r + 1, fmt::join(report.confusion[static_cast<std::size_t>(r)], "\t"));
  return out;
}

std::string format_report(const EvalReport& report) {
  std::string out = "gestigo evaluation report\n";
  out += fmt::format("dataset: {}\n", report.dataset_id);
  out += fmt::format("vos: {}\n", fmt::join(report.vo_sequence, ","));
  if (!report.class_names.empty()) out += fmt::format("classes: {}\n", fmt::join(report.class_names, "|"));
  out += fmt::format("seed: {}\n", report.seed);
  out += fmt::format("samples: {}\n", report.total());
  out += fmt::format("accuracy: {:.6f}\n", report.accuracy);
  out += "per-class accuracy:\n";
  for (int c = 0; c < report.class_count(); ++c)
    out += fmt::format("  {:2} {:<24} {:.4f}\n", c + 1, class_name(report, c),
                       report.per_class_accuracy[static_cast<std::size_t>(c)]);
  const auto pairs = confusion_pairs(report, 5);
  if (!pairs.empty()) {
    out += "most confused pairs:\n";
    for (const auto& p : pairs)
      out += fmt::format("  {} / {}: {}\n", class_name(report, p.a), class_name(report, p.b), p.count);
  }
  out += "\n[confusion]\n";
  out += confusion_tsv(report);
  return out;
}

EvalReport parse_report(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  EvalReport r;
  bool in_matrix = false;
  bool header_seen = false;
  double stated_accuracy = -1.0;
  while (std::getline(in, line)) {
    ++no;
    if (line == "[confusion]") {
      in_matrix = true;
      continue;
    }
    if (in_matrix) {
      if (line.empty()) continue;
      if (!header_seen) {
        header_seen = true;
        continue;
      }
      std::istringstream cells(line);
      std::string cell;
      std::getline(cells, cell, '\t');
      std::vector<std::int64_t> row;
      while (std::getline(cells, cell, '\t')) {
        try {
          row.push_back(std::stoll(cell));
        } catch (const std::exception&) {
          throw ParseError(name, no, fmt::format("bad count '{}'", cell));
        }
      }
      r.confusion.push_back(std::move(row));
      continue;
    }
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 2);
    if (key == "dataset") r.dataset_id = value;
    if (key == "vos") {
      std::istringstream vs(value);
      std::string v;
      while (std::getline(vs, v, ',')) r.vo_sequence.push_back(v);
    }
    if (key == "classes") {
      std::istringstream cs(value);
      std::string c;
      while (std::getline(cs, c, '|')) r.class_names.push_back(c);
    }
    if (key == "seed") r.seed = std::stoull(value);
    if (key == "accuracy") stated_accuracy = std::stod(value);
  }
  if (r.confusion.empty()) throw ParseError(name, no, "missing confusion section");
  for (const auto& row : r.confusion)
    if (row.size() != r.confusion.size()) throw ParseError(name, no, "confusion matrix is not square");
  std::vector<int> truth, pred;
  for (std::size_t a = 0; a < r.confusion.size(); ++a)
    for (std::size_t b = 0; b < r.confusion.size(); ++b)
      for (std::int64_t k = 0; k < r.confusion[a][b]; ++k) {
        truth.push_back(static_cast<int>(a));
        pred.push_back(static_cast<int>(b));
      }
  EvalReport full = make_report(static_cast<int>(r.confusion.size()), truth, pred);
  full.dataset_id = r.dataset_id;
  full.vo_sequence = r.vo_sequence;
  full.seed = r.seed;
  if (!r.class_names.empty()) {
    if (r.class_names.size() != r.confusion.size())
      throw ParseError(name, 0, "class name count disagrees with the confusion matrix");
    full.class_names = r.class_names;
  }
  if (stated_accuracy >= 0 && std::abs(stated_accuracy - full.accuracy) > 5e-7)
    throw ParseError(name, 0, "stated accuracy disagrees with the confusion matrix");
  return full;
}

condense::RasterImage confusion_heatmap(const EvalReport& report, int cell_px) {
  if (cell_px < 1) throw ArgumentError("heatmap: cell size must be positive");
  const int n = report.class_count();
  condense::RasterImage img(n * cell_px, n * cell_px, {255, 255, 255});
  for (int r = 0; r < n; ++r) {
    const auto& row = report.confusion[static_cast<std::size_t>(r)];
    std::int64_t sum = 0;
    for (auto v : row) sum += v;
    for (int c = 0; c < n; ++c) {
      const double f = sum == 0 ? 0.0 : static_cast<double>(row[static_cast<std::size_t>(c)]) / static_cast<double>(sum);
      const auto lerp = [f](int from, int to) { return static_cast<std::uint8_t>(std::lround(from + (to - from) * f)); };
      const dataset::Rgb color{lerp(255, 8), lerp(255, 48), lerp(255, 107)};
      for (int y = r * cell_px; y < (r + 1) * cell_px; ++y)
        for (int x = c * cell_px; x < (c + 1) * cell_px; ++x) img.set(x, y, color);
    }
  }
  return img;
}

void write_report(const EvalReport& report, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto write_text = [](const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
    if (!f) throw ReadError(fmt::format("{}: write failed", p.string()));
  };
  auto base = stem.string();
  write_text(base + ".txt", format_report(report));
  write_text(base + ".tsv", confusion_tsv(report));
  condense::write_png(confusion_heatmap(report), base + ".png");
}

}  // namespace gestigo::eval

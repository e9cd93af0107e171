// SPDX-License-Identifier: Apache-2.0
#include "gestigo/net/train.hpp"

#include <chrono>
#include <exception>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "gestigo/condense/encode.hpp"
#include "gestigo/condense/png_io.hpp"
#include "gestigo/condense/render.hpp"
#include "gestigo/error.hpp"
#include "gestigo/net/predict.hpp"
#include "gestigo/nn/checkpoint.hpp"
#include "gestigo/nn/optim.hpp"
#include "gestigo/rng.hpp"

namespace fs = std::filesystem;

namespace gestigo::net {

RasterImage Sample::view(std::size_t k) const {
  if (!views.empty()) return views.at(k);
  return condense::read_png(files.at(k));
}

int class_index(int dataset_label, const std::vector<int>& class_labels) {
  if (class_labels.empty()) return dataset_label - 1;
  for (std::size_t k = 0; k < class_labels.size(); ++k)
    if (class_labels[k] == dataset_label) return static_cast<int>(k);
  return -1;
}

SampleSet load_encoded(const fs::path& encoded_root, dataset::DatasetId id,
                       const std::vector<condense::VoName>& vos, const std::vector<int>& class_labels) {
  if (vos.empty()) throw ArgumentError("load_encoded: no view orientations");
  const fs::path index = condense::encoded_manifest_path(encoded_root, id);
  if (!fs::exists(index)) throw NotFoundError(fmt::format("{}: encoded manifest not found", index.string()));
  const auto manifest = dataset::read_index(index, encoded_root);
  SampleSet set;
  for (const auto& e : manifest.entries) {
    const int cls = class_index(e.label, class_labels);
    if (cls < 0) continue;
    Sample s;
    s.label = cls;
    s.locator = e.locator;
    for (auto vo : vos) {
      auto path = condense::encoded_image_path(encoded_root, id, vo, e.split, e.label, e.locator);
      if (!fs::exists(path)) throw NotFoundError(fmt::format("{}: encoded image not found", path.string()));
      s.files.push_back(std::move(path));
    }
    (e.split == dataset::SplitTag::kTrain ? set.train : set.val).push_back(std::move(s));
  }
  return set;
}

SampleSet condense_set(const dataset::DatasetManifest& manifest, const std::vector<condense::ViewOrientation>& vos,
                       int master_px, const std::vector<int>& class_labels) {
  if (vos.empty()) throw ArgumentError("condense_set: no view orientations");
  const auto cfg = condense::RenderConfig::for_size(master_px);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (class_index(manifest.entries[i].label, class_labels) >= 0) keep.push_back(i);
  std::vector<Sample> samples(keep.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(keep.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& e = manifest.entries[keep[static_cast<std::size_t>(i)]];
      const auto seq = dataset::load_sequence(manifest, keep[static_cast<std::size_t>(i)]);
      Sample& s = samples[static_cast<std::size_t>(i)];
      s.label = class_index(e.label, class_labels);
      s.locator = e.locator;
      for (const auto& vo : vos) s.views.push_back(condense::condense(seq, vo, cfg));
    } catch (...) {
#pragma omp critical(gestigo_condense_set_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  SampleSet set;
  for (std::size_t i = 0; i < keep.size(); ++i)
    (manifest.entries[keep[i]].split == dataset::SplitTag::kTrain ? set.train : set.val).push_back(std::move(samples[i]));
  return set;
}

namespace {

using Images = std::vector<std::vector<RasterImage>>;

Images resize_all(const std::vector<Sample>& samples, int size) {
  Images out(samples.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Sample& s = samples[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < s.view_count(); ++k)
        out[static_cast<std::size_t>(i)].push_back(condense::resize_area(s.view(k), size, size));
    } catch (...) {
#pragma omp critical(gestigo_resize_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(const E2eetModel<float>& model) {
  Snapshot s;
  for (const auto& t : model.state()) s.emplace_back(t.data().begin(), t.data().end());
  return s;
}

void restore(const E2eetModel<float>& model, const Snapshot& s) {
  auto state = model.state();
  for (std::size_t i = 0; i < state.size(); ++i) std::copy(s[i].begin(), s[i].end(), state[i].data().begin());
}

std::int64_t batches_per_epoch(std::size_t n, int batch) {
  const auto b = static_cast<std::size_t>(batch);
  return static_cast<std::int64_t>(n / b + (n % b >= 2 ? 1 : 0));
}

struct EpochMeans {
  std::vector<double> losses;
  double total = 0.0;
};

class Runner {
 public:
  Runner(E2eetModel<float>& model, const SampleSet& data, const TrainConfig& cfg)
      : model_(model), cfg_(cfg) {
    for (const auto& s : data.train) labels_.push_back(s.label);
  }

  /// One pass over the training cache. `key` separates shuffles and augmentation draws.
  EpochMeans epoch(const Images& cache, nn::Adam<float>& opt, double base_lr, std::int64_t& step,
                   std::int64_t total_steps, std::uint64_t key) {
    const int j = model_.config().stream_count;
    std::vector<std::size_t> order(cache.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(mix_seed(cfg_.seed, key));
    shuffle.shuffle(order);
    Rng drop(mix_seed(cfg_.seed, key ^ 0x5bd1e995ULL));
    nn::ForwardContext ctx{nn::Mode::kTrain, &drop, cfg_.exec};
    EpochMeans m;
    m.losses.assign(static_cast<std::size_t>(j + 1), 0.0);
    std::size_t batches = 0;
    const auto bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;
      std::vector<int> labels;
      std::vector<RasterImage> augmented;
      augmented.reserve((end - start) * static_cast<std::size_t>(j));
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        labels.push_back(labels_[idx]);
        for (int k = 0; k < j; ++k) {
          const auto& img = cache[idx][static_cast<std::size_t>(k)];
          if (cfg_.augment.enabled) {
            const auto plan = plan_augment(mix_seed(mix_seed(cfg_.seed, key), idx * 4 + static_cast<std::size_t>(k)), cfg_.augment);
            augmented.push_back(apply(img, plan));
          } else {
            augmented.push_back(img);
          }
        }
      }
      std::vector<nn::Tensor<float>> streams;
      for (int k = 0; k < j; ++k) {
        std::vector<const RasterImage*> imgs;
        for (std::size_t b = 0; b < end - start; ++b) imgs.push_back(&augmented[b * static_cast<std::size_t>(j) + static_cast<std::size_t>(k)]);
        streams.push_back(images_to_tensor<float>(imgs));
      }
      const auto out = model_.forward(streams, ctx);
      const auto ls = model_.losses(out, labels);
      auto total = model_.total_loss(ls);
      opt.zero_grad();
      nn::backward(total);
      opt.step(nn::cosine_lr(base_lr, step, total_steps));
      ++step;
      for (std::size_t k = 0; k < ls.size(); ++k) m.losses[k] += ls[k].item();
      m.total += total.item();
      ++batches;
    }
    for (auto& v : m.losses) v /= static_cast<double>(std::max<std::size_t>(batches, 1));
    m.total /= static_cast<double>(std::max<std::size_t>(batches, 1));
    return m;
  }

 private:
  E2eetModel<float>& model_;
  const TrainConfig& cfg_;
  std::vector<int> labels_;
};

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Accuracy accuracy_at(const E2eetModel<float>& model, const std::vector<Sample>& samples, int size, nn::Exec exec) {
  if (samples.empty()) throw ArgumentError("accuracy: empty sample set");
  const Images cache = resize_all(samples, size);
  std::vector<ViewSet> views;
  for (const auto& c : cache) {
    ViewSet v;
    for (const auto& img : c) v.push_back(&img);
    views.push_back(std::move(v));
  }
  const auto preds = infer(model, views, {}, 32, exec);
  const int j = model.config().stream_count;
  Accuracy acc;
  acc.streams.assign(static_cast<std::size_t>(j), 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].decided_class() == samples[i].label) acc.tuner += 1.0;
    for (int k = 0; k < j; ++k)
      if (argmax(preds[i].per_stream_probs[static_cast<std::size_t>(k)]) == samples[i].label) acc.streams[static_cast<std::size_t>(k)] += 1.0;
  }
  const auto n = static_cast<double>(samples.size());
  acc.tuner /= n;
  for (auto& a : acc.streams) a /= n;
  return acc;
}

std::string summary_header(int streams) {
  std::string h = "stage\tsize\tepoch\tlr";
  for (int k = 1; k <= streams + 1; ++k) h += fmt::format("\tL_{}", k);
  for (int k = 1; k <= streams + 1; ++k) h += fmt::format("\ts_{}", k);
  return h + "\ttotal\tval_acc";
}

std::string summary_line(const EpochRecord& r) {
  std::string l = fmt::format("{}\t{}\t{}\t{:.6g}", r.stage, r.size, r.epoch, r.lr);
  for (double v : r.losses) l += fmt::format("\t{:.6f}", v);
  for (double v : r.log_vars) l += fmt::format("\t{:.6f}", v);
  return l + fmt::format("\t{:.6f}\t{:.6f}", r.total, r.val_accuracy);
}

TrainReport train(E2eetModel<float>& model, const SampleSet& data, const TrainConfig& cfg) {
  const auto& mc = model.config();
  const int j = mc.stream_count;
  if (data.train.empty()) throw ArgumentError("train: empty training split");
  if (data.val.empty()) throw ArgumentError("train: empty validation split");
  if (cfg.batch_size < 2) throw ArgumentError("train: batch size must be at least 2");
  if (cfg.epochs_per_stage < 1) throw ArgumentError("train: epochs per stage must be positive");
  if (!cfg.lr && cfg.lr_grid.empty()) throw ArgumentError("train: empty learning-rate grid");
  for (const auto* split : {&data.train, &data.val})
    for (const auto& s : *split) {
      if (static_cast<int>(s.view_count()) != j)
        throw ArgumentError(fmt::format("train: {} has {} views, model expects {}", s.locator, s.view_count(), j));
      if (s.label < 0 || s.label >= mc.class_count)
        throw ArgumentError(fmt::format("train: {} has label {} outside [0, {})", s.locator, s.label, mc.class_count));
    }
  if (batches_per_epoch(data.train.size(), cfg.batch_size) == 0)
    throw ArgumentError("train: fewer than two training samples");

  std::ofstream log;
  std::ofstream summary;
  if (!cfg.report_dir.empty()) {
    fs::create_directories(cfg.report_dir);
    log.open(cfg.report_dir / "train.log");
    summary.open(cfg.report_dir / "summary.tsv");
    if (!log || !summary) throw ReadError(fmt::format("{}: cannot write training report", cfg.report_dir.string()));
    summary << "# seed=" << cfg.seed << '\n' << summary_header(j) << '\n';
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto say = [&](const std::string& line) {
    const std::string stamped = fmt::format("[{:8.1f}s] {}", elapsed(t0), line);
    if (log) log << stamped << '\n' << std::flush;
    if (cfg.progress) *cfg.progress << stamped << '\n' << std::flush;
  };

  TrainReport report;
  Runner runner(model, data, cfg);
  Snapshot best_state;
  say(fmt::format("train {} samples, val {} samples, {} streams, {} classes, seed {}", data.train.size(),
                  data.val.size(), j, mc.class_count, cfg.seed));
  try {
    const auto stage_batches = batches_per_epoch(data.train.size(), cfg.batch_size);
    if (cfg.lr) {
      report.chosen_lr = *cfg.lr;
    } else {
      const int size = mc.stage_sizes.front();
      const Images cache = resize_all(data.train, size);
      const Snapshot initial = snapshot(model);
      double best = -1.0;
      for (std::size_t g = 0; g < cfg.lr_grid.size(); ++g) {
        restore(model, initial);
        nn::Adam<float> opt(model.parameters());
        std::int64_t step = 0;
        const std::int64_t total = stage_batches * cfg.probe_epochs;
        for (int e = 0; e < cfg.probe_epochs; ++e)
          runner.epoch(cache, opt, cfg.lr_grid[g], step, total, 0xabc000 + g * 100 + static_cast<std::uint64_t>(e));
        const double acc = accuracy_at(model, data.val, size, cfg.exec).tuner;
        report.lr_probe.emplace_back(cfg.lr_grid[g], acc);
        say(fmt::format("lr probe {:.6g}: val_acc {:.4f}", cfg.lr_grid[g], acc));
        if (acc > best) {
          best = acc;
          report.chosen_lr = cfg.lr_grid[g];
        }
      }
      restore(model, initial);
    }
    say(fmt::format("learning rate {:.6g}", report.chosen_lr));

    for (std::size_t st = 0; st < mc.stage_sizes.size(); ++st) {
      const int size = mc.stage_sizes[st];
      const Images cache = resize_all(data.train, size);
      nn::Adam<float> opt(model.parameters());
      std::int64_t step = 0;
      const std::int64_t total = stage_batches * cfg.epochs_per_stage;
      for (int e = 0; e < cfg.epochs_per_stage; ++e) {
        const auto means = runner.epoch(cache, opt, report.chosen_lr, step, total, (st + 1) * 1000 + static_cast<std::uint64_t>(e));
        const auto acc = accuracy_at(model, data.val, size, cfg.exec);
        EpochRecord r;
        r.stage = static_cast<int>(st) + 1;
        r.size = size;
        r.epoch = e + 1;
        r.lr = report.chosen_lr;
        r.losses = means.losses;
        r.total = means.total;
        for (float s : model.log_vars().data()) r.log_vars.push_back(s);
        r.val_accuracy = acc.tuner;
        r.stream_val_accuracy = acc.streams;
        report.epochs.push_back(r);
        if (summary) summary << summary_line(r) << '\n' << std::flush;
        say(fmt::format("stage {} size {} epoch {}: total {:.4f} val_acc {:.4f} streams [{:.4f}]", r.stage, size,
                        r.epoch, r.total, r.val_accuracy, fmt::join(r.stream_val_accuracy, ", ")));
        if (acc.tuner > report.best_val_accuracy) {
          report.best_val_accuracy = acc.tuner;
          report.best_epoch = report.epochs.size() - 1;
          best_state = snapshot(model);
          if (!cfg.checkpoint.empty()) {
            save_model(model, cfg.checkpoint);
            say(fmt::format("checkpoint {} (val_acc {:.4f})", cfg.checkpoint.string(), acc.tuner));
          }
        }
      }
    }
  } catch (const NumericError& e) {
    say(fmt::format("numeric error: {}; keeping the last checkpoint", e.what()));
    throw;
  }
  restore(model, best_state);
  say(fmt::format("best val_acc {:.4f} at stage {} epoch {}", report.best_val_accuracy,
                  report.epochs[report.best_epoch].stage, report.epochs[report.best_epoch].epoch));
  return report;
}

}  // namespace gestigo::net

// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: gestigo_acceptance [criterion numbers...]
#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "gestigo/condense/geometry.hpp"
#include "gestigo/condense/png_io.hpp"
#include "gestigo/condense/render.hpp"
#include "gestigo/dataset/manifest.hpp"
#include "gestigo/error.hpp"
#include "gestigo/eval/vo_search.hpp"
#include "gestigo/net/model.hpp"
#include "gestigo/net/predict.hpp"
#include "gestigo/net/train.hpp"
#include "gestigo/rng.hpp"
#include "gestigo/service/server.hpp"
#include "gestigo/synth/generator.hpp"
#include "gradcheck_suite.hpp"
#include "tempdir.hpp"

using namespace gestigo;
using condense::Vec3;
using condense::VoName;
using dataset::DatasetId;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kPadding = 0.125;
constexpr int kCanvasPx = 960;
constexpr double kCentroidTolPx = 0.5;
constexpr double kGeometryBudgetS = 60.0;
constexpr std::size_t kWindow = 250;
constexpr double kResampleRelTol = 1e-12;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsTol = 1e-6;
constexpr int kGradProbes = 5;
constexpr double kGradBudgetS = 300.0;
constexpr double kHomoscedasticTol = 1e-7;
constexpr double kPseudoTol = 1.0 / 255.0;
constexpr double kSwipeMinAccuracy = 0.70;
constexpr double kSwipeBudgetS = 1800.0;
constexpr double kOnlineProbTol = 1e-6;
constexpr double kServerLatencyMs = 500.0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Synthetic dataset trees shared by several criteria.
struct Trees {
  testing::TempDir dir{"acceptance"};
  fs::path root(DatasetId id) const { return dir.path() / std::string(dataset::to_string(id)); }

  fs::path ensure(DatasetId id) {
    const auto p = root(id);
    if (!written.contains(id)) {
      synth::TreeOptions opt;
      opt.official_split_files = id == DatasetId::kShrec2017_14G;
      synth::write_tree(id, p, opt);
      written.insert(id);
    }
    return p;
  }

  std::set<DatasetId> written;
};

Trees& trees() {
  static Trees t;
  return t;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

// Geometry oracle -------------------------------------------------------------

Outcome geometry() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::vector<dataset::SkeletonSequence> gestures;
  for (auto id : {DatasetId::kDhg1428_14G, DatasetId::kLmdhg}) {
    const auto m = dataset::parse_dataset(id, trees().ensure(id));
    for (auto i : sample_indices(m.entries.size(), 100, rng)) gestures.push_back(dataset::load_sequence(m, i));
  }
  std::size_t joints = 0, outside = 0, off_center = 0, views = 0;
  std::map<std::string, std::size_t> outside_by_set;
  double worst_center = 0.0;
  for (const auto& g : gestures) {
    const auto fit = condense::fit_sequence(condense::resample_sequence(g, kWindow), 1.0, kPadding);
    const auto pts = fit.centered.coords();
    long double sx = 0, sy = 0, sz = 0;
    for (const auto& p : pts) {
      sx += p.x;
      sy += p.y;
      sz += p.z;
    }
    const auto n = static_cast<long double>(pts.size());
    const Vec3 centroid{static_cast<double>(sx / n), static_cast<double>(sy / n), static_cast<double>(sz / n)};
    const auto id = g.joint_count() == 46 ? DatasetId::kLmdhg : DatasetId::kDhg1428_14G;
    for (const auto& vo : condense::vo_table(id)) {
      ++views;
      for (const auto& q : condense::project(pts, fit, vo, kCanvasPx)) {
        ++joints;
        const bool out = !(q.x >= 0.0 && q.x <= kCanvasPx && q.y >= 0.0 && q.y <= kCanvasPx);
        outside += out;
        outside_by_set[std::string(dataset::to_string(id))] += out;
      }
      const auto c = condense::project(std::span<const Vec3>(&centroid, 1), fit, vo, kCanvasPx)[0];
      const double d = std::max(std::abs(c.x - kCanvasPx / 2.0), std::abs(c.y - kCanvasPx / 2.0));
      worst_center = std::max(worst_center, d);
      off_center += d > kCentroidTolPx;
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = gestures.size() == 200 && views == 1200 && outside == 0 && off_center == 0 && elapsed < kGeometryBudgetS;
  o.detail = fmt::format("{} gestures x 6 VOs, {} joints, {} outside (DHG1428 {}, LMDHG {}), worst centroid offset "
                         "{:.2e} px, {:.1f} s",
                         gestures.size(), joints, outside, outside_by_set["DHG1428_14G"], outside_by_set["LMDHG"],
                         worst_center, elapsed);
  return o;
}

// Condensation determinism ---------------------------------------------------

Outcome determinism() {
  Rng rng(202);
  const auto m = dataset::parse_dataset(DatasetId::kDhg1428_14G, trees().ensure(DatasetId::kDhg1428_14G));
  const auto cfg = condense::RenderConfig::for_size(kCanvasPx);
  const auto table = condense::vo_table(DatasetId::kDhg1428_14G);
  std::size_t identical = 0, gestures = 0;
  for (auto i : sample_indices(m.entries.size(), 50, rng)) {
    const auto seq = dataset::load_sequence(m, i);
    const Vec3 shift{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
    std::vector<Vec3> moved(seq.coords().begin(), seq.coords().end());
    for (auto& v : moved) {
      v.x += shift.x;
      v.y += shift.y;
      v.z += shift.z;
    }
    const auto shifted = seq.with_coords(std::move(moved));
    const auto& vo = table[gestures % table.size()];
    const auto a = condense::encode_png(condense::condense(seq, vo, cfg));
    const auto b = condense::encode_png(condense::condense(seq, vo, cfg));
    const auto c = condense::encode_png(condense::condense(shifted, vo, cfg));
    identical += a == b && a == c;
    ++gestures;
  }
  return {identical == gestures && gestures == 50,
          fmt::format("{}/{} gestures byte-identical on re-encode and under translation", identical, gestures)};
}

// Resampling oracle -----------------------------------------------------------

Outcome resampling() {
  Rng rng(303);
  const auto schema = dataset::dhg22_schema();
  double worst = 0.0;
  std::size_t bad_length = 0, bad_endpoint = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = 2 + rng.below(600);
    const auto seq = synth::random_sequence(schema, frames, rng.next(), rng.uniform(0.01, 5.0));
    const auto out = condense::resample_sequence(seq, kWindow);
    if (out.frame_count() != kWindow) {
      ++bad_length;
      continue;
    }
    const auto src = seq.coords();
    const auto got = out.coords();
    const std::size_t j = seq.joint_count();
    for (std::size_t k = 0; k < kWindow; ++k) {
      const long double u = static_cast<long double>(k) * static_cast<long double>(frames - 1) / (kWindow - 1);
      const auto i = std::min(static_cast<std::size_t>(u), frames - 2);
      const long double w = u - static_cast<long double>(i);
      for (std::size_t q = 0; q < j; ++q)
        for (int a = 0; a < 3; ++a) {
          const long double p0 = src[i * j + q][a], p1 = src[(i + 1) * j + q][a];
          const double want = static_cast<double>(p0 + w * (p1 - p0));
          const double have = got[k * j + q][a];
          worst = std::max(worst, std::abs(have - want) / std::max(1.0, std::abs(want)));
        }
    }
    for (std::size_t q = 0; q < j; ++q) {
      bad_endpoint += !(got[q] == src[q]);
      bad_endpoint += !(got[(kWindow - 1) * j + q] == src[(frames - 1) * j + q]);
    }
  }
  return {worst <= kResampleRelTol && bad_length == 0 && bad_endpoint == 0,
          fmt::format("1000 sequences, worst relative error {:.2e}, {} wrong lengths, {} inexact endpoints", worst,
                      bad_length, bad_endpoint)};
}

// Gradient checks --------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto checks = testing::run_gradcheck_suite(kGradProbes, 17);
  std::vector<std::string> failed;
  int min_probes = 1 << 30;
  double worst = 0.0;
  for (const auto& c : checks) {
    min_probes = std::min(min_probes, c.result.probes);
    worst = std::max(worst, c.result.worst_rel);
    if (!c.result.ok() || c.result.probes < kGradProbes) failed.push_back(c.name);
  }
  const double elapsed = seconds_since(t0);
  std::string names;
  for (const auto& f : failed) names += " " + f;
  return {failed.empty() && elapsed < kGradBudgetS,
          fmt::format("{} checks, h=1e-3, tol {:.0e} rel / {:.0e} abs, >= {} probes each, worst rel {:.2e}, {:.1f} s{}",
                      checks.size(), kGradRelTol, kGradAbsTol, min_probes, worst, elapsed,
                      failed.empty() ? "" : ", failed:" + names)};
}

// Homoscedastic reduction ---------------------------------------------------

Outcome homoscedastic() {
  Rng rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    net::ModelConfig c;
    c.stream_count = 1 + trial % 3;
    c.class_count = 4;
    c.encoder_widths = {4};
    c.tuner_widths = {2};
    c.head_hidden = 4;
    c.tuner_hidden = 4;
    c.stage_sizes = {8};
    c.pseudo_size = 8;
    c.master_px = 8;
    net::E2eetModel<double> model(c);
    std::vector<nn::Tensor<double>> losses;
    long double sum = 0.0L;
    for (int k = 0; k <= c.stream_count; ++k) {
      const double v = rng.uniform(0.0, 10.0);
      sum += v;
      losses.push_back(nn::Tensor<double>::from({1}, {v}));
    }
    worst = std::max(worst, static_cast<double>(std::abs(model.total_loss(losses).item() - sum)));
  }
  return {worst <= kHomoscedasticTol,
          fmt::format("300 models with j in {{1,2,3}}, s = 0, worst |total - sum| {:.2e}", worst)};
}

// Pseudo-image round trip ---------------------------------------------------

Outcome pseudo_round_trip() {
  Rng rng(606);
  double worst = 0.0;
  std::size_t vectors = 0;
  for (int j : {1, 2, 3})
    for (int n : {2, 14, 28, 45})
      for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::vector<double>> probs;
        for (int k = 0; k < j; ++k) {
          std::vector<double> p(static_cast<std::size_t>(n));
          double s = 0.0;
          for (auto& v : p) s += (v = -std::log(rng.uniform(1e-12, 1.0)));
          for (auto& v : p) v /= s;
          probs.push_back(std::move(p));
        }
        const auto back = net::decode_pseudo_image(net::pseudo_image(probs, 224), j, n);
        for (int k = 0; k < j; ++k)
          for (int c = 0; c < n; ++c)
            worst = std::max(worst, std::abs(back[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] -
                                             probs[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)]));
        ++vectors;
      }
  return {worst <= kPseudoTol,
          fmt::format("{} probability sets over j x N grid, worst error {:.5f} (limit {:.5f})", vectors, worst, kPseudoTol)};
}

// Swipe subset learning ------------------------------------------------------

const std::vector<VoName> kSwipeVos{VoName::kCustom, VoName::kTopDown, VoName::kFrontAway};
const std::vector<int> kSwipeLabels{7, 8, 9, 10, 11, 12, 13};

struct SwipeRun {
  dataset::DatasetManifest manifest;
  std::shared_ptr<net::E2eetModel<float>> model;
  net::Accuracy accuracy;
  double best = 0.0;
  double seconds = 0.0;
};

SwipeRun& swipe_run() {
  static std::unique_ptr<SwipeRun> run;
  if (run) return *run;
  run = std::make_unique<SwipeRun>();
  const auto t0 = Clock::now();
  const auto root = trees().dir.path() / "swipe";
  synth::TreeOptions topt;
  topt.gestures = kSwipeLabels;
  topt.subjects = 12;
  synth::write_tree(DatasetId::kDhg1428_14G, root, topt);
  dataset::ParseOptions popt;
  popt.enforce_protocol_counts = false;
  run->manifest = dataset::parse_dataset(DatasetId::kDhg1428_14G, root, popt);

  std::vector<condense::ViewOrientation> views;
  for (auto v : kSwipeVos) views.push_back(condense::lookup_vo(DatasetId::kDhg1428_14G, v));
  net::ModelConfig mc;
  mc.class_count = static_cast<int>(kSwipeLabels.size());
  mc.stream_count = 3;
  mc.stage_sizes = {56, 64};
  mc.pseudo_size = 28;
  mc.master_px = 128;
  mc.dataset = std::string(dataset::to_string(DatasetId::kDhg1428_14G));
  mc.class_labels = kSwipeLabels;
  const auto names = dataset::class_names(DatasetId::kDhg1428_14G);
  for (int l : kSwipeLabels) mc.class_names.push_back(names[static_cast<std::size_t>(l - 1)]);
  for (auto v : kSwipeVos) mc.vo_names.emplace_back(condense::to_string(v));
  const auto set = net::condense_set(run->manifest, views, mc.master_px, kSwipeLabels);

  run->model = std::make_shared<net::E2eetModel<float>>(mc);
  net::TrainConfig tc;
  tc.epochs_per_stage = 6;
  tc.augment.enabled = false;
  tc.seed = 17;
  tc.progress = &std::cerr;
  const auto report = net::train(*run->model, set, tc);
  run->best = report.best_val_accuracy;
  run->accuracy = net::accuracy_at(*run->model, set.val, mc.eval_size());
  run->seconds = seconds_since(t0);
  return *run;
}

Outcome swipe_learning() {
  const auto& r = swipe_run();
  const double worst_stream = *std::min_element(r.accuracy.streams.begin(), r.accuracy.streams.end());
  std::string streams;
  for (double a : r.accuracy.streams) streams += fmt::format(" {:.4f}", a);
  return {r.accuracy.tuner >= kSwipeMinAccuracy && r.accuracy.tuner >= worst_stream && r.seconds < kSwipeBudgetS,
          fmt::format("7 swipe classes, 3 streams, val accuracy {:.4f} (streams{}), {:.0f} s", r.accuracy.tuner, streams,
                      r.seconds)};
}

// VO search ------------------------------------------------------------------

Outcome vo_search() {
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(7000 + seed);
    std::map<eval::VoTuple, double> table;
    auto acc = [&](const eval::VoTuple& t) {
      auto it = table.find(t);
      if (it == table.end()) it = table.emplace(t, static_cast<double>(rng.below(50)) / 50.0).first;
      return it->second;
    };
    // Fill every triple first so the table is independent of query order.
    const auto& all = condense::all_vo_names();
    eval::VoTuple best;
    double best_acc = -1.0;
    auto name_of = [](const eval::VoTuple& t) {
      std::vector<std::string_view> n;
      for (auto v : t) n.push_back(condense::to_string(v));
      return n;
    };
    for (auto a : all)
      for (auto b : all)
        for (auto c : all) {
          if (a == b || b == c || a == c) continue;
          const eval::VoTuple t{a, b, c};
          const double v = acc(t);
          if (v > best_acc || (v == best_acc && name_of(t) < name_of(best))) {
            best = t;
            best_acc = v;
          }
        }
    eval::VoSearchState state;
    eval::VoSearchOptions opt;
    opt.top_k_singles = 6;
    opt.top_k_pairs = 30;
    agree += eval::vo_search(acc, state, opt) == best;
  }
  return {agree == 100, fmt::format("{}/100 random tables: full-width search equals exhaustive argmax", agree)};
}

// Online / offline equivalence ------------------------------------------------

Outcome online_offline() {
  auto& r = swipe_run();
  std::shared_ptr<const net::E2eetModel<float>> model = r.model;
  auto engine = std::make_shared<const service::Engine>(model, kSwipeVos);
  service::ServerConfig cfg;
  cfg.port = 0;
  service::Server server(engine, cfg);
  const auto port = server.start();

  std::vector<std::size_t> val;
  for (std::size_t i = 0; i < r.manifest.entries.size(); ++i)
    if (r.manifest.entries[i].split == dataset::SplitTag::kVal) val.push_back(i);
  Rng rng(909);
  std::size_t same = 0, n = 0;
  double worst_prob = 0.0, worst_latency = 0.0;
  for (auto i : sample_indices(val.size(), 50, rng)) {
    const auto seq = dataset::load_sequence(r.manifest, val[i]);
    const auto offline = net::predict(seq, kSwipeVos, *model);
    service::ReplayOptions opt;
    opt.port = port;
    opt.fps = 0;
    const auto online = service::replay(seq, opt).prediction;
    bool match = online.decided == offline.decided_class() && online.tuner.size() == offline.tuner_probs.size() &&
                 online.streams.size() == offline.per_stream_probs.size();
    if (match) {
      for (std::size_t k = 0; k < offline.tuner_probs.size(); ++k)
        worst_prob = std::max(worst_prob, std::abs(online.tuner[k] - offline.tuner_probs[k]));
      for (std::size_t s = 0; s < offline.per_stream_probs.size(); ++s)
        for (std::size_t k = 0; k < offline.per_stream_probs[s].size(); ++k)
          worst_prob = std::max(worst_prob, std::abs(online.streams[s][k] - offline.per_stream_probs[s][k]));
    }
    worst_latency = std::max(worst_latency, online.latency.total_ms);
    same += match;
    ++n;
  }
  server.stop();
  return {same == n && n == 50 && worst_prob <= kOnlineProbTol && worst_latency < kServerLatencyMs,
          fmt::format("{}/{} same class, worst probability gap {:.2e}, worst server latency {:.1f} ms", same, n,
                      worst_prob, worst_latency)};
}

// Protocol counts --------------------------------------------------------------

Outcome protocol_counts() {
  struct Want {
    DatasetId id;
    std::size_t total, train, val;
  };
  const Want wants[] = {{DatasetId::kShrec2017_14G, 2800, 0, 0},
                        {DatasetId::kDhg1428_14G, 2800, 0, 0},
                        {DatasetId::kLmdhg, 608, 414, 194},
                        {DatasetId::kFpha, 1175, 600, 575}};
  bool ok = true;
  std::string detail;
  for (const auto& w : wants) {
    const auto m = dataset::parse_dataset(w.id, trees().ensure(w.id));
    std::size_t train = 0, val = 0;
    for (const auto& e : m.entries) (e.split == dataset::SplitTag::kTrain ? train : val) += 1;
    const bool split_ok = w.train == 0 || (train == w.train && val == w.val);
    ok = ok && m.entries.size() == w.total && split_ok;
    detail += fmt::format("{}{} {}/{}/{}", detail.empty() ? "" : ", ", dataset::to_string(w.id), m.entries.size(),
                          train, val);
  }
  return {ok, detail + " (total/train/val)"};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "geometry", geometry},
      {2, "determinism", determinism},
      {3, "resampling", resampling},
      {4, "gradient checks", gradients},
      {5, "homoscedastic reduction", homoscedastic},
      {6, "pseudo-image round trip", pseudo_round_trip},
      {7, "swipe subset learning", swipe_learning},
      {8, "vo-search correctness", vo_search},
      {9, "online/offline equivalence", online_offline},
      {10, "protocol counts", protocol_counts},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.number)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !o.pass;
    std::cout << fmt::format("{} [{}] {}: {}", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

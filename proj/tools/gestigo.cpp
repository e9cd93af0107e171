// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gestigo/condense/encode.hpp"
#include "gestigo/error.hpp"
#include "gestigo/eval/report.hpp"
#include "gestigo/eval/vo_search.hpp"
#include "gestigo/net/predict.hpp"
#include "gestigo/net/train.hpp"
#include "gestigo/service/server.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace gestigo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumeric:
    case ErrorKind::kGraph:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-', 1);
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int a = std::stoi(part.substr(0, dash));
        const int b = std::stoi(part.substr(dash + 1));
        if (b < a) throw ArgumentError(fmt::format("empty range '{}'", part));
        for (int v = a; v <= b; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ArgumentError(fmt::format("'{}' is not an integer list", text));
    }
  }
  return out;
}

std::pair<std::string, unsigned short> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ArgumentError(fmt::format("endpoint '{}' is not host:port", text));
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw ArgumentError(fmt::format("port {} out of range", port));
  return {text.substr(0, colon), static_cast<unsigned short>(port)};
}

struct DataOptions {
  std::string dataset;
  std::string root;
  std::string encoded;
  std::string classes;
  int master = condense::kDefaultImagePx;
  bool no_protocol_check = false;
  bool fpha_camera = false;
  std::uint64_t seed = 17;

  void add(CLI::App* app, bool with_master = true) {
    app->add_option("--dataset", dataset, "Dataset id (SHREC2017_14G, SHREC2017_28G, DHG1428_14G, DHG1428_28G, LMDHG, FPHA)")
        ->required();
    app->add_option("--root", root, "Dataset root with skeleton files (condensed in memory)")->check(CLI::ExistingDirectory);
    app->add_option("--encoded", encoded, "Output directory of a previous `encode` run")->check(CLI::ExistingDirectory);
    app->add_option("--classes", classes, "Dataset labels to keep, e.g. 7-13 or 1,4,9 (default all)");
    if (with_master) app->add_option("--master", master, "Master image size when condensing from --root")->capture_default_str();
    app->add_flag("--no-protocol-check", no_protocol_check, "Accept trees whose counts differ from the protocol");
    app->add_flag("--fpha-camera", fpha_camera, "FPHA: apply the world-to-camera extrinsic");
  }

  dataset::DatasetId id() const { return dataset::dataset_from_string(dataset); }

  dataset::ParseOptions parse_options() const {
    dataset::ParseOptions o;
    o.seed = seed;
    o.enforce_protocol_counts = !no_protocol_check;
    o.fpha_camera_transform = fpha_camera;
    return o;
  }

  std::vector<int> class_labels() const { return parse_int_list(classes); }

  std::vector<std::string> class_names() const {
    const auto all = dataset::class_names(id());
    const auto labels = class_labels();
    if (labels.empty()) return all;
    std::vector<std::string> out;
    for (int l : labels) {
      if (l < 1 || l > static_cast<int>(all.size()))
        throw ArgumentError(fmt::format("class label {} outside [1, {}]", l, all.size()));
      out.push_back(all[static_cast<std::size_t>(l - 1)]);
    }
    return out;
  }

  void check_source() const {
    if (root.empty() == encoded.empty()) throw CLI::ValidationError("exactly one of --root and --encoded is required");
  }

  /// Samples for `vos`; sets `master_px` to the image size actually used.
  net::SampleSet load(const std::vector<condense::ViewOrientation>& vos, int& master_px) const {
    if (!encoded.empty()) {
      std::vector<condense::VoName> names;
      for (const auto& v : vos) names.push_back(v.name);
      auto set = net::load_encoded(encoded, id(), names, class_labels());
      const auto& any = !set.train.empty() ? set.train.front() : set.val.at(0);
      master_px = any.view(0).width();
      return set;
    }
    const auto manifest = dataset::parse_dataset(id(), root, parse_options());
    master_px = master;
    return net::condense_set(manifest, vos, master, class_labels());
  }
};

struct TrainOptions {
  std::string vos = "custom,top-down,front-away";
  int streams = 0;
  int epochs = 8;
  std::string stages = "224,276,328,380";
  int batch = 16;
  std::optional<double> lr;
  int probe_epochs = 1;
  int pseudo = 224;
  bool no_augment = false;

  void add(CLI::App* app, bool with_vos = true) {
    if (with_vos) {
      app->add_option("--vos", vos, "Ordered VO names, comma separated")->capture_default_str();
      app->add_option("--streams", streams, "Use only the first N VOs of --vos");
    }
    app->add_option("--epochs", epochs, "Epochs per progressive stage")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--stages", stages, "Progressive input sizes")->capture_default_str();
    app->add_option("--batch", batch, "Batch size")->capture_default_str()->check(CLI::Range(2, 4096));
    app->add_option("--lr", lr, "Fixed learning rate (skips the grid probe)")->check(CLI::PositiveNumber);
    app->add_option("--probe-epochs", probe_epochs, "Epochs per learning-rate probe")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--pseudo-size", pseudo, "Pseudo-image side")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_flag("--no-augment", no_augment, "Disable training augmentation");
  }

  std::vector<condense::ViewOrientation> views(dataset::DatasetId id) const {
    auto v = condense::parse_vo_list(id, vos);
    if (streams > 0) {
      if (streams > static_cast<int>(v.size()) || streams > 3)
        throw ArgumentError(fmt::format("--streams {} exceeds the {} given VOs (max 3)", streams, v.size()));
      v.resize(static_cast<std::size_t>(streams));
    }
    return v;
  }

  net::TrainConfig train_config(std::uint64_t seed) const {
    net::TrainConfig c;
    c.epochs_per_stage = epochs;
    c.batch_size = batch;
    c.lr = lr;
    c.probe_epochs = probe_epochs;
    c.augment.enabled = !no_augment;
    c.seed = seed;
    c.progress = &std::cerr;
    return c;
  }

  net::ModelConfig model_config(const DataOptions& data, const std::vector<condense::ViewOrientation>& vos,
                                int master_px) const {
    net::ModelConfig m;
    m.class_labels = data.class_labels();
    m.class_names = data.class_names();
    m.class_count = static_cast<int>(m.class_names.size());
    m.stream_count = static_cast<int>(vos.size());
    m.stage_sizes = parse_int_list(stages);
    m.pseudo_size = pseudo;
    m.master_px = master_px;
    m.dataset = data.dataset;
    for (const auto& v : vos) m.vo_names.emplace_back(condense::to_string(v.name));
    m.seed = data.seed;
    return m;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw ReadError(fmt::format("{}: write failed", path.string()));
}

int run_encode(const DataOptions& data, const std::string& vos, const std::string& out) {
  if (data.root.empty()) throw CLI::ValidationError("encode needs --root");
  const auto manifest = dataset::parse_dataset(data.id(), data.root, data.parse_options());
  condense::EncodeOptions opt;
  opt.views = condense::parse_vo_list(data.id(), vos);
  opt.render = condense::RenderConfig::for_size(data.master);
  const auto n = condense::encode_dataset(manifest, out, opt);
  std::cout << fmt::format("encoded {} gestures x {} views = {} images into {}\n", manifest.entries.size(),
                           opt.views.size(), n, out);
  return kExitOk;
}

int run_train(const DataOptions& data, const TrainOptions& topt, const std::string& out) {
  data.check_source();
  const auto vos = topt.views(data.id());
  int master = 0;
  const auto set = data.load(vos, master);
  net::E2eetModel<float> model(topt.model_config(data, vos, master));
  auto cfg = topt.train_config(data.seed);
  cfg.checkpoint = fs::path(out) / "model.ckpt";
  cfg.report_dir = fs::path(out) / "report";
  const auto report = net::train(model, set, cfg);
  std::cout << fmt::format("seed: {}\nlearning rate: {}\nbest val accuracy: {:.6f}\ncheckpoint: {}\n", data.seed,
                           report.chosen_lr, report.best_val_accuracy, cfg.checkpoint.string());
  return kExitOk;
}

int run_eval(const DataOptions& data, const std::string& model_path, const std::string& vos_text, const std::string& out) {
  data.check_source();
  const auto model = net::load_model(model_path);
  const auto& mc = model->config();
  if (!vos_text.empty()) {
    std::vector<std::string> want;
    for (const auto& v : condense::parse_vo_list(data.id(), vos_text)) want.emplace_back(condense::to_string(v.name));
    std::vector<std::string> have;
    for (const auto& v : mc.vo_names) have.emplace_back(condense::to_string(condense::vo_from_string(v)));
    if (want != have)
      throw ConfigError(fmt::format("VO sequence [{}] does not match the checkpoint's [{}]", fmt::join(want, ","),
                                    fmt::join(have, ",")));
  }
  if (mc.dataset != data.dataset)
    throw ConfigError(fmt::format("checkpoint was trained on {}, not {}", mc.dataset, data.dataset));
  DataOptions d = data;
  d.master = mc.master_px;
  if (d.classes.empty() && !mc.class_labels.empty()) d.classes = fmt::format("{}", fmt::join(mc.class_labels, ","));
  int master = 0;
  const auto set = d.load(net::model_views(mc), master);
  const auto report = eval::evaluate(*model, set.val, data.seed);
  if (!out.empty()) eval::write_report(report, out);
  std::cout << fmt::format("seed: {}\nsamples: {}\naccuracy: {:.6f}\n", data.seed, report.total(), report.accuracy);
  for (const auto& p : eval::confusion_pairs(report, 3))
    std::cout << fmt::format("confused: {} / {}: {}\n", mc.class_names.at(static_cast<std::size_t>(p.a)),
                             mc.class_names.at(static_cast<std::size_t>(p.b)), p.count);
  return kExitOk;
}

int run_vo_search(const DataOptions& data, const TrainOptions& topt, int top_singles, int top_pairs, const std::string& out) {
  data.check_source();
  const auto all = condense::parse_vo_list(data.id(), "all");
  int master = 0;
  const auto full = data.load(all, master);
  eval::VoSearchState state;
  const auto trainer = [&](const eval::VoTuple& tuple) {
    std::vector<condense::ViewOrientation> vos;
    std::vector<std::size_t> index;
    for (auto name : tuple) {
      const auto it = std::find_if(all.begin(), all.end(), [name](const auto& v) { return v.name == name; });
      vos.push_back(*it);
      index.push_back(static_cast<std::size_t>(it - all.begin()));
    }
    net::SampleSet subset;
    for (const auto* src : {&full.train, &full.val}) {
      auto& dst = src == &full.train ? subset.train : subset.val;
      for (const auto& s : *src) {
        net::Sample t;
        t.label = s.label;
        t.locator = s.locator;
        for (auto k : index) {
          if (!s.views.empty()) t.views.push_back(s.views[k]);
          if (!s.files.empty()) t.files.push_back(s.files[k]);
        }
        dst.push_back(std::move(t));
      }
    }
    net::E2eetModel<float> model(topt.model_config(data, vos, master));
    auto cfg = topt.train_config(data.seed);
    cfg.progress = nullptr;
    const double acc = net::train(model, subset, cfg).best_val_accuracy;
    std::cerr << fmt::format("vo-search {}: {:.4f}\n", eval::tuple_string(tuple), acc);
    return acc;
  };
  eval::VoSearchOptions opt;
  opt.top_k_singles = top_singles;
  opt.top_k_pairs = top_pairs;
  eval::VoTuple best;
  try {
    best = eval::vo_search(trainer, state, opt);
  } catch (...) {
    if (!out.empty()) write_text(fs::path(out) / "vo_search_partial.tsv", eval::format_search(state, {}));
    throw;
  }
  if (!out.empty()) write_text(fs::path(out) / "vo_search.tsv", eval::format_search(state, best));
  std::cout << fmt::format("seed: {}\ntrainings: {}\nbest: {}\n", data.seed, state.trainings, eval::tuple_string(best));
  return kExitOk;
}

int run_serve(const std::string& model_path, const std::string& vos_text, const std::string& bind, int max_sessions,
              const std::string& ui, int idle_ms, int max_frames) {
  const auto model = net::load_model(model_path);
  const auto id = dataset::dataset_from_string(model->config().dataset);
  std::vector<condense::VoName> vos;
  for (const auto& v : condense::parse_vo_list(id, vos_text)) vos.push_back(v.name);
  auto engine = std::make_shared<service::Engine>(model, vos);
  service::ServerConfig cfg;
  std::tie(cfg.address, cfg.port) = parse_endpoint(bind);
  cfg.max_sessions = max_sessions;
  cfg.ui_dir = ui;
  cfg.session.idle_timeout = std::chrono::milliseconds(idle_ms);
  cfg.session.max_frames = static_cast<std::size_t>(max_frames);
  service::Server server(engine, cfg);
  const auto port = server.start();
  std::cerr << fmt::format("serving {} on {}:{} (vos {})\n", model_path, cfg.address, port, vos_text);
  server.wait();
  return kExitOk;
}

int run_replay(const std::string& dataset_name, const std::string& file, const std::string& endpoint, double fps,
               int timeout_ms) {
  const auto id = dataset::dataset_from_string(dataset_name);
  const auto schema = dataset::schema_for(id);
  std::ifstream f(file, std::ios::binary);
  if (!f) throw NotFoundError(fmt::format("{}: cannot open", file));
  std::stringstream text;
  text << f.rdbuf();
  auto coords = dataset::parse_frames(text.str(), schema->joint_count, file, id == dataset::DatasetId::kFpha);
  const auto seq = dataset::SkeletonSequence::create(schema, std::move(coords), 0, std::nullopt, file);
  service::ReplayOptions opt;
  std::tie(opt.host, opt.port) = parse_endpoint(endpoint);
  opt.fps = fps;
  opt.timeout = std::chrono::milliseconds(timeout_ms);
  const auto r = service::replay(seq, opt);
  std::cout << service::to_json(r.prediction).dump() << '\n';
  std::cerr << fmt::format("streamed {} frames in {:.0f} ms, prediction after {:.0f} ms\n", seq.frame_count(),
                           r.streaming_ms, r.response_ms);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gestigo: skeleton gesture condensation and e2eET multi-stream classification"};
  app.set_config("--config", "", "Read options from a `key = value` file (flags take precedence)");
  app.require_subcommand(1);
  std::uint64_t seed = 17;
  app.add_option("--seed", seed, "Seed for splits, initialization and augmentation")->capture_default_str();
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: GESTIGO_THREADS or all cores)")->check(CLI::PositiveNumber);

  DataOptions data;
  TrainOptions topt;

  auto* encode = app.add_subcommand("encode", "Condense a dataset into per-VO PNG images");
  std::string encode_vos = "all";
  std::string out;
  data.add(encode);
  encode->add_option("--vos", encode_vos, "VO list or 'all'")->capture_default_str();
  encode->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train an e2eET model");
  DataOptions train_data;
  train_data.add(train);
  topt.add(train);
  std::string train_out;
  train->add_option("--out", train_out, "Directory for model.ckpt and report/")->required();

  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  DataOptions eval_data;
  eval_data.add(evalc, false);
  std::string model_path, eval_vos, eval_out;
  evalc->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  evalc->add_option("--vos", eval_vos, "Expected VO order (must match the checkpoint)");
  evalc->add_option("--out", eval_out, "Report path stem (.txt, .tsv, .png)");

  auto* search = app.add_subcommand("vo-search", "Iterative VO-sequence search");
  DataOptions search_data;
  TrainOptions search_topt;
  search_data.add(search);
  search_topt.add(search, false);
  int top_singles = 3, top_pairs = 3;
  std::string search_out;
  search->add_option("--top-singles", top_singles, "Singles advanced to the pair step")->capture_default_str();
  search->add_option("--top-pairs", top_pairs, "Pairs advanced to the triple step")->capture_default_str();
  search->add_option("--out", search_out, "Directory for vo_search.tsv");

  auto* serve = app.add_subcommand("serve", "Run the WebSocket gesture service");
  std::string serve_model, serve_vos = "custom,top-down,front-away", bind = "127.0.0.1:8765", ui;
  int max_sessions = 16, idle_ms = 800, max_frames = 1024;
  serve->add_option("--model", serve_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--vos", serve_vos, "VO order (must match the checkpoint)")->capture_default_str();
  serve->add_option("--bind", bind, "Listen address host:port")->capture_default_str();
  serve->add_option("--max-sessions", max_sessions, "Concurrent sessions")->capture_default_str()->check(CLI::PositiveNumber);
  serve->add_option("--ui", ui, "Directory of static UI files")->check(CLI::ExistingDirectory);
  serve->add_option("--idle-ms", idle_ms, "Auto-stop after this long without frames (0 disables)")->capture_default_str();
  serve->add_option("--max-frames", max_frames, "Frame buffer size")->capture_default_str()->check(CLI::PositiveNumber);

  auto* replayc = app.add_subcommand("replay", "Stream a recorded sequence to a running service");
  std::string replay_dataset, replay_file, endpoint = "127.0.0.1:8765";
  double fps = 15.0;
  int timeout_ms = 30000;
  replayc->add_option("--dataset", replay_dataset, "Dataset id giving the file's joint layout")->required();
  replayc->add_option("--sequence", replay_file, "Skeleton file")->required()->check(CLI::ExistingFile);
  replayc->add_option("--endpoint", endpoint, "Service host:port")->capture_default_str();
  replayc->add_option("--fps", fps, "Frame rate (0 = as fast as possible)")->capture_default_str()->check(CLI::NonNegativeNumber);
  replayc->add_option("--timeout-ms", timeout_ms, "Connect and reply timeout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

#ifdef _OPENMP
  if (threads > 0) {
    omp_set_num_threads(threads);
  } else if (std::getenv("GESTIGO_THREADS")) {
    omp_set_num_threads(service::worker_threads(1));
  }
#endif

  try {
    data.seed = train_data.seed = eval_data.seed = search_data.seed = seed;
    if (*encode) return run_encode(data, encode_vos, out);
    if (*train) return run_train(train_data, topt, train_out);
    if (*evalc) return run_eval(eval_data, model_path, eval_vos, eval_out);
    if (*search) return run_vo_search(search_data, search_topt, top_singles, top_pairs, search_out);
    if (*serve) return run_serve(serve_model, serve_vos, bind, max_sessions, ui, idle_ms, max_frames);
    if (*replayc) return run_replay(replay_dataset, replay_file, endpoint, fps, timeout_ms);
  } catch (const CLI::ValidationError& e) {
    std::cerr << fmt::format("gestigo: error [usage] {}\n", e.what());
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << fmt::format("gestigo: error [{}] {}\n", to_string(e.kind()), e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << fmt::format("gestigo: error [{}] {}\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << fmt::format("gestigo: error [internal] {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

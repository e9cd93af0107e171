// SPDX-License-Identifier: Apache-2.0
#include "gestigo/dataset/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/rng.hpp"

namespace fs = std::filesystem;

namespace gestigo::dataset {

namespace {

struct DatasetInfo {
  DatasetId id;
  std::string_view name;
  std::string_view family;
  int classes;
  ProtocolCounts counts;
};

constexpr DatasetInfo kDatasets[] = {
    {DatasetId::kShrec2017_14G, "SHREC2017_14G", "SHREC2017", 14, {2800, 1960, 840}},
    {DatasetId::kShrec2017_28G, "SHREC2017_28G", "SHREC2017", 28, {2800, 1960, 840}},
    {DatasetId::kDhg1428_14G, "DHG1428_14G", "DHG1428", 14, {2800, 1960, 840}},
    {DatasetId::kDhg1428_28G, "DHG1428_28G", "DHG1428", 28, {2800, 1960, 840}},
    {DatasetId::kLmdhg, "LMDHG", "LMDHG", 13, {608, 414, 194}},
    {DatasetId::kFpha, "FPHA", "FPHA", 45, {1175, 600, 575}},
};

const DatasetInfo& info(DatasetId id) {
  for (const auto& d : kDatasets)
    if (d.id == id) return d;
  throw ArgumentError("unknown dataset id");
}

const std::vector<std::string>& dhg_gesture_names() {
  static const std::vector<std::string> names = {
      "Grab",       "Tap",        "Expand",   "Pinch",   "Rotation CW", "Rotation CCW",
      "Swipe Right", "Swipe Left", "Swipe Up", "Swipe Down", "Swipe X",  "Swipe +",
      "Swipe V",    "Shake"};
  return names;
}

const std::vector<std::string>& lmdhg_names() {
  static const std::vector<std::string> names = {
      "Point to",   "Catch",  "Shake with two hands", "Catch with two hands", "Shake down",
      "Shake",      "Draw C", "Point to raised",      "Zoom",                 "Scroll",
      "Draw line",  "Slice",  "Rotate"};
  return names;
}

const std::vector<std::string>& fpha_names() {
  static const std::vector<std::string> names = {
      "charge_cell_phone", "clean_glasses",      "close_juice_bottle", "close_liquid_soap",
      "close_milk",        "close_peanut_butter", "drink_mug",         "flip_pages",
      "flip_sponge",       "give_card",          "give_coin",          "handshake",
      "high_five",         "light_candle",       "open_juice_bottle",  "open_letter",
      "open_liquid_soap",  "open_milk",          "open_peanut_butter", "open_soda_can",
      "open_wallet",       "pour_juice_bottle",  "pour_liquid_soap",   "pour_milk",
      "pour_wine",         "prick",              "put_salt",           "put_sugar",
      "put_tea_bag",       "read_letter",        "receive_coin",       "scoop_spoon",
      "scratch_sponge",    "sprinkle",           "squeeze_paper",      "squeeze_sponge",
      "stir",              "take_letter_from_enveloppe", "tear_paper", "toast_wine",
      "unfold_glasses",    "use_calculator",     "use_flash",          "wash_sponge",
      "write"};
  return names;
}

bool is_dhg_family(DatasetId id) {
  return id == DatasetId::kShrec2017_14G || id == DatasetId::kShrec2017_28G ||
         id == DatasetId::kDhg1428_14G || id == DatasetId::kDhg1428_28G;
}

bool is_28g(DatasetId id) {
  return id == DatasetId::kShrec2017_28G || id == DatasetId::kDhg1428_28G;
}

/// "prefix_<int>" → int, nullopt otherwise.
std::optional<int> numbered(const std::string& name, std::string_view prefix) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0)
    return std::nullopt;
  int v = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ReadError(fmt::format("cannot open {}", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ReadError(fmt::format("read failure on {}", p.string()));
  return ss.str();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::optional<int> to_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void check_label(int label, int classes, const std::string& where) {
  if (label < 1 || label > classes)
    throw SchemaError(fmt::format("{}: label {} outside [1, {}]", where, label, classes));
}

std::string dhg_key(int g, int f, int s, int e) { return fmt::format("{}/{}/{}/{}", g, f, s, e); }

/// Official split lists: `g f s e ...` per line.
std::map<std::string, SplitTag> read_dhg_split_files(const fs::path& root) {
  std::map<std::string, SplitTag> tags;
  for (const auto& [file, tag] : {std::pair{"train_gestures.txt", SplitTag::kTrain},
                                  std::pair{"test_gestures.txt", SplitTag::kVal}}) {
    const fs::path p = root / file;
    const std::string text = read_file(p);
    std::istringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      const auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() < 4)
        throw ParseError(p.string(), line_no, fmt::format("expected at least 4 fields, got {}",
                                                          toks.size()));
      int v[4];
      for (int i = 0; i < 4; ++i) {
        const auto x = to_int(toks[i]);
        if (!x) throw ParseError(p.string(), line_no, fmt::format("non-integer field '{}'", toks[i]));
        v[i] = *x;
      }
      const auto key = dhg_key(v[0], v[1], v[2], v[3]);
      if (!tags.emplace(key, tag).second)
        throw SchemaError(fmt::format("{}:{}: sequence {} listed twice", p.string(), line_no, key));
    }
  }
  return tags;
}

void scan_dhg_family(DatasetManifest& m, const ParseOptions& opt) {
  const bool shrec = m.dataset_id == DatasetId::kShrec2017_14G ||
                     m.dataset_id == DatasetId::kShrec2017_28G;
  const char* file_name = shrec ? "skeletons_world.txt" : "skeleton_world.txt";
  std::vector<std::pair<std::string, ManifestEntry>> found;  // (key, entry)

  for (const auto& gdir : sorted_dirs(m.root)) {
    const auto g = numbered(gdir.filename().string(), "gesture_");
    if (!g) continue;
    for (const auto& fdir : sorted_dirs(gdir)) {
      const auto f = numbered(fdir.filename().string(), "finger_");
      if (!f) continue;
      for (const auto& sdir : sorted_dirs(fdir)) {
        const auto s = numbered(sdir.filename().string(), "subject_");
        if (!s) continue;
        for (const auto& edir : sorted_dirs(sdir)) {
          const auto e = numbered(edir.filename().string(), "essai_");
          if (!e) continue;
          if (!fs::is_regular_file(edir / file_name)) continue;
          const std::string locator = fs::relative(edir / file_name, m.root).generic_string();
          check_label(*g, 14, locator);
          if (*f != 1 && *f != 2)
            throw SchemaError(fmt::format("{}: finger mode {} not in {{1, 2}}", locator, *f));
          ManifestEntry entry;
          entry.locator = locator;
          entry.label = is_28g(m.dataset_id) ? *g + 14 * (*f - 1) : *g;
          entry.subject = fmt::format("subject_{}", *s);
          found.emplace_back(dhg_key(*g, *f, *s, *e), std::move(entry));
        }
      }
    }
  }
  if (found.empty())
    throw NotFoundError(fmt::format("{}: no {} sequences under {}", to_string(m.dataset_id),
                                    file_name, m.root.string()));
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.second.locator < b.second.locator; });

  const bool official = fs::exists(m.root / "train_gestures.txt") &&
                        fs::exists(m.root / "test_gestures.txt");
  if (official) {
    const auto tags = read_dhg_split_files(m.root);
    for (auto& [key, entry] : found) {
      const auto it = tags.find(key);
      if (it == tags.end())
        throw SchemaError(fmt::format("{}: not listed in the split files", entry.locator));
      entry.split = it->second;
    }
    if (tags.size() != found.size())
      throw SchemaError(fmt::format("split files list {} sequences but {} exist on disk",
                                    tags.size(), found.size()));
  } else {
    const auto flags = seeded_split(found.size(), 0.7, opt.seed);
    for (std::size_t i = 0; i < found.size(); ++i)
      found[i].second.split = flags[i] ? SplitTag::kTrain : SplitTag::kVal;
  }
  for (auto& kv : found) m.entries.push_back(std::move(kv.second));
}

constexpr int kLmdhgLastTrainSubject = 35;

void scan_lmdhg(DatasetManifest& m) {
  for (const auto& sdir : sorted_dirs(m.root)) {
    const auto s = numbered(sdir.filename().string(), "subject_");
    if (!s) continue;
    for (const auto& qdir : sorted_dirs(sdir)) {
      const std::string name = qdir.filename().string();
      const auto pos = name.find("_class_");
      if (name.rfind("seq_", 0) != 0 || pos == std::string::npos) continue;
      const auto label = to_int(name.substr(pos + 7));
      if (!label) continue;
      if (!fs::is_regular_file(qdir / "skeleton.txt")) continue;
      ManifestEntry entry;
      entry.locator = fs::relative(qdir / "skeleton.txt", m.root).generic_string();
      check_label(*label, m.class_count, entry.locator);
      entry.label = *label;
      entry.subject = fmt::format("subject_{}", *s);
      entry.split = *s <= kLmdhgLastTrainSubject ? SplitTag::kTrain : SplitTag::kVal;
      m.entries.push_back(std::move(entry));
    }
  }
  if (m.entries.empty())
    throw NotFoundError(fmt::format("LMDHG: no sequences under {}", m.root.string()));
}

void scan_fpha(DatasetManifest& m) {
  const fs::path split_file = m.root / "data_split_action_recognition.txt";
  if (!fs::is_regular_file(split_file))
    throw NotFoundError(fmt::format("FPHA: missing {}", split_file.string()));
  const std::string text = read_file(split_file);
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  std::optional<SplitTag> section;
  std::size_t declared = 0;
  std::size_t in_section = 0;
  auto close_section = [&](std::size_t at) {
    if (section && in_section != declared)
      throw ParseError(split_file.string(), at,
                       fmt::format("section declares {} sequences but lists {}", declared,
                                   in_section));
  };
  while (std::getline(ss, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(split_file.string(), line_no,
                       fmt::format("expected 2 fields, got {}", toks.size()));
    if (toks[0] == "Training" || toks[0] == "Test") {
      close_section(line_no);
      const auto n = to_int(toks[1]);
      if (!n || *n < 0) throw ParseError(split_file.string(), line_no, "bad section count");
      section = toks[0] == "Training" ? SplitTag::kTrain : SplitTag::kVal;
      declared = static_cast<std::size_t>(*n);
      in_section = 0;
      continue;
    }
    if (!section) throw ParseError(split_file.string(), line_no, "entry before section header");
    const auto label0 = to_int(toks[1]);
    if (!label0) throw ParseError(split_file.string(), line_no, "non-integer label");
    ManifestEntry entry;
    entry.locator = toks[0] + "/skeleton.txt";
    check_label(*label0 + 1, m.class_count, fmt::format("{}:{}", split_file.string(), line_no));
    entry.label = *label0 + 1;
    entry.subject = toks[0].substr(0, toks[0].find('/'));
    entry.split = *section;
    if (!fs::is_regular_file(m.root / entry.locator))
      throw SchemaError(fmt::format("{}:{}: {} does not exist", split_file.string(), line_no,
                                    entry.locator));
    m.entries.push_back(std::move(entry));
    ++in_section;
  }
  close_section(line_no);
  if (m.entries.empty()) throw NotFoundError("FPHA: split file lists no sequences");
  std::sort(m.entries.begin(), m.entries.end(),
            [](const auto& a, const auto& b) { return a.locator < b.locator; });
  for (std::size_t i = 1; i < m.entries.size(); ++i)
    if (m.entries[i].locator == m.entries[i - 1].locator)
      throw SchemaError(fmt::format("FPHA: {} listed twice", m.entries[i].locator));
}

// World-to-camera extrinsic distributed with FPHA (millimetres).
constexpr double kFphaExtrinsic[3][4] = {
    {0.999988496304, -0.00468848412856, 0.000982563360594, 25.7},
    {0.00469115935266, 0.999985218048, -0.00273845880292, 1.22},
    {-0.000969709653873, 0.00274303671904, 0.99999576807, 3.902},
};

}  // namespace

std::string_view to_string(DatasetId id) { return info(id).name; }

DatasetId dataset_from_string(std::string_view name) {
  for (const auto& d : kDatasets)
    if (d.name == name) return d.id;
  throw ArgumentError(fmt::format("unknown dataset '{}'", name));
}

const std::vector<DatasetId>& all_datasets() {
  static const std::vector<DatasetId> ids = [] {
    std::vector<DatasetId> v;
    for (const auto& d : kDatasets) v.push_back(d.id);
    return v;
  }();
  return ids;
}

std::string_view vo_family(DatasetId id) { return info(id).family; }
int class_count(DatasetId id) { return info(id).classes; }
ProtocolCounts protocol_counts(DatasetId id) { return info(id).counts; }

SchemaPtr schema_for(DatasetId id) {
  if (is_dhg_family(id)) return dhg22_schema();
  if (id == DatasetId::kLmdhg) return lmdhg46_schema();
  return fpha21_schema();
}

std::vector<std::string> class_names(DatasetId id) {
  if (is_dhg_family(id)) {
    if (!is_28g(id)) return dhg_gesture_names();
    std::vector<std::string> out;
    for (const auto& n : dhg_gesture_names()) out.push_back(n + " (one finger)");
    for (const auto& n : dhg_gesture_names()) out.push_back(n + " (whole hand)");
    return out;
  }
  if (id == DatasetId::kLmdhg) return lmdhg_names();
  return fpha_names();
}

std::string_view to_string(SplitTag tag) { return tag == SplitTag::kTrain ? "train" : "val"; }

std::vector<bool> seeded_split(std::size_t count, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
  std::vector<bool> flags(count, false);
  for (std::size_t i = 0; i < n_train && i < count; ++i) flags[order[i]] = true;
  return flags;
}

DatasetManifest parse_dataset(DatasetId id, const fs::path& root, const ParseOptions& options) {
  if (!fs::is_directory(root))
    throw NotFoundError(fmt::format("dataset root {} does not exist", root.string()));
  DatasetManifest m;
  m.dataset_id = id;
  m.class_count = class_count(id);
  m.seed = options.seed;
  m.root = root;
  m.camera_transform = id == DatasetId::kFpha && options.fpha_camera_transform;

  if (is_dhg_family(id)) {
    scan_dhg_family(m, options);
  } else if (id == DatasetId::kLmdhg) {
    scan_lmdhg(m);
  } else {
    scan_fpha(m);
  }

  const auto sp = split(m);
  if (sp.train.empty() || sp.val.empty())
    throw SchemaError(fmt::format("{}: both splits must be non-empty (train {}, val {})",
                                  to_string(id), sp.train.size(), sp.val.size()));
  if (options.enforce_protocol_counts) {
    const auto want = protocol_counts(id);
    if (m.entries.size() != want.total || sp.train.size() != want.train ||
        sp.val.size() != want.val)
      throw SchemaError(fmt::format("{}: found {} entries ({}/{}), protocol requires {} ({}/{})",
                                    to_string(id), m.entries.size(), sp.train.size(),
                                    sp.val.size(), want.total, want.train, want.val));
  }
  return m;
}

SkeletonSequence load_sequence(const DatasetManifest& manifest, std::size_t index) {
  if (index >= manifest.entries.size())
    throw ArgumentError(fmt::format("entry {} out of range ({} entries)", index,
                                    manifest.entries.size()));
  const ManifestEntry& entry = manifest.entries[index];
  const fs::path path = manifest.root / entry.locator;
  const SchemaPtr schema = manifest.schema();
  const std::string text = read_file(path);
  std::vector<Vec3> coords = parse_frames(text, schema->joint_count, path.string(),
                                          manifest.dataset_id == DatasetId::kFpha);
  if (manifest.camera_transform) {
    for (Vec3& v : coords) {
      const Vec3 w = v;
      for (int r = 0; r < 3; ++r)
        v[r] = kFphaExtrinsic[r][0] * w.x + kFphaExtrinsic[r][1] * w.y +
               kFphaExtrinsic[r][2] * w.z + kFphaExtrinsic[r][3];
    }
  }
  try {
    return SkeletonSequence::create(schema, std::move(coords), entry.label, entry.subject,
                                    path.string());
  } catch (const ArgumentError& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

SplitView split(const DatasetManifest& manifest) {
  SplitView v;
  for (const auto& e : manifest.entries) (e.split == SplitTag::kTrain ? v.train : v.val).push_back(e);
  return v;
}

std::string format_index(const DatasetManifest& m) {
  std::string out = fmt::format("# gestigo-manifest\tdataset={}\tclasses={}\tseed={}\tcamera_transform={}\n",
                                to_string(m.dataset_id), m.class_count, m.seed,
                                m.camera_transform ? 1 : 0);
  for (const auto& e : m.entries)
    out += fmt::format("{}\t{}\t{}\t{}\n", e.locator, e.label, e.subject, to_string(e.split));
  return out;
}

DatasetManifest parse_index(const std::string& text, const fs::path& root,
                            const std::string& file_name) {
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  DatasetManifest m;
  m.root = root;
  bool have_header = false;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (!have_header) {
      if (fields.empty() || fields[0] != "# gestigo-manifest")
        throw ParseError(file_name, line_no, "missing manifest header");
      std::map<std::string, std::string> kv;
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto eq = fields[i].find('=');
        if (eq == std::string::npos) throw ParseError(file_name, line_no, "malformed header field");
        kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
      }
      if (!kv.count("dataset") || !kv.count("classes") || !kv.count("seed"))
        throw ParseError(file_name, line_no, "header needs dataset, classes and seed");
      try {
        m.dataset_id = dataset_from_string(kv["dataset"]);
      } catch (const ArgumentError& e) {
        throw ParseError(file_name, line_no, e.what());
      }
      const auto n = to_int(kv["classes"]);
      if (!n || *n != class_count(m.dataset_id))
        throw ParseError(file_name, line_no, "class count does not match dataset");
      m.class_count = *n;
      std::uint64_t seed = 0;
      const auto& s = kv["seed"];
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(file_name, line_no, "bad seed");
      m.seed = seed;
      m.camera_transform = kv.count("camera_transform") && kv["camera_transform"] == "1";
      have_header = true;
      continue;
    }
    if (fields.size() != 4)
      throw ParseError(file_name, line_no, fmt::format("expected 4 fields, got {}", fields.size()));
    ManifestEntry e;
    e.locator = fields[0];
    const auto label = to_int(fields[1]);
    if (!label) throw ParseError(file_name, line_no, "non-integer label");
    check_label(*label, m.class_count, fmt::format("{}:{}", file_name, line_no));
    e.label = *label;
    e.subject = fields[2];
    if (fields[3] == "train") {
      e.split = SplitTag::kTrain;
    } else if (fields[3] == "val") {
      e.split = SplitTag::kVal;
    } else {
      throw ParseError(file_name, line_no, fmt::format("unknown split tag '{}'", fields[3]));
    }
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw ParseError(file_name, 0, "empty index");
  return m;
}

void write_index(const DatasetManifest& manifest, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ReadError(fmt::format("cannot write {}", file.string()));
  out << format_index(manifest);
}

DatasetManifest read_index(const fs::path& file, const fs::path& root) {
  if (!fs::is_regular_file(file)) throw NotFoundError(fmt::format("{} does not exist", file.string()));
  return parse_index(read_file(file), root, file.string());
}

}  // namespace gestigo::dataset

// SPDX-License-Identifier: Apache-2.0
#include "gestigo/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/rng.hpp"

namespace fs = std::filesystem;

namespace gestigo::synth {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 add(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 scale(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
Vec3 lerp(Vec3 a, Vec3 b, double t) { return add(scale(a, 1.0 - t), scale(b, t)); }
double lerp(double a, double b, double t) { return a + (b - a) * t; }
Vec3 normalized(Vec3 a) {
  const double n = std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z);
  return scale(a, 1.0 / n);
}
double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

struct Mat3 {
  double m[3][3];
  Vec3 apply(Vec3 v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
  return r;
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

// Hand-local geometry at scale 1 (metres). Fingers point +y, palm faces -z.
struct FingerGeom {
  Vec3 base;
  double splay;
  std::array<double, 3> lengths;
};

constexpr FingerGeom kFingers[5] = {
    {{-0.030, 0.025, -0.010}, -0.75, {0.040, 0.032, 0.025}},
    {{-0.025, 0.085, 0.0}, -0.12, {0.045, 0.025, 0.020}},
    {{-0.008, 0.090, 0.0}, -0.03, {0.050, 0.030, 0.022}},
    {{0.009, 0.087, 0.0}, 0.06, {0.047, 0.028, 0.021}},
    {{0.025, 0.080, 0.0}, 0.16, {0.038, 0.020, 0.018}},
};
constexpr double kBendSteps[3] = {0.5, 1.2, 1.8};

std::vector<Vec3> quantize(std::vector<Vec3> coords) {
  for (Vec3& v : coords)
    for (int a = 0; a < 3; ++a) v[a] = std::round(v[a] * 1e6) / 1e6;
  return coords;
}

/// Per-performance variation shared by all generators.
struct Performance {
  double hand_scale;
  double amplitude;
  Vec3 origin;
  double yaw, pitch, roll;
  double warp;
  double hold_in, hold_out;
  double bulge;
  double noise;
  int frames;

  static Performance draw(Rng& rng, int min_frames, int max_frames) {
    Performance p{};
    p.hand_scale = rng.uniform(0.85, 1.15);
    p.amplitude = rng.uniform(0.8, 1.2);
    p.origin = {rng.uniform(-0.05, 0.05), 0.10 + rng.uniform(-0.05, 0.05),
                0.50 + rng.uniform(-0.06, 0.06)};
    p.yaw = rng.uniform(-0.25, 0.25);
    p.pitch = rng.uniform(-0.25, 0.25);
    p.roll = rng.uniform(-0.18, 0.18);
    p.warp = rng.uniform(0.8, 1.25);
    p.hold_in = rng.uniform(0.0, 0.15);
    p.hold_out = rng.uniform(0.0, 0.15);
    p.bulge = rng.uniform(-0.02, 0.02);
    p.noise = rng.uniform(0.0008, 0.0025);
    p.frames = min_frames + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_frames - min_frames + 1)));
    return p;
  }

  /// Maps frame time to gesture progress with holds at both ends.
  double progress(double t) const {
    const double active = 1.0 - hold_in - hold_out;
    const double u = std::clamp((t - hold_in) / active, 0.0, 1.0);
    return std::pow(u, warp);
  }
};

HandPose base_pose(const Performance& p, int finger_mode) {
  HandPose pose;
  pose.position = p.origin;
  pose.yaw = p.yaw;
  pose.pitch = p.pitch;
  pose.roll = p.roll;
  pose.scale = p.hand_scale;
  if (finger_mode == 1) {
    pose.curl = {0.9, 0.1, 1.3, 1.3, 1.3};
  } else {
    pose.curl = {0.2, 0.15, 0.15, 0.15, 0.15};
  }
  return pose;
}

/// 2D stroke path for the swipe family, in units of the half amplitude.
Vec3 stroke(int gesture, double s, double a, double bulge) {
  auto seg = [](Vec3 from, Vec3 to, double t) { return lerp(from, to, smoothstep(t)); };
  const double arc = bulge * std::sin(kPi * s);
  switch (gesture) {
    case 7: return {2 * a * s - a, arc, 0};
    case 8: return {a - 2 * a * s, arc, 0};
    case 9: return {arc, 2 * a * s - a, 0};
    case 10: return {arc, a - 2 * a * s, 0};
    case 11: {  // X: two diagonals with a lifted transition
      if (s < 0.45) return seg({-a, a, 0}, {a, -a, 0}, s / 0.45);
      if (s < 0.55) return seg({a, -a, 0}, {a, a, -0.04}, (s - 0.45) / 0.1);
      return seg({a, a, 0}, {-a, -a, 0}, (s - 0.55) / 0.45);
    }
    case 12: {  // +: vertical then horizontal
      if (s < 0.45) return seg({0, a, 0}, {0, -a, 0}, s / 0.45);
      if (s < 0.55) return seg({0, -a, 0}, {-a, 0, -0.04}, (s - 0.45) / 0.1);
      return seg({-a, 0, 0}, {a, 0, 0}, (s - 0.55) / 0.45);
    }
    case 13: {  // V
      if (s < 0.5) return seg({-a, a, 0}, {0, -a, 0}, s / 0.5);
      return seg({0, -a, 0}, {a, a, 0}, (s - 0.5) / 0.5);
    }
    default: return {};
  }
}

HandPose dhg_pose(int gesture, int finger_mode, double s, const Performance& p) {
  HandPose pose = base_pose(p, finger_mode);
  const double e = smoothstep(s);
  const bool whole = finger_mode == 2;
  auto set_active = [&](double value) {
    if (whole) {
      for (int f = 0; f < 5; ++f) pose.curl[f] = value;
    } else {
      pose.curl[1] = value;
    }
  };
  const double amp = 0.25 * p.amplitude;
  switch (gesture) {
    case 1: set_active(lerp(0.15, 1.35, e)); break;
    case 2: {
      const double bump = std::sin(kPi * e);
      set_active(0.15 + 0.9 * bump);
      pose.position.z -= 0.03 * bump;
      pose.position.y -= 0.02 * bump;
      break;
    }
    case 3:
      set_active(lerp(1.35, 0.1, e));
      pose.spread = lerp(0.0, 0.35, e);
      break;
    case 4:
      pose.curl[0] = lerp(0.3, 1.0, e);
      pose.curl[1] = lerp(0.15, 0.9, e);
      if (whole)
        for (int f = 2; f < 5; ++f) pose.curl[f] = lerp(0.15, 0.5, e);
      break;
    case 5: pose.roll -= 0.5 * kPi * p.amplitude * e; break;
    case 6: pose.roll += 0.5 * kPi * p.amplitude * e; break;
    case 14: {
      const double w = std::sin(2.0 * kPi * 3.5 * e) * std::sin(kPi * e);
      pose.position.x += 0.04 * p.amplitude * w;
      pose.roll += 0.35 * w;
      break;
    }
    default: {
      const Vec3 d = stroke(gesture, e, 0.5 * amp, p.bulge);
      pose.position = add(pose.position, d);
      break;
    }
  }
  return pose;
}

std::vector<Vec3> add_noise(std::vector<Vec3> coords, double sigma, Rng& rng) {
  for (Vec3& v : coords)
    for (int a = 0; a < 3; ++a) v[a] += sigma * rng.normal();
  return coords;
}

/// Smooth class-specific template for datasets without a hand-written program.
struct Template {
  std::array<std::array<Vec3, 4>, 2> path;  // cubic Bezier control points per hand
  std::array<std::array<double, 5>, 2> curl_from, curl_to;
  std::array<double, 2> roll_from, roll_to;
  bool second_hand_moves = false;
};

Template make_template(std::uint64_t key) {
  Rng rng(key);
  Template t{};
  for (int h = 0; h < 2; ++h) {
    for (int k = 0; k < 4; ++k)
      t.path[h][k] = {rng.uniform(-0.12, 0.12), rng.uniform(-0.10, 0.10), rng.uniform(-0.06, 0.06)};
    for (int f = 0; f < 5; ++f) {
      t.curl_from[h][f] = rng.uniform(0.0, 1.3);
      t.curl_to[h][f] = rng.uniform(0.0, 1.3);
    }
    t.roll_from[h] = rng.uniform(-0.8, 0.8);
    t.roll_to[h] = rng.uniform(-0.8, 0.8);
  }
  t.second_hand_moves = rng.bernoulli(0.5);
  return t;
}

Vec3 bezier(const std::array<Vec3, 4>& c, double t) {
  const double u = 1.0 - t;
  return add(add(scale(c[0], u * u * u), scale(c[1], 3 * u * u * t)),
             add(scale(c[2], 3 * u * t * t), scale(c[3], t * t * t)));
}

Template jitter(Template t, Rng& rng, double amount) {
  for (auto& hand : t.path)
    for (Vec3& c : hand)
      for (int a = 0; a < 3; ++a) c[a] += amount * rng.normal();
  return t;
}

HandPose template_pose(const Template& t, int hand, double s, const Performance& p) {
  HandPose pose;
  const double e = smoothstep(s);
  const bool still = hand == 1 && !t.second_hand_moves;
  const double et = still ? 0.0 : e;
  const Vec3 offset = scale(bezier(t.path[hand], et), p.amplitude);
  pose.position = add(p.origin, offset);
  if (hand == 1) pose.position.x += 0.25;
  pose.yaw = p.yaw;
  pose.pitch = p.pitch;
  pose.roll = p.roll + lerp(t.roll_from[hand], t.roll_to[hand], et);
  for (int f = 0; f < 5; ++f) pose.curl[f] = lerp(t.curl_from[hand][f], t.curl_to[hand][f], et);
  pose.scale = p.hand_scale;
  return pose;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReadError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::size_t write_dhg_family(dataset::DatasetId id, const fs::path& root, const TreeOptions& opt) {
  const bool shrec = dataset::vo_family(id) == "SHREC2017";
  const char* file_name = shrec ? "skeletons_world.txt" : "skeleton_world.txt";
  std::vector<int> gestures = opt.gestures;
  if (gestures.empty())
    for (int g = 1; g <= 14; ++g) gestures.push_back(g);
  const int subjects = opt.subjects > 0 ? opt.subjects : (shrec ? 28 : 20);
  auto essais_for = [&](int subject) {
    if (opt.repetitions > 0) return opt.repetitions;
    if (!shrec) return 5;
    return subject <= 16 ? 4 : 3;  // 16*4 + 12*3 = 100 per (gesture, finger)
  };
  struct Row {
    int g, f, s, e, frames;
  };
  std::vector<Row> rows;
  for (int g : gestures)
    for (int f = 1; f <= 2; ++f)
      for (int s = 1; s <= subjects; ++s)
        for (int e = 1; e <= essais_for(s); ++e) {
          const auto seq = dhg_gesture(g, f, s, e, opt.seed, g);
          write_text(root / fmt::format("gesture_{}/finger_{}/subject_{}/essai_{}", g, f, s, e) /
                         file_name,
                     dataset::format_frames(seq));
          rows.push_back({g, f, s, e, static_cast<int>(seq.frame_count())});
        }
  if (opt.official_split_files) {
    const auto flags = dataset::seeded_split(rows.size(), 0.7, mix_seed(opt.seed, 1));
    std::string train, test;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Row& r = rows[i];
      const std::string line =
          fmt::format("{} {} {} {} {} {} {}\n", r.g, r.f, r.s, r.e, r.g, r.g + 14 * (r.f - 1), r.frames);
      (flags[i] ? train : test) += line;
    }
    write_text(root / "train_gestures.txt", train);
    write_text(root / "test_gestures.txt", test);
  }
  return rows.size();
}

std::size_t write_lmdhg(const fs::path& root, const TreeOptions& opt) {
  std::size_t written = 0;
  const int subjects = opt.subjects > 0 ? opt.subjects : 50;
  for (int s = 1; s <= subjects; ++s) {
    int count = 0;
    if (opt.repetitions > 0) {
      count = opt.repetitions;
    } else if (s <= 35) {
      count = s <= 29 ? 12 : 11;  // 29*12 + 6*11 = 414
    } else {
      count = s <= 49 ? 13 : 12;  // 14*13 + 12 = 194
    }
    for (int k = 1; k <= count; ++k) {
      const int label = (s * 7 + k) % 13 + 1;
      const auto seq = lmdhg_gesture(label, s, k, opt.seed);
      write_text(root / fmt::format("subject_{}/seq_{}_class_{}", s, k, label) / "skeleton.txt",
                 dataset::format_frames(seq));
      ++written;
    }
  }
  return written;
}

std::size_t write_fpha(const fs::path& root, const TreeOptions& opt) {
  const auto names = dataset::class_names(dataset::DatasetId::kFpha);
  struct Item {
    int label, subject, rep;
    std::string locator;
  };
  std::vector<Item> items;
  const std::size_t total = opt.repetitions > 0 ? static_cast<std::size_t>(45 * opt.repetitions) : 1175;
  const int subjects = opt.subjects > 0 ? opt.subjects : 6;
  std::vector<int> reps_per(static_cast<std::size_t>(45 * subjects), 0);
  for (std::size_t i = 0; i < total; ++i) {
    const int label0 = static_cast<int>(i % 45);
    const int subject = static_cast<int>((i / 45) % static_cast<std::size_t>(subjects)) + 1;
    const int rep = ++reps_per[static_cast<std::size_t>(label0 * subjects + (subject - 1))];
    items.push_back({label0 + 1, subject, rep,
                     fmt::format("Subject_{}/{}/{}", subject, names[label0], rep)});
  }
  const double train_fraction = opt.repetitions > 0 ? 0.5 : 600.0 / 1175.0;
  const auto flags = dataset::seeded_split(items.size(), train_fraction, opt.seed);
  std::string train, test;
  std::size_t n_train = 0, n_test = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& it = items[i];
    const auto seq = fpha_gesture(it.label, it.subject, it.rep, opt.seed);
    std::string text;
    for (std::size_t t = 0; t < seq.frame_count(); ++t) {
      text += std::to_string(t);
      for (const Vec3& v : seq.frame(t)) text += fmt::format(" {} {} {}", v.x, v.y, v.z);
      text += '\n';
    }
    write_text(root / it.locator / "skeleton.txt", text);
    const std::string line = fmt::format("{} {}\n", it.locator, it.label - 1);
    if (flags[i]) {
      train += line;
      ++n_train;
    } else {
      test += line;
      ++n_test;
    }
  }
  write_text(root / "data_split_action_recognition.txt",
             fmt::format("Training {}\n{}Test {}\n{}", n_train, train, n_test, test));
  return items.size();
}

}  // namespace

HandJoints build_hand(const HandPose& pose, bool left_hand) {
  const Mat3 r = mul(rot_z(pose.roll), mul(rot_y(pose.yaw), rot_x(pose.pitch)));
  const double mirror = left_hand ? -1.0 : 1.0;
  auto place = [&](Vec3 local) {
    local.x *= mirror;
    return add(pose.position, r.apply(scale(local, pose.scale)));
  };
  HandJoints h;
  h.wrist = place({0, 0, 0});
  h.palm = place({0, 0.045, 0});
  h.elbow = place({0, -0.25, 0.05});
  for (int f = 0; f < 5; ++f) {
    const FingerGeom& g = kFingers[f];
    const double splay = g.splay * (1.0 + (f == 0 ? 0.0 : pose.spread * 3.0));
    const Vec3 dir0 = normalized({std::sin(splay), std::cos(splay), f == 0 ? -0.1 : 0.0});
    const Vec3 normal = f == 0 ? normalized({0.6, 0.2, -0.75}) : Vec3{0, 0, -1};
    Vec3 joint = g.base;
    h.fingers[f][0] = place(joint);
    for (int k = 0; k < 3; ++k) {
      const double phi = pose.curl[f] * kBendSteps[k];
      const Vec3 dir = add(scale(dir0, std::cos(phi)), scale(normal, std::sin(phi)));
      joint = add(joint, scale(dir, g.lengths[k]));
      h.fingers[f][k + 1] = place(joint);
    }
  }
  return h;
}

void append_dhg22(const HandJoints& h, std::vector<Vec3>& out) {
  out.push_back(h.wrist);
  out.push_back(h.palm);
  for (const auto& finger : h.fingers)
    for (const Vec3& j : finger) out.push_back(j);
}

void append_fpha21(const HandJoints& h, std::vector<Vec3>& out) {
  out.push_back(h.wrist);
  for (const auto& finger : h.fingers) out.push_back(finger[0]);
  for (const auto& finger : h.fingers)
    for (int k = 1; k < 4; ++k) out.push_back(finger[k]);
}

void append_landmark21(const HandJoints& h, std::vector<Vec3>& out) {
  out.push_back(h.wrist);
  for (const auto& finger : h.fingers)
    for (const Vec3& j : finger) out.push_back(j);
}

void append_lmdhg23(const HandJoints& h, std::vector<Vec3>& out) {
  out.push_back(h.elbow);
  out.push_back(h.wrist);
  out.push_back(h.palm);
  for (const auto& finger : h.fingers)
    for (const Vec3& j : finger) out.push_back(j);
}

dataset::SkeletonSequence dhg_gesture(int gesture, int finger_mode, int subject, int essai,
                                      std::uint64_t seed, int label) {
  if (gesture < 1 || gesture > 14) throw ArgumentError("dhg_gesture: gesture outside [1,14]");
  if (finger_mode != 1 && finger_mode != 2) throw ArgumentError("dhg_gesture: finger mode");
  // Subject traits are shared across a subject's performances.
  Rng subject_rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(subject)));
  const double subject_scale = subject_rng.uniform(0.9, 1.1);
  const double subject_speed = subject_rng.uniform(0.85, 1.15);
  Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(gesture * 10 + finger_mode)),
                   static_cast<std::uint64_t>(subject * 100 + essai)));
  Performance p = Performance::draw(rng, 30, 120);
  p.hand_scale *= subject_scale;
  p.frames = std::max(20, static_cast<int>(p.frames * subject_speed));
  std::vector<Vec3> coords;
  coords.reserve(static_cast<std::size_t>(p.frames) * 22);
  for (int t = 0; t < p.frames; ++t) {
    const double s = p.progress(static_cast<double>(t) / (p.frames - 1));
    append_dhg22(build_hand(dhg_pose(gesture, finger_mode, s, p)), coords);
  }
  coords = quantize(add_noise(std::move(coords), p.noise, rng));
  return dataset::SkeletonSequence::create(dataset::dhg22_schema(), std::move(coords), label,
                                           fmt::format("subject_{}", subject));
}

dataset::SkeletonSequence lmdhg_gesture(int label, int subject, int rep, std::uint64_t seed) {
  const Template base = make_template(mix_seed(seed ^ 0x4c4d4448ULL, static_cast<std::uint64_t>(label)));
  Rng rng(mix_seed(mix_seed(seed, 7000 + static_cast<std::uint64_t>(label)),
                   static_cast<std::uint64_t>(subject * 100 + rep)));
  const Template t = jitter(base, rng, 0.015);
  const Performance p = Performance::draw(rng, 40, 140);
  std::vector<Vec3> coords;
  for (int f = 0; f < p.frames; ++f) {
    const double s = p.progress(static_cast<double>(f) / (p.frames - 1));
    append_lmdhg23(build_hand(template_pose(t, 0, s, p), false), coords);
    append_lmdhg23(build_hand(template_pose(t, 1, s, p), true), coords);
  }
  coords = quantize(add_noise(std::move(coords), p.noise, rng));
  return dataset::SkeletonSequence::create(dataset::lmdhg46_schema(), std::move(coords), label,
                                           fmt::format("subject_{}", subject));
}

dataset::SkeletonSequence fpha_gesture(int label, int subject, int rep, std::uint64_t seed) {
  const Template base = make_template(mix_seed(seed ^ 0x46504841ULL, static_cast<std::uint64_t>(label)));
  Rng rng(mix_seed(mix_seed(seed, 9000 + static_cast<std::uint64_t>(label)),
                   static_cast<std::uint64_t>(subject * 100 + rep)));
  const Template t = jitter(base, rng, 0.012);
  const Performance p = Performance::draw(rng, 40, 150);
  std::vector<Vec3> coords;
  for (int f = 0; f < p.frames; ++f) {
    const double s = p.progress(static_cast<double>(f) / (p.frames - 1));
    append_fpha21(build_hand(template_pose(t, 0, s, p)), coords);
  }
  coords = quantize(add_noise(std::move(coords), p.noise, rng));
  return dataset::SkeletonSequence::create(dataset::fpha21_schema(), std::move(coords), label,
                                           fmt::format("Subject_{}", subject));
}

dataset::SkeletonSequence random_sequence(const dataset::SchemaPtr& schema, std::size_t frames,
                                          std::uint64_t seed, double extent) {
  Rng rng(seed);
  const auto joints = static_cast<std::size_t>(schema->joint_count);
  std::vector<Vec3> offsets(joints);
  for (Vec3& o : offsets) o = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  Vec3 pos{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Vec3 vel{};
  std::vector<Vec3> coords;
  coords.reserve(frames * joints);
  for (std::size_t t = 0; t < frames; ++t) {
    for (int a = 0; a < 3; ++a) vel[a] = 0.8 * vel[a] + extent * 0.05 * rng.normal();
    pos = add(pos, vel);
    for (std::size_t j = 0; j < joints; ++j)
      coords.push_back(add(pos, add(offsets[j], {0.002 * rng.normal(), 0.002 * rng.normal(),
                                                 0.002 * rng.normal()})));
  }
  return dataset::SkeletonSequence::create(schema, std::move(coords), 1);
}

std::size_t write_tree(dataset::DatasetId id, const fs::path& root, const TreeOptions& options) {
  if (id == dataset::DatasetId::kLmdhg) return write_lmdhg(root, options);
  if (id == dataset::DatasetId::kFpha) return write_fpha(root, options);
  return write_dhg_family(id, root, options);
}

}  // namespace gestigo::synth

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gestigo/dataset/manifest.hpp"
#include "gestigo/dataset/sequence.hpp"

/// Procedural hand-gesture generator.
///
/// Produces kinematically plausible skeleton sequences (metres, camera-like
/// world frame: x right, y up, z away from the sensor) and writes them as
/// dataset trees in the on-disk layouts the parsers read. Used for fixtures,
/// benchmarks and the acceptance suite when the public datasets are not
/// available.
namespace gestigo::synth {

using dataset::Vec3;

struct HandPose {
  Vec3 position;  // wrist
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  std::array<double, 5> curl{};  // thumb..pinky, radians of bend per joint step
  double spread = 0.0;
  double scale = 1.0;
};

struct HandJoints {
  Vec3 elbow;
  Vec3 wrist;
  Vec3 palm;
  std::array<std::array<Vec3, 4>, 5> fingers;  // base..tip, thumb..pinky
};

HandJoints build_hand(const HandPose& pose, bool left_hand = false);

/// Joint order of each supported schema.
void append_dhg22(const HandJoints& h, std::vector<Vec3>& out);
void append_fpha21(const HandJoints& h, std::vector<Vec3>& out);
void append_landmark21(const HandJoints& h, std::vector<Vec3>& out);
void append_lmdhg23(const HandJoints& h, std::vector<Vec3>& out);

/// One DHG/SHREC gesture: gesture in [1,14], finger_mode 1 (one finger) or 2
/// (whole hand). The same (gesture, mode, subject, essai, seed) always yields
/// the same sequence.
dataset::SkeletonSequence dhg_gesture(int gesture, int finger_mode, int subject, int essai,
                                      std::uint64_t seed, int label);
/// Two-hand LMDHG gesture, label in [1,13].
dataset::SkeletonSequence lmdhg_gesture(int label, int subject, int rep, std::uint64_t seed);
/// FPHA action, label in [1,45].
dataset::SkeletonSequence fpha_gesture(int label, int subject, int rep, std::uint64_t seed);

/// Unstructured random-walk sequence for property tests.
dataset::SkeletonSequence random_sequence(const dataset::SchemaPtr& schema, std::size_t frames,
                                          std::uint64_t seed, double extent = 0.3);

struct TreeOptions {
  std::uint64_t seed = 17;
  /// DHG/SHREC only: restrict to these gestures (1..14); empty means all.
  std::vector<int> gestures;
  /// Shrinks subject / repetition counts for small fixtures; 0 keeps protocol size.
  int subjects = 0;
  int repetitions = 0;
  /// SHREC/DHG: also write train_gestures.txt / test_gestures.txt.
  bool official_split_files = false;
};

/// Writes a dataset tree and returns the number of sequences written.
std::size_t write_tree(dataset::DatasetId id, const std::filesystem::path& root,
                       const TreeOptions& options = {});

}  // namespace gestigo::synth

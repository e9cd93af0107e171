// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gestigo/nn/layers.hpp"

namespace gestigo::nn {

inline constexpr char kCheckpointMagic[8] = {'G', 'S', 'T', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SavedTensor {
  Shape shape;
  std::vector<float> data;

  friend bool operator==(const SavedTensor&, const SavedTensor&) = default;
};

/// Versioned binary model container.
///
/// Layout (little-endian): magic[8], u32 version, u32 header length + UTF-8
/// header, u32 spec count + length-prefixed LayerSpec records, u32 tensor
/// count, then per tensor u32 rank, u32 dims[rank], float32 data.
struct Checkpoint {
  std::string header;
  std::vector<LayerSpec> specs;
  std::vector<SavedTensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError on a truncated or foreign file.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                             const std::string& name = "<checkpoint>");

/// Writes to a temporary sibling then renames, so a crash never leaves a
/// half-written checkpoint in place.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <class T>
std::vector<SavedTensor> save_tensors(const std::vector<Tensor<T>>& tensors);
/// Copies saved values into existing tensors; shapes must match one to one.
template <class T>
void load_tensors(const std::vector<SavedTensor>& saved, std::vector<Tensor<T>>& tensors);

}  // namespace gestigo::nn

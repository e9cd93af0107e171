// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string name) : in_(in), name_(std::move(name)) {}

  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_)
      throw ParseError(name_, 0, fmt::format("truncated checkpoint at byte {}", pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string string() {
    const std::uint32_t n = u32();
    if (n > in_.size() - pos_) throw ParseError(name_, 0, "string length past end of checkpoint");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  const std::string& name() const { return name_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string name_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kSpecRecordBytes = 1 + 5 * 4 + 3 * 8;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(ckpt.header);
  w.u32(static_cast<std::uint32_t>(ckpt.specs.size()));
  for (const auto& s : ckpt.specs) {
    w.u32(kSpecRecordBytes);
    const auto kind = static_cast<std::uint8_t>(s.kind);
    w.bytes(&kind, 1);
    for (int v : {s.in, s.out, s.kernel, s.stride, s.padding}) w.i32(v);
    for (double v : {s.p, s.eps, s.momentum}) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.data.size())
      throw ShapeError(fmt::format("checkpoint tensor {} holds {} values", shape_string(t.shape), t.data.size()));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  Reader r(bytes, name);
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw ParseError(name, 0, "not a gestigo checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError(name, 0, fmt::format("unsupported checkpoint version {}", version));
  Checkpoint c;
  c.header = r.string();
  const std::uint32_t nspecs = r.u32();
  if (nspecs > r.remaining() / kSpecRecordBytes) throw ParseError(name, 0, "spec count past end of checkpoint");
  for (std::uint32_t i = 0; i < nspecs; ++i) {
    if (r.u32() != kSpecRecordBytes) throw ParseError(name, 0, fmt::format("bad length of spec record {}", i));
    LayerSpec s;
    std::uint8_t kind = 0;
    r.bytes(&kind, 1);
    if (kind > static_cast<std::uint8_t>(LayerKind::kConcat))
      throw ParseError(name, 0, fmt::format("unknown layer kind {} in record {}", kind, i));
    s.kind = static_cast<LayerKind>(kind);
    s.in = r.i32();
    s.out = r.i32();
    s.kernel = r.i32();
    s.stride = r.i32();
    s.padding = r.i32();
    s.p = r.f64();
    s.eps = r.f64();
    s.momentum = r.f64();
    try {
      s.validate();
    } catch (const ArgumentError& e) {
      throw ParseError(name, 0, e.what());
    }
    c.specs.push_back(s);
  }
  const std::uint32_t ntensors = r.u32();
  if (ntensors > r.remaining() / 4) throw ParseError(name, 0, "tensor count past end of checkpoint");
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    SavedTensor t;
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw ParseError(name, 0, fmt::format("tensor {} has rank {}", i, rank));
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32();
      if (d == 0 || d > (1u << 28)) throw ParseError(name, 0, fmt::format("tensor {} has dimension {}", i, d));
      t.shape.push_back(static_cast<int>(d));
      count *= d;
      if (count > r.remaining() / sizeof(float)) throw ParseError(name, 0, "tensor data past end of checkpoint");
    }
    t.data.resize(count);
    r.bytes(t.data.data(), count * sizeof(float));
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw ParseError(name, 0, fmt::format("{} trailing bytes", r.remaining()));
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ReadError(fmt::format("cannot write {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ReadError(fmt::format("write failure on {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("cannot open checkpoint {}", path.string()));
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

template <class T>
std::vector<SavedTensor> save_tensors(const std::vector<Tensor<T>>& tensors) {
  std::vector<SavedTensor> out;
  for (const auto& t : tensors) {
    SavedTensor s;
    s.shape = t.shape();
    s.data.assign(t.data().begin(), t.data().end());
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
void load_tensors(const std::vector<SavedTensor>& saved, std::vector<Tensor<T>>& tensors) {
  if (saved.size() != tensors.size())
    throw ConfigError(fmt::format("checkpoint holds {} tensors, model expects {}", saved.size(), tensors.size()));
  for (std::size_t i = 0; i < saved.size(); ++i) {
    if (saved[i].shape != tensors[i].shape())
      throw ConfigError(fmt::format("checkpoint tensor {} has shape {}, model expects {}", i,
                                    shape_string(saved[i].shape), shape_string(tensors[i].shape())));
    auto dst = tensors[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(saved[i].data[k]);
  }
}

template std::vector<SavedTensor> save_tensors(const std::vector<Tensor<float>>&);
template std::vector<SavedTensor> save_tensors(const std::vector<Tensor<double>>&);
template void load_tensors(const std::vector<SavedTensor>&, std::vector<Tensor<float>>&);
template void load_tensors(const std::vector<SavedTensor>&, std::vector<Tensor<double>>&);

}  // namespace gestigo::nn

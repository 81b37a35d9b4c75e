#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedifl/network.hpp"
#include "fedifl/tensor.hpp"

namespace fedifl {

using Bytes = std::vector<uint8_t>;

struct CodecError : std::runtime_error {
  explicit CodecError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Little-endian primitives. Written byte by byte so the on-disk format is
// identical on any host.

inline void put_u8(Bytes& out, uint8_t v) { out.push_back(v); }

inline void put_u32(Bytes& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

inline void put_i32(Bytes& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

inline void put_f32(Bytes& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_bytes(Bytes& out, const Bytes& blob) {
  put_u32(out, static_cast<uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
}

inline void put_string(Bytes& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

/// Bounds-checked cursor over a byte buffer; every failure names the offset.
class ByteReader {
 public:
  explicit ByteReader(const Bytes& buf) : buf_(buf) {}

  size_t offset() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }
  size_t remaining() const { return buf_.size() - pos_; }

  uint8_t u8() {
    need(1, "u8");
    return buf_[pos_++];
  }

  uint32_t u32() {
    need(4, "u32");
    const uint32_t v = static_cast<uint32_t>(buf_[pos_]) | static_cast<uint32_t>(buf_[pos_ + 1]) << 8 |
                       static_cast<uint32_t>(buf_[pos_ + 2]) << 16 | static_cast<uint32_t>(buf_[pos_ + 3]) << 24;
    pos_ += 4;
    return v;
  }

  int32_t i32() { return static_cast<int32_t>(u32()); }

  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string string() {
    const uint32_t n = u32();
    need(n, "string body");
    std::string s(buf_.begin() + static_cast<long>(pos_), buf_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }

  Bytes blob() {
    const uint32_t n = u32();
    need(n, "blob body");
    Bytes b(buf_.begin() + static_cast<long>(pos_), buf_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return b;
  }

  void need(size_t n, const char* what) const {
    if (pos_ + n > buf_.size())
      throw CodecError("truncated stream: need " + std::to_string(n) + " byte(s) for " + what + " at byte offset " +
                       std::to_string(pos_) + ", have " + std::to_string(buf_.size() - pos_));
  }

 private:
  const Bytes& buf_;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Named-tensor stream: per tensor, u32 name length, UTF-8 name, u8 rank,
// u32 extents, then the values as little-endian f32.

template <class S>
void write_named_tensor(Bytes& out, const std::string& name, const Tensor<S>& t) {
  put_string(out, name);
  put_u8(out, static_cast<uint8_t>(t.rank()));
  for (int e : t.shape) put_u32(out, static_cast<uint32_t>(e));
  for (Eigen::Index i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t.data[i]));
}

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

inline NamedTensor read_named_tensor(ByteReader& r) {
  NamedTensor nt;
  nt.name = r.string();
  const int rank = r.u8();
  std::vector<int> shape(static_cast<size_t>(rank));
  for (int& e : shape) {
    const uint32_t v = r.u32();
    if (v == 0 || v > (1u << 28)) throw CodecError("implausible extent " + std::to_string(v) + " in tensor " + nt.name);
    e = static_cast<int>(v);
  }
  nt.tensor = Tensor<float>(std::move(shape));
  r.need(static_cast<size_t>(nt.tensor.size()) * 4, "tensor payload");
  for (Eigen::Index i = 0; i < nt.tensor.size(); ++i) nt.tensor.data[i] = r.f32();
  return nt;
}

// ---------------------------------------------------------------------------
// Whole-network parameter streams: every state tensor (trainable weights plus
// batch-norm running stats) in declaration order.

template <class S>
Bytes serialize_network(Network<S>& net) {
  Bytes out;
  for (const auto& p : net.state_params()) write_named_tensor(out, p.name, *p.value);
  return out;
}

/// Loads a parameter stream into an existing network. Every tensor in the
/// stream must match a state param by name and shape, and every state param
/// must be covered exactly once.
template <class S>
void load_network(Network<S>& net, const Bytes& bytes) {
  auto params = net.state_params();
  std::vector<bool> seen(params.size(), false);
  ByteReader r(bytes);
  while (!r.done()) {
    const NamedTensor nt = read_named_tensor(r);
    bool matched = false;
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != nt.name) continue;
      if (seen[i]) throw CodecError("duplicate tensor " + nt.name + " in stream for network " + net.name);
      if (params[i].value->shape != nt.tensor.shape)
        throw CodecError("shape mismatch for " + nt.name + ": stream has " + shape_str(nt.tensor.shape) +
                         ", network " + net.name + " has " + shape_str(params[i].value->shape));
      params[i].value->data = nt.tensor.data.template cast<S>();
      seen[i] = true;
      matched = true;
      break;
    }
    if (!matched) throw CodecError("stream tensor " + nt.name + " not present in network " + net.name);
  }
  for (size_t i = 0; i < params.size(); ++i)
    if (!seen[i]) throw CodecError("stream for network " + net.name + " missing tensor " + params[i].name);
}

inline void save_bytes(const std::string& path, const Bytes& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CodecError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CodecError("short write to " + path);
}

inline Bytes load_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw CodecError("cannot open " + path);
  const std::streamsize n = f.tellg();
  f.seekg(0);
  Bytes bytes(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw CodecError("short read from " + path);
  return bytes;
}

template <class S>
void save_checkpoint(const std::string& path, Network<S>& net) {
  save_bytes(path, serialize_network(net));
}

template <class S>
void load_checkpoint(const std::string& path, Network<S>& net) {
  load_network(net, load_bytes(path));
}

}  // namespace fedifl

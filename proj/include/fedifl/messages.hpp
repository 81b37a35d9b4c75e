#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fedifl/serialize.hpp"

namespace fedifl {

// The only data allowed across the client/cloud boundary: model parameters
// and label spaces. There is deliberately no variant that could carry raw
// signals, features, prototypes, or per-sample statistics, so privacy holds
// at the schema level, not by convention.

enum class MessageKind : uint8_t {
  generator_upload = 1,
  library_download = 2,
  model_upload = 3,
  global_model_distribution = 4,
};

constexpr std::array<MessageKind, 4> kAllMessageKinds{
    MessageKind::generator_upload,
    MessageKind::library_download,
    MessageKind::model_upload,
    MessageKind::global_model_distribution,
};

inline const char* message_kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::generator_upload: return "generator_upload";
    case MessageKind::library_download: return "library_download";
    case MessageKind::model_upload: return "model_upload";
    case MessageKind::global_model_distribution: return "global_model_distribution";
  }
  return "unknown";
}

struct GeneratorUpload {
  int client_id = -1;
  Bytes generator_params;
  std::vector<int> label_space;
};

struct LibraryEntry {
  int client_id = -1;
  Bytes generator_params;
  std::vector<int> label_space;
};

// Everything one client needs about the rest of the fleet: the other
// clients' generators and label spaces, never its own.
struct LibraryDownload {
  std::vector<LibraryEntry> entries;
};

struct ModelUpload {
  int client_id = -1;
  Bytes primary_params;
  Bytes invariant_params;
  Bytes specific_params;
  Bytes global_classifier_params;
};

struct GlobalModelDistribution {
  Bytes primary_params;
  Bytes invariant_params;
  std::vector<std::pair<int, Bytes>> global_classifiers;  // client id -> params
};

using FederationMessage =
    std::variant<GeneratorUpload, LibraryDownload, ModelUpload, GlobalModelDistribution>;

static_assert(std::variant_size_v<FederationMessage> == kAllMessageKinds.size(),
              "every message variant must be listed in kAllMessageKinds");

inline MessageKind message_kind(const FederationMessage& m) {
  return static_cast<MessageKind>(m.index() + 1);
}

// ---------------------------------------------------------------------------
// Wire codec: u8 kind tag followed by the variant fields.

namespace detail {

inline void put_label_space(Bytes& out, const std::vector<int>& space) {
  put_u32(out, static_cast<uint32_t>(space.size()));
  for (int l : space) put_i32(out, l);
}

inline std::vector<int> read_label_space(ByteReader& r) {
  const uint32_t n = r.u32();
  if (n > 1024) throw CodecError("implausible label space size " + std::to_string(n));
  std::vector<int> space(n);
  for (int& l : space) l = r.i32();
  return space;
}

}  // namespace detail

inline Bytes encode_message(const FederationMessage& msg) {
  Bytes out;
  put_u8(out, static_cast<uint8_t>(message_kind(msg)));
  if (const auto* up = std::get_if<GeneratorUpload>(&msg)) {
    put_i32(out, up->client_id);
    put_bytes(out, up->generator_params);
    detail::put_label_space(out, up->label_space);
  } else if (const auto* dl = std::get_if<LibraryDownload>(&msg)) {
    put_u32(out, static_cast<uint32_t>(dl->entries.size()));
    for (const auto& e : dl->entries) {
      put_i32(out, e.client_id);
      put_bytes(out, e.generator_params);
      detail::put_label_space(out, e.label_space);
    }
  } else if (const auto* mu = std::get_if<ModelUpload>(&msg)) {
    put_i32(out, mu->client_id);
    put_bytes(out, mu->primary_params);
    put_bytes(out, mu->invariant_params);
    put_bytes(out, mu->specific_params);
    put_bytes(out, mu->global_classifier_params);
  } else if (const auto* gd = std::get_if<GlobalModelDistribution>(&msg)) {
    put_bytes(out, gd->primary_params);
    put_bytes(out, gd->invariant_params);
    put_u32(out, static_cast<uint32_t>(gd->global_classifiers.size()));
    for (const auto& [id, params] : gd->global_classifiers) {
      put_i32(out, id);
      put_bytes(out, params);
    }
  }
  return out;
}

inline FederationMessage decode_message(const Bytes& bytes) {
  ByteReader r(bytes);
  const uint8_t tag = r.u8();
  FederationMessage msg;
  switch (static_cast<MessageKind>(tag)) {
    case MessageKind::generator_upload: {
      GeneratorUpload up;
      up.client_id = r.i32();
      up.generator_params = r.blob();
      up.label_space = detail::read_label_space(r);
      msg = std::move(up);
      break;
    }
    case MessageKind::library_download: {
      LibraryDownload dl;
      const uint32_t n = r.u32();
      for (uint32_t i = 0; i < n; ++i) {
        LibraryEntry e;
        e.client_id = r.i32();
        e.generator_params = r.blob();
        e.label_space = detail::read_label_space(r);
        dl.entries.push_back(std::move(e));
      }
      msg = std::move(dl);
      break;
    }
    case MessageKind::model_upload: {
      ModelUpload mu;
      mu.client_id = r.i32();
      mu.primary_params = r.blob();
      mu.invariant_params = r.blob();
      mu.specific_params = r.blob();
      mu.global_classifier_params = r.blob();
      msg = std::move(mu);
      break;
    }
    case MessageKind::global_model_distribution: {
      GlobalModelDistribution gd;
      gd.primary_params = r.blob();
      gd.invariant_params = r.blob();
      const uint32_t n = r.u32();
      for (uint32_t i = 0; i < n; ++i) {
        const int id = r.i32();
        gd.global_classifiers.emplace_back(id, r.blob());
      }
      msg = std::move(gd);
      break;
    }
    default:
      throw CodecError("unknown message tag " + std::to_string(tag) + " at byte offset 0");
  }
  if (!r.done())
    throw CodecError(std::to_string(r.remaining()) + " trailing byte(s) after message at byte offset " +
                     std::to_string(r.offset()));
  return msg;
}

// ---------------------------------------------------------------------------
// In-process bus standing in for the network. Every payload passes through
// the byte codec, so size and privacy invariants are measured on real
// serialized bytes, and per-channel byte counters persist after draining.

class Bus {
 public:
  void post(const std::string& channel, const FederationMessage& msg) {
    Bytes bytes = encode_message(msg);
    bytes_by_channel_[channel] += bytes.size();
    queues_[channel].push_back(std::move(bytes));
  }

  /// Decodes and removes all pending messages on a channel, FIFO.
  std::vector<FederationMessage> drain(const std::string& channel) {
    std::vector<FederationMessage> out;
    auto it = queues_.find(channel);
    if (it == queues_.end()) return out;
    for (const Bytes& b : it->second) out.push_back(decode_message(b));
    it->second.clear();
    return out;
  }

  uint64_t bytes_posted(const std::string& channel) const {
    const auto it = bytes_by_channel_.find(channel);
    return it == bytes_by_channel_.end() ? 0 : it->second;
  }

  uint64_t total_bytes() const {
    uint64_t t = 0;
    for (const auto& [channel, n] : bytes_by_channel_) t += n;
    return t;
  }

  const std::map<std::string, uint64_t>& byte_counts() const { return bytes_by_channel_; }

 private:
  std::map<std::string, std::vector<Bytes>> queues_;
  std::map<std::string, uint64_t> bytes_by_channel_;
};

}  // namespace fedifl

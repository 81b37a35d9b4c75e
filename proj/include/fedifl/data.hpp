#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedifl/models.hpp"
#include "fedifl/rng.hpp"
#include "fedifl/serialize.hpp"
#include "fedifl/tensor.hpp"

namespace fedifl {

// ---------------------------------------------------------------------------
// Fleet layout: which client owns which devices, and which health states each
// device exhibits. Label ids are global (0 = normal, 1-4 = fault modes).

struct DeviceSpec {
  int device_id = 0;
  std::vector<int> labels;
};

struct ClientSpec {
  int client_id = 0;
  std::vector<DeviceSpec> devices;

  std::vector<int> label_space() const {
    std::vector<int> all;
    for (const auto& d : devices) all.insert(all.end(), d.labels.begin(), d.labels.end());
    return sorted_labels(all);
  }
};

struct FleetLayout {
  std::vector<ClientSpec> clients;

  const ClientSpec& client(int id) const {
    for (const auto& c : clients)
      if (c.client_id == id) return c;
    throw std::invalid_argument("no client " + std::to_string(id) + " in layout");
  }

  std::vector<int> global_space() const {
    std::vector<int> all;
    for (const auto& c : clients) {
      const auto s = c.label_space();
      all.insert(all.end(), s.begin(), s.end());
    }
    return sorted_labels(all);
  }
};

// The four-client, fifteen-device fleet used throughout.
inline FleetLayout default_layout() {
  FleetLayout fl;
  fl.clients = {
      {1, {{1, {0, 1, 3}}, {2, {0, 1}}, {3, {0, 3}}}},
      {2, {{4, {0, 3}}, {5, {0, 3, 4}}, {6, {0, 2}}}},
      {3, {{7, {0, 4}}, {8, {0, 1}}, {9, {0, 1}}, {10, {0, 2}}, {11, {0, 4}}, {12, {0, 2}}}},
      {4, {{13, {0, 4}}, {14, {0, 3}}, {15, {0, 2, 3}}}},
  };
  return fl;
}

/// Checks the label-space structure the protocol depends on: every client
/// pair must share at least one label, and neither space may contain the
/// other. Violations are reported, not fatal: the reference fleet itself has
/// two clients with identical spaces.
inline std::vector<std::string> layout_warnings(const FleetLayout& fl) {
  std::vector<std::string> warnings;
  for (size_t i = 0; i < fl.clients.size(); ++i)
    for (size_t j = i + 1; j < fl.clients.size(); ++j) {
      const auto a = fl.clients[i].label_space(), b = fl.clients[j].label_space();
      std::vector<int> inter;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
      const std::string pair = "clients " + std::to_string(fl.clients[i].client_id) + " and " +
                               std::to_string(fl.clients[j].client_id);
      if (inter.empty()) warnings.push_back(pair + " share no label");
      if (std::includes(a.begin(), a.end(), b.begin(), b.end()) ||
          std::includes(b.begin(), b.end(), a.begin(), a.end()))
        warnings.push_back(pair + " have nested label spaces");
    }
  return warnings;
}

// ---------------------------------------------------------------------------
// Domain shift: per-client and per-device gain, base-frequency scaling, and
// additive white noise. Device values perturb their client's values.

struct ShiftParams {
  double gain = 1.0;
  double freq_offset = 0.0;  // relative: effective frequency factor is 1 + offset
  double noise_sigma = 0.0;
};

struct DomainShiftSpec {
  std::map<int, ShiftParams> client;  // by client id
  std::map<int, ShiftParams> device;  // by device id; composed on top of the client's

  static DomainShiftSpec none() { return {}; }

  // Cross-client shifts large enough to defeat raw-signal matching: gain and
  // noise dominate (they wreck amplitude-sensitive matching), while frequency
  // offsets stay small and device ranges overlap across clients, so a model
  // trained on the other clients still faces an interpolation problem rather
  // than an impossible extrapolation.
  static DomainShiftSpec defaults(const FleetLayout& layout) {
    DomainShiftSpec s;
    s.client[1] = {1.00, 0.000, 0.05};
    s.client[2] = {1.45, 0.060, 0.08};
    s.client[3] = {0.70, 0.010, 0.06};
    s.client[4] = {1.25, 0.015, 0.07};
    for (const auto& c : layout.clients) {
      const double mid = 0.5 * static_cast<double>(c.devices.size() - 1);
      for (size_t i = 0; i < c.devices.size(); ++i) {
        const double k = static_cast<double>(i);
        s.device[c.devices[i].device_id] = {1.0 + 0.04 * k, 0.010 * (k - mid), 0.004 * k};
      }
    }
    return s;
  }

  ShiftParams effective(int client_id, int device_id) const {
    ShiftParams p;
    const auto ci = client.find(client_id);
    if (ci != client.end()) p = ci->second;
    const auto di = device.find(device_id);
    if (di != device.end()) {
      p.gain *= di->second.gain;
      p.freq_offset += di->second.freq_offset;
      p.noise_sigma += di->second.noise_sigma;
    }
    if (p.gain <= 0) throw std::invalid_argument("shift gain must be positive");
    if (p.noise_sigma < 0) throw std::invalid_argument("noise sigma must be non-negative");
    return p;
  }
};

// ---------------------------------------------------------------------------
// Samples and per-client datasets

struct SignalSample {
  Tensor<float> signal;  // (channels, L)
  int label = -1;
  int device_id = -1;
  int client_id = -1;

  bool operator==(const SignalSample& o) const {
    return label == o.label && device_id == o.device_id && client_id == o.client_id &&
           signal.shape == o.signal.shape && (signal.data == o.signal.data).all();
  }
};

/// Immutable after construction. Every sample read through the counting
/// accessors bumps `accesses`; the federation layer uses this to prove the
/// target client's data is never touched before inference.
class ClientDataset {
 public:
  int client_id = -1;
  std::vector<int> label_space;

  void add_train(SignalSample s) { train_.push_back(std::move(s)); }
  void add_heldout(SignalSample s) { heldout_.push_back(std::move(s)); }

  size_t train_size() const { return train_.size(); }
  size_t heldout_size() const { return heldout_.size(); }

  const SignalSample& train(size_t i) const {
    ++accesses_;
    return train_.at(i);
  }
  const SignalSample& heldout(size_t i) const {
    ++accesses_;
    return heldout_.at(i);
  }

  uint64_t accesses() const { return accesses_; }
  void reset_accesses() const { accesses_ = 0; }

  // Non-counting views for persistence and equality checks only; training
  // code must go through the counting accessors.
  const std::vector<SignalSample>& train_raw() const { return train_; }
  const std::vector<SignalSample>& heldout_raw() const { return heldout_; }

 private:
  std::vector<SignalSample> train_;
  std::vector<SignalSample> heldout_;
  mutable uint64_t accesses_ = 0;
};

using Fleet = std::map<int, ClientDataset>;  // by client id

// ---------------------------------------------------------------------------
// Synthetic signal recipe. Class c is a fundamental plus a phase-locked
// half-amplitude second harmonic at a class-specific base frequency, plus a
// class-specific impulse train with exponentially decaying ringing, its
// origin locked to the same rotation phase (impacts happen at a fixed shaft
// angle). Client/device shifts scale gain, stretch all frequencies, and add
// white noise. The single random rotation phase depends only on
// (seed, label, index), so shift-free configurations produce identical
// samples on every device.

namespace detail {

constexpr double kBaseFreq[5] = {25.0, 47.0, 68.0, 89.0, 110.0};  // cycles per window
constexpr double kTwoPi = 6.283185307179586477;

inline Tensor<float> synth_signal(int L, int label, const ShiftParams& shift, uint64_t base_seed,
                                  uint64_t noise_seed) {
  Rng base(base_seed);
  const double theta = base.uniform(0.0, kTwoPi);  // rotation phase; all class structure locks to it

  const double ff = 1.0 + shift.freq_offset;
  const double f = kBaseFreq[label] * ff;
  const int period = std::max(2, static_cast<int>(std::lround(L / ((4.0 + label) * ff))));
  const int origin = static_cast<int>(theta / kTwoPi * period);

  Tensor<float> out({1, L});
  ArrayX<double> s(L);
  for (int t = 0; t < L; ++t) {
    const double u = kTwoPi * t / L;
    s[t] = std::sin(f * u + theta) + 0.5 * std::sin(2.0 * f * u + 2.0 * theta + 0.7);
  }
  const double tau = 12.0;
  for (int q = origin; q < L; q += period)
    for (int t = q; t < std::min(L, q + 72); ++t)
      s[t] += 0.9 * std::exp(-(t - q) / tau) * std::cos(0.3 * kTwoPi * (t - q));

  s *= shift.gain;
  if (shift.noise_sigma > 0) {
    Rng noise(noise_seed);
    for (int t = 0; t < L; ++t) s[t] += shift.noise_sigma * noise.normal();
  }
  for (int t = 0; t < L; ++t) out.data[t] = static_cast<float>(s[t]);
  return out;
}

}  // namespace detail

/// Generates the full fleet. Per device and label, `n_train` training and
/// `n_heldout` held-out samples; held-out draws use a disjoint stream so they
/// are stable under changes to n_train.
inline Fleet synth_fleet(const FleetLayout& layout, const DomainShiftSpec& spec, int n_train, int L, uint64_t seed,
                         int n_heldout = -1) {
  if (n_train < 1) throw std::invalid_argument("synth_fleet: need n_train >= 1");
  if (L < 64) throw std::invalid_argument("synth_fleet: need L >= 64");
  if (n_heldout < 0) n_heldout = std::max(1, n_train / 4);

  Fleet fleet;
  for (const auto& c : layout.clients) {
    ClientDataset ds;
    ds.client_id = c.client_id;
    ds.label_space = c.label_space();
    for (const auto& dev : c.devices) {
      const ShiftParams shift = spec.effective(c.client_id, dev.device_id);
      for (int label : dev.labels) {
        if (label < 0 || label > 4) throw std::invalid_argument("label out of range 0..4");
        for (int split = 0; split < 2; ++split) {
          const int n = split == 0 ? n_train : n_heldout;
          for (int i = 0; i < n; ++i) {
            const auto u64 = [](int v) { return static_cast<uint64_t>(v); };
            const uint64_t base_seed = hash_seed({seed, u64(label), u64(i), u64(split)});
            const uint64_t noise_seed =
                hash_seed({seed, u64(c.client_id), u64(dev.device_id), u64(label), u64(i), u64(split), 0x9eULL});
            SignalSample s;
            s.signal = detail::synth_signal(L, label, shift, base_seed, noise_seed);
            s.label = label;
            s.device_id = dev.device_id;
            s.client_id = c.client_id;
            if (split == 0)
              ds.add_train(std::move(s));
            else
              ds.add_heldout(std::move(s));
          }
        }
      }
    }
    fleet.emplace(c.client_id, std::move(ds));
  }
  return fleet;
}

// ---------------------------------------------------------------------------
// Batches

struct Batch {
  Tensor<float> signals;  // (B, channels, L)
  std::vector<int> labels;
  std::vector<int> devices;
};

/// Deterministic epoch stream over a client's training samples: per-epoch
/// shuffle within each device, devices interleaved round-robin so every batch
/// mixes devices when batch size allows, trailing short batch dropped.
class BatchStream {
 public:
  BatchStream(const ClientDataset& ds, int batch_size, uint64_t seed)
      : ds_(&ds), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
    if (ds.train_size() < static_cast<size_t>(batch_size))
      throw std::invalid_argument("dataset of " + std::to_string(ds.train_size()) + " samples cannot fill a batch of " +
                                  std::to_string(batch_size));
    std::map<int, std::vector<size_t>> by_device;
    for (size_t i = 0; i < ds.train_raw().size(); ++i) by_device[ds.train_raw()[i].device_id].push_back(i);
    for (auto& [dev, idx] : by_device) groups_.push_back(std::move(idx));
    reshuffle();
  }

  int batches_per_epoch() const { return static_cast<int>(ds_->train_size() / static_cast<size_t>(batch_size_)); }
  int epoch() const { return epoch_; }

  Batch next() {
    if (cursor_ + static_cast<size_t>(batch_size_) > order_.size()) {
      ++epoch_;
      reshuffle();
    }
    Batch b;
    b.labels.resize(static_cast<size_t>(batch_size_));
    b.devices.resize(static_cast<size_t>(batch_size_));
    const SignalSample& first = ds_->train(order_[cursor_]);
    const int C = first.signal.dim(0), L = first.signal.dim(1);
    b.signals = Tensor<float>({batch_size_, C, L});
    for (int k = 0; k < batch_size_; ++k) {
      const SignalSample& s = ds_->train(order_[cursor_ + static_cast<size_t>(k)]);
      b.signals.data.segment(static_cast<Eigen::Index>(k) * C * L, static_cast<Eigen::Index>(C) * L) = s.signal.data;
      b.labels[static_cast<size_t>(k)] = s.label;
      b.devices[static_cast<size_t>(k)] = s.device_id;
    }
    cursor_ += static_cast<size_t>(batch_size_);
    return b;
  }

 private:
  // Stratified shuffle: each device's samples are shuffled, then placed on a
  // jittered lattice with spacing 1/group_size, so every stretch of the epoch
  // order carries a near-proportional mix of devices.
  void reshuffle() {
    Rng rng(hash_seed({seed_, static_cast<uint64_t>(epoch_)}));
    std::vector<std::pair<double, size_t>> keyed;
    keyed.reserve(ds_->train_size());
    for (const auto& g : groups_) {
      auto idx = g;
      rng.shuffle(idx);
      const double jitter = rng.uniform();
      for (size_t k = 0; k < idx.size(); ++k)
        keyed.emplace_back((static_cast<double>(k) + jitter) / static_cast<double>(idx.size()), idx[k]);
    }
    std::sort(keyed.begin(), keyed.end());
    order_.clear();
    order_.reserve(keyed.size());
    for (const auto& [key, i] : keyed) order_.push_back(i);
    cursor_ = 0;
  }

  const ClientDataset* ds_;
  int batch_size_;
  uint64_t seed_;
  std::vector<std::vector<size_t>> groups_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Binary persistence: magic "FDS1", u32 sample count, then per sample
// u8 client, u8 device, u8 label, u8 channels, u32 length, f32 payload.

inline void save_samples(const std::string& path, const std::vector<SignalSample>& samples) {
  Bytes out;
  out.push_back('F');
  out.push_back('D');
  out.push_back('S');
  out.push_back('1');
  put_u32(out, static_cast<uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.client_id < 0 || s.client_id > 255 || s.device_id < 0 || s.device_id > 255 || s.label < 0 || s.label > 255)
      throw CodecError("sample ids and labels must fit in one byte");
    put_u8(out, static_cast<uint8_t>(s.client_id));
    put_u8(out, static_cast<uint8_t>(s.device_id));
    put_u8(out, static_cast<uint8_t>(s.label));
    put_u8(out, static_cast<uint8_t>(s.signal.dim(0)));
    put_u32(out, static_cast<uint32_t>(s.signal.dim(1)));
    for (Eigen::Index i = 0; i < s.signal.size(); ++i) put_f32(out, s.signal.data[i]);
  }
  save_bytes(path, out);
}

inline std::vector<SignalSample> load_samples(const std::string& path) {
  const Bytes bytes = load_bytes(path);
  ByteReader r(bytes);
  r.need(4, "magic");
  if (!(bytes[0] == 'F' && bytes[1] == 'D' && bytes[2] == 'S' && bytes[3] == '1'))
    throw CodecError("bad magic in " + path + ": not an FDS1 sample file");
  for (int i = 0; i < 4; ++i) r.u8();
  const uint32_t count = r.u32();
  std::vector<SignalSample> samples;
  samples.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    SignalSample s;
    s.client_id = r.u8();
    s.device_id = r.u8();
    s.label = r.u8();
    const int channels = r.u8();
    const uint32_t L = r.u32();
    if (channels < 1 || L == 0 || L > (1u << 24))
      throw CodecError("implausible sample geometry at byte offset " + std::to_string(r.offset()));
    s.signal = Tensor<float>({channels, static_cast<int>(L)});
    r.need(static_cast<size_t>(s.signal.size()) * 4, "sample payload");
    for (Eigen::Index i = 0; i < s.signal.size(); ++i) s.signal.data[i] = r.f32();
    samples.push_back(std::move(s));
  }
  if (!r.done()) throw CodecError(std::to_string(r.remaining()) + " trailing byte(s) after samples in " + path);
  return samples;
}

/// Builds a fleet from an externally supplied sample file and manifest
/// layout. All samples load as training data; held-out splits are the
/// caller's concern. Layout structure violations warn on stderr but load.
inline Fleet load_external(const std::string& path, const FleetLayout& manifest) {
  for (const auto& c : manifest.clients)
    for (const auto& d : c.devices)
      for (int l : d.labels)
        if (l < 0 || l > 255)
          throw CodecError("manifest label " + std::to_string(l) + " outside 0..255");

  Fleet fleet;
  for (const auto& c : manifest.clients) {
    ClientDataset ds;
    ds.client_id = c.client_id;
    ds.label_space = c.label_space();
    fleet.emplace(c.client_id, std::move(ds));
  }
  for (auto& s : load_samples(path)) {
    const auto it = fleet.find(s.client_id);
    if (it == fleet.end()) throw CodecError("sample for client " + std::to_string(s.client_id) + " not in manifest");
    const ClientSpec& cs = manifest.client(s.client_id);
    const DeviceSpec* dev = nullptr;
    for (const auto& d : cs.devices)
      if (d.device_id == s.device_id) dev = &d;
    if (!dev) throw CodecError("sample for unknown device " + std::to_string(s.device_id));
    if (std::find(dev->labels.begin(), dev->labels.end(), s.label) == dev->labels.end())
      throw CodecError("unknown label id " + std::to_string(s.label) + " for device " + std::to_string(s.device_id));
    it->second.add_train(std::move(s));
  }
  for (const auto& w : layout_warnings(manifest)) std::cerr << "layout warning: " << w << "\n";
  return fleet;
}

}  // namespace fedifl

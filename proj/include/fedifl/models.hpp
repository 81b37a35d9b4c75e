#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedifl/init.hpp"
#include "fedifl/network.hpp"
#include "fedifl/rng.hpp"

namespace fedifl {

enum class NetId {
  primary,
  deep,
  deep_invariant,
  deep_specific,
  generator,
  identifier,
  local_classifier,
  global_classifier,
};

inline constexpr std::array<NetId, 8> kAllNets = {
    NetId::primary,       NetId::deep,       NetId::deep_invariant,   NetId::deep_specific,
    NetId::generator,     NetId::identifier, NetId::local_classifier, NetId::global_classifier,
};

inline const char* net_name(NetId id) {
  switch (id) {
    case NetId::primary: return "primary";
    case NetId::deep: return "deep";
    case NetId::deep_invariant: return "deep_invariant";
    case NetId::deep_specific: return "deep_specific";
    case NetId::generator: return "generator";
    case NetId::identifier: return "identifier";
    case NetId::local_classifier: return "local_classifier";
    case NetId::global_classifier: return "global_classifier";
  }
  throw std::invalid_argument("unknown network id");
}

struct ArchitectureConfig {
  int input_length = 1024;
  int input_channels = 1;
  int c1 = 8, c2 = 16, c3 = 32;  // primary conv widths
  int deep_channels = 32;
  int feature_dim = 128;
  int gen_hidden1 = 256, gen_hidden2 = 256;
  int noise_dim = 64;

  static ArchitectureConfig paper() { return {}; }

  // Shrunk for fast CPU runs; used by the acceptance suite.
  static ArchitectureConfig desk() {
    ArchitectureConfig a;
    a.input_length = 256;
    a.c1 = 4;
    a.c2 = 8;
    a.c3 = 16;
    a.deep_channels = 16;
    a.feature_dim = 64;
    a.gen_hidden1 = 128;
    a.gen_hidden2 = 128;
    a.noise_dim = 64;
    return a;
  }

  int primary_length() const { return input_length / 4; }
  int primary_flat() const { return c3 * primary_length(); }
  int deep_flat() const { return deep_channels * (input_length / 16); }

  void validate() const {
    if (input_length <= 0 || input_length % 16 != 0)
      throw std::invalid_argument("input_length must be a positive multiple of 16, got " +
                                  std::to_string(input_length));
    for (int v : {input_channels, c1, c2, c3, deep_channels, feature_dim, gen_hidden1, gen_hidden2, noise_dim})
      if (v <= 0) throw std::invalid_argument("architecture widths must be positive");
  }
};

inline std::vector<int> sorted_labels(std::vector<int> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

// Index of `label` in a sorted label space; the logit order of classifiers.
inline int index_of_label(const std::vector<int>& space, int label) {
  const auto it = std::lower_bound(space.begin(), space.end(), label);
  if (it == space.end() || *it != label)
    throw std::out_of_range("label " + std::to_string(label) + " not in label space");
  return static_cast<int>(it - space.begin());
}

template <class S>
Tensor<S> one_hot_rows(const std::vector<int>& labels, const std::vector<int>& space) {
  Tensor<S> out({static_cast<int>(labels.size()), static_cast<int>(space.size())});
  for (size_t i = 0; i < labels.size(); ++i)
    out.data[static_cast<Eigen::Index>(i) * static_cast<Eigen::Index>(space.size()) +
             index_of_label(space, labels[i])] = S(1);
  return out;
}

template <class S>
struct ClientModelBundle {
  ArchitectureConfig arch;
  std::vector<int> label_space;   // sorted; local classifier logit order
  std::vector<int> global_space;  // sorted; global classifier logit order

  Network<S> primary{"primary"};
  Network<S> deep{"deep"};
  Network<S> deep_invariant{"deep_invariant"};
  Network<S> deep_specific{"deep_specific"};
  Network<S> generator{"generator"};
  Network<S> identifier{"identifier"};
  Network<S> local_classifier{"local_classifier"};
  Network<S> global_classifier{"global_classifier"};

  Network<S>& net(NetId id) {
    switch (id) {
      case NetId::primary: return primary;
      case NetId::deep: return deep;
      case NetId::deep_invariant: return deep_invariant;
      case NetId::deep_specific: return deep_specific;
      case NetId::generator: return generator;
      case NetId::identifier: return identifier;
      case NetId::local_classifier: return local_classifier;
      case NetId::global_classifier: return global_classifier;
    }
    throw std::invalid_argument("unknown network id");
  }
  const Network<S>& net(NetId id) const { return const_cast<ClientModelBundle*>(this)->net(id); }
};

namespace detail {

template <class S>
Network<S> build_primary(const ArchitectureConfig& a, Rng& rng) {
  Network<S> n("primary");
  n.layers.push_back(make_conv_layer<S>(rng, a.c1, a.input_channels, 5));
  n.layers.push_back(make_batchnorm_layer<S>(a.c1));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(MaxPool1dLayer{2, 2});
  n.layers.push_back(make_conv_layer<S>(rng, a.c2, a.c1, 3));
  n.layers.push_back(make_batchnorm_layer<S>(a.c2));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(MaxPool1dLayer{2, 2});
  n.layers.push_back(make_conv_layer<S>(rng, a.c3, a.c2, 3));
  n.layers.push_back(make_batchnorm_layer<S>(a.c3));
  n.layers.push_back(ReluLayer{});
  return n;
}

template <class S>
Network<S> build_deep(const ArchitectureConfig& a, Rng& rng, const std::string& name) {
  Network<S> n(name);
  n.layers.push_back(MaxPool1dLayer{2, 2});
  n.layers.push_back(make_conv_layer<S>(rng, a.deep_channels, a.c3, 3));
  n.layers.push_back(make_batchnorm_layer<S>(a.deep_channels));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(MaxPool1dLayer{2, 2});
  n.layers.push_back(FlattenLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, a.feature_dim, a.deep_flat()));
  n.layers.push_back(ReluLayer{});
  return n;
}

template <class S>
Network<S> build_generator(const ArchitectureConfig& a, Rng& rng, int local_classes) {
  Network<S> n("generator");
  n.layers.push_back(make_fc_layer<S>(rng, a.gen_hidden1, a.noise_dim + local_classes));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, a.gen_hidden2, a.gen_hidden1));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, a.primary_flat(), a.gen_hidden2));
  n.layers.push_back(Reshape3dLayer{a.c3, a.primary_length()});
  return n;
}

template <class S>
Network<S> build_identifier(const ArchitectureConfig& a, Rng& rng) {
  Network<S> n("identifier");
  n.layers.push_back(FlattenLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, a.gen_hidden1, a.primary_flat()));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, a.gen_hidden2, a.gen_hidden1));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, 1, a.gen_hidden2));
  n.layers.push_back(SigmoidLayer{});
  return n;
}

template <class S>
Network<S> build_classifier(const ArchitectureConfig& a, Rng& rng, const std::string& name, int classes) {
  Network<S> n(name);
  n.layers.push_back(make_fc_layer<S>(rng, a.feature_dim, a.feature_dim));
  n.layers.push_back(ReluLayer{});
  n.layers.push_back(make_fc_layer<S>(rng, classes, a.feature_dim));
  return n;
}

}  // namespace detail

// All eight per-client networks, deterministically initialized from the seed.
template <class S>
ClientModelBundle<S> build_bundle(const ArchitectureConfig& arch, const std::vector<int>& label_space,
                                  const std::vector<int>& global_space, uint64_t seed) {
  arch.validate();
  ClientModelBundle<S> b;
  b.arch = arch;
  b.label_space = sorted_labels(label_space);
  b.global_space = sorted_labels(global_space);
  if (b.label_space.empty()) throw std::invalid_argument("build_bundle: empty label space");
  if (!std::includes(b.global_space.begin(), b.global_space.end(), b.label_space.begin(), b.label_space.end()))
    throw std::invalid_argument("build_bundle: label space is not contained in the global space");

  const auto net_rng = [&](NetId id) { return Rng(hash_seed({seed, static_cast<uint64_t>(id)})); };
  {
    Rng r = net_rng(NetId::primary);
    b.primary = detail::build_primary<S>(arch, r);
  }
  {
    Rng r = net_rng(NetId::deep);
    b.deep = detail::build_deep<S>(arch, r, "deep");
  }
  {
    Rng r = net_rng(NetId::deep_invariant);
    b.deep_invariant = detail::build_deep<S>(arch, r, "deep_invariant");
  }
  {
    Rng r = net_rng(NetId::deep_specific);
    b.deep_specific = detail::build_deep<S>(arch, r, "deep_specific");
  }
  {
    Rng r = net_rng(NetId::generator);
    b.generator = detail::build_generator<S>(arch, r, static_cast<int>(b.label_space.size()));
  }
  {
    Rng r = net_rng(NetId::identifier);
    b.identifier = detail::build_identifier<S>(arch, r);
  }
  {
    Rng r = net_rng(NetId::local_classifier);
    b.local_classifier =
        detail::build_classifier<S>(arch, r, "local_classifier", static_cast<int>(b.label_space.size()));
  }
  {
    Rng r = net_rng(NetId::global_classifier);
    b.global_classifier =
        detail::build_classifier<S>(arch, r, "global_classifier", static_cast<int>(b.global_space.size()));
  }
  return b;
}

namespace detail {

template <class S>
void require_same_architecture(Network<S>& a, Network<S>& b) {
  auto pa = a.state_params(), pb = b.state_params();
  if (pa.size() != pb.size())
    throw std::invalid_argument(a.name + " and " + b.name + " differ in parameter count");
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].value->shape != pb[i].value->shape)
      throw std::invalid_argument(a.name + " and " + b.name + " differ in parameter shapes");
}

}  // namespace detail

// Seeds both disentanglers with the trained deep extractor's parameters
// (deep copy, running statistics included). Idempotent.
template <class S>
void init_disentanglers(ClientModelBundle<S>& b) {
  detail::require_same_architecture(b.deep, b.deep_invariant);
  detail::require_same_architecture(b.deep, b.deep_specific);
  for (Network<S>* target : {&b.deep_invariant, &b.deep_specific}) {
    const std::string name = target->name;
    const bool frozen = target->frozen;
    *target = b.deep;
    target->name = name;
    target->frozen = frozen;
  }
}

template <class S>
void set_frozen(ClientModelBundle<S>& b, std::initializer_list<NetId> ids, bool flag) {
  for (NetId id : ids) b.net(id).frozen = flag;
}

}  // namespace fedifl

#pragma once

#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedifl/layers.hpp"
#include "fedifl/tensor.hpp"

namespace fedifl {

template <class S>
struct Conv1dLayer {
  ConvParams<S> params;
  int stride = 1;
  Padding pad = Padding::same;
};

template <class S>
struct BatchNorm1dLayer {
  BatchNormParams<S> params;
  S momentum = S(0.1);
  S eps = S(1e-5);
};

struct MaxPool1dLayer {
  int k = 2;
  int stride = 2;
};

struct ReluLayer {};
struct SigmoidLayer {};
struct FlattenLayer {};

struct Reshape3dLayer {
  int channels = 0;
  int length = 0;
};

template <class S>
struct FcLayer {
  FcParams<S> params;
};

template <class S>
using Layer = std::variant<Conv1dLayer<S>, BatchNorm1dLayer<S>, MaxPool1dLayer, ReluLayer, SigmoidLayer,
                           FlattenLayer, Reshape3dLayer, FcLayer<S>>;

template <class S>
struct InputCache {
  Tensor<S> input;
};
template <class S>
struct OutputCache {
  Tensor<S> output;
};
struct PoolCache {
  std::vector<int> argmax;
  std::vector<int> in_shape;
};
struct ShapeCache {
  std::vector<int> in_shape;
};

template <class S>
using LayerCache = std::variant<std::monostate, InputCache<S>, OutputCache<S>, PoolCache, ShapeCache, BnCache<S>>;

template <class S>
struct Tape {
  std::vector<LayerCache<S>> entries;
};

// Accumulating gradient store keyed by parameter name.
template <class S>
struct GradientSet {
  std::map<std::string, Tensor<S>> grads;

  void accumulate(const std::string& name, Tensor<S> g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, std::move(g));
    } else {
      require_same_shape(it->second, g, "GradientSet::accumulate(" + name + ")");
      it->second.data += g.data;
    }
  }

  const Tensor<S>* find(const std::string& name) const {
    auto it = grads.find(name);
    return it == grads.end() ? nullptr : &it->second;
  }

  void clear() { grads.clear(); }
};

template <class S>
struct ParamRef {
  std::string name;
  Tensor<S>* value;
  bool trainable;
};

template <class S>
class Network {
 public:
  std::string name;
  std::vector<Layer<S>> layers;
  bool frozen = false;

  Network() = default;
  explicit Network(std::string n) : name(std::move(n)) {}

  Tensor<S> forward(Tensor<S> x, Mode mode, Tape<S>* tape = nullptr) {
    if (frozen) mode = Mode::eval;
    if (tape) {
      tape->entries.clear();
      tape->entries.reserve(layers.size());
    }
    for (auto& layer : layers) x = apply_layer(layer, std::move(x), mode, tape);
    return x;
  }

  // Walks the tape in reverse; parameter gradients accumulate into gs when
  // given, the return value is the gradient w.r.t. the network input.
  Tensor<S> backward(const Tape<S>& tape, Tensor<S> upstream, GradientSet<S>* gs = nullptr) const {
    if (tape.entries.size() != layers.size())
      throw ShapeError("Network::backward(" + name + "): tape has " + std::to_string(tape.entries.size()) +
                       " entries for " + std::to_string(layers.size()) + " layers");
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
      upstream = backward_layer(layers[static_cast<size_t>(i)], tape.entries[static_cast<size_t>(i)],
                                std::move(upstream), gs, i);
    return upstream;
  }

  // Every persistent tensor, running statistics included.
  std::vector<ParamRef<S>> state_params() {
    std::vector<ParamRef<S>> out;
    for (size_t i = 0; i < layers.size(); ++i) {
      const std::string prefix = layer_prefix(i);
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv1dLayer<S>>) {
              out.push_back({prefix + ".kernel", &l.params.kernel, true});
              out.push_back({prefix + ".bias", &l.params.bias, true});
            } else if constexpr (std::is_same_v<L, BatchNorm1dLayer<S>>) {
              out.push_back({prefix + ".gain", &l.params.gain, true});
              out.push_back({prefix + ".shift", &l.params.shift, true});
              out.push_back({prefix + ".running_mean", &l.params.running_mean, false});
              out.push_back({prefix + ".running_var", &l.params.running_var, false});
            } else if constexpr (std::is_same_v<L, FcLayer<S>>) {
              out.push_back({prefix + ".weight", &l.params.weight, true});
              out.push_back({prefix + ".bias", &l.params.bias, true});
            }
          },
          layers[i]);
    }
    return out;
  }

  std::vector<ParamRef<S>> trainable_params() {
    std::vector<ParamRef<S>> out;
    for (auto& p : state_params())
      if (p.trainable) out.push_back(p);
    return out;
  }

  Eigen::Index param_count() {
    Eigen::Index n = 0;
    for (auto& p : trainable_params()) n += p.value->size();
    return n;
  }

  std::string layer_prefix(size_t i) const { return "layer" + std::to_string(i); }

 private:
  Tensor<S> apply_layer(Layer<S>& layer, Tensor<S> x, Mode mode, Tape<S>* tape) {
    LayerCache<S> cache;
    Tensor<S> y = std::visit(
        [&](auto& l) -> Tensor<S> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv1dLayer<S>>) {
            Tensor<S> out = conv1d(x, l.params, l.stride, l.pad);
            if (tape) cache = InputCache<S>{std::move(x)};
            return out;
          } else if constexpr (std::is_same_v<L, BatchNorm1dLayer<S>>) {
            BnCache<S> bn;
            Tensor<S> out = batchnorm1d(x, l.params, mode, l.momentum, l.eps, tape ? &bn : nullptr);
            if (tape) cache = std::move(bn);
            return out;
          } else if constexpr (std::is_same_v<L, MaxPool1dLayer>) {
            PoolResult<S> r = maxpool1d(x, l.k, l.stride);
            if (tape) cache = PoolCache{std::move(r.argmax), x.shape};
            return std::move(r.output);
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            Tensor<S> out = relu(x);
            if (tape) cache = InputCache<S>{std::move(x)};
            return out;
          } else if constexpr (std::is_same_v<L, SigmoidLayer>) {
            Tensor<S> out = sigmoid(x);
            if (tape) cache = OutputCache<S>{out};
            return out;
          } else if constexpr (std::is_same_v<L, FlattenLayer>) {
            if (x.rank() != 3) throw ShapeError("flatten: expected rank-3 input, got " + shape_str(x.shape));
            if (tape) cache = ShapeCache{x.shape};
            return x.reshaped({x.dim(0), x.dim(1) * x.dim(2)});
          } else if constexpr (std::is_same_v<L, Reshape3dLayer>) {
            if (x.rank() != 2 || x.dim(1) != l.channels * l.length)
              throw ShapeError("reshape3d: cannot view " + shape_str(x.shape) + " as (B," +
                               std::to_string(l.channels) + "," + std::to_string(l.length) + ")");
            if (tape) cache = ShapeCache{x.shape};
            return x.reshaped({x.dim(0), l.channels, l.length});
          } else {
            static_assert(std::is_same_v<L, FcLayer<S>>);
            Tensor<S> out = fc(x, l.params);
            if (tape) cache = InputCache<S>{std::move(x)};
            return out;
          }
        },
        layer);
    if (tape) tape->entries.push_back(std::move(cache));
    return y;
  }

  Tensor<S> backward_layer(const Layer<S>& layer, const LayerCache<S>& cache, Tensor<S> up, GradientSet<S>* gs,
                           int idx) const {
    const std::string prefix = layer_prefix(static_cast<size_t>(idx));
    return std::visit(
        [&](const auto& l) -> Tensor<S> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv1dLayer<S>>) {
            const auto& c = std::get<InputCache<S>>(cache);
            ConvGrads<S> g = conv1d_backward(up, c.input, l.params, l.stride, l.pad);
            if (gs) {
              gs->accumulate(prefix + ".kernel", std::move(g.kernel));
              gs->accumulate(prefix + ".bias", std::move(g.bias));
            }
            return std::move(g.input);
          } else if constexpr (std::is_same_v<L, BatchNorm1dLayer<S>>) {
            const auto& c = std::get<BnCache<S>>(cache);
            BnGrads<S> g = batchnorm1d_backward(up, l.params, c);
            if (gs) {
              gs->accumulate(prefix + ".gain", std::move(g.gain));
              gs->accumulate(prefix + ".shift", std::move(g.shift));
            }
            return std::move(g.input);
          } else if constexpr (std::is_same_v<L, MaxPool1dLayer>) {
            const auto& c = std::get<PoolCache>(cache);
            return maxpool1d_backward(up, c.argmax, c.in_shape);
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            return relu_backward(up, std::get<InputCache<S>>(cache).input);
          } else if constexpr (std::is_same_v<L, SigmoidLayer>) {
            return sigmoid_backward(up, std::get<OutputCache<S>>(cache).output);
          } else if constexpr (std::is_same_v<L, FlattenLayer> || std::is_same_v<L, Reshape3dLayer>) {
            return up.reshaped(std::get<ShapeCache>(cache).in_shape);
          } else {
            static_assert(std::is_same_v<L, FcLayer<S>>);
            const auto& c = std::get<InputCache<S>>(cache);
            FcGrads<S> g = fc_backward(up, c.input, l.params);
            if (gs) {
              gs->accumulate(prefix + ".weight", std::move(g.weight));
              gs->accumulate(prefix + ".bias", std::move(g.bias));
            }
            return std::move(g.input);
          }
        },
        layer);
  }
};

}  // namespace fedifl

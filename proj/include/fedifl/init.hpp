#pragma once

#include <cmath>

#include "fedifl/network.hpp"
#include "fedifl/rng.hpp"

namespace fedifl {

// Uniform [-sqrt(1/fan_in), sqrt(1/fan_in)] for weights and biases.
template <class S>
Conv1dLayer<S> make_conv_layer(Rng& rng, int out_ch, int in_ch, int k, int stride = 1,
                               Padding pad = Padding::same) {
  Conv1dLayer<S> l;
  l.stride = stride;
  l.pad = pad;
  l.params.kernel = Tensor<S>({out_ch, in_ch, k});
  l.params.bias = Tensor<S>({out_ch});
  const S bound = static_cast<S>(std::sqrt(1.0 / (static_cast<double>(in_ch) * k)));
  rng.fill_uniform(l.params.kernel.data, -bound, bound);
  rng.fill_uniform(l.params.bias.data, -bound, bound);
  return l;
}

template <class S>
BatchNorm1dLayer<S> make_batchnorm_layer(int channels) {
  BatchNorm1dLayer<S> l;
  l.params.gain = Tensor<S>({channels});
  l.params.gain.data.setOnes();
  l.params.shift = Tensor<S>({channels});
  l.params.running_mean = Tensor<S>({channels});
  l.params.running_var = Tensor<S>({channels});
  l.params.running_var.data.setOnes();
  return l;
}

template <class S>
FcLayer<S> make_fc_layer(Rng& rng, int out, int in) {
  FcLayer<S> l;
  l.params.weight = Tensor<S>({out, in});
  l.params.bias = Tensor<S>({out});
  const S bound = static_cast<S>(std::sqrt(1.0 / static_cast<double>(in)));
  rng.fill_uniform(l.params.weight.data, -bound, bound);
  rng.fill_uniform(l.params.bias.data, -bound, bound);
  return l;
}

}  // namespace fedifl

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fedifl/tensor.hpp"

namespace fedifl {

enum class Padding { same, none };
enum class Mode { train, eval };

template <class S>
struct ConvParams {
  Tensor<S> kernel;  // (out_ch, in_ch, k)
  Tensor<S> bias;    // (out_ch)
};

template <class S>
struct BatchNormParams {
  Tensor<S> gain, shift;                  // trainable, per channel
  Tensor<S> running_mean, running_var;    // state, per channel
};

template <class S>
struct FcParams {
  Tensor<S> weight;  // (out, in)
  Tensor<S> bias;    // (out)
};

inline int conv_out_length(int L, int k, int stride, Padding pad) {
  if (pad == Padding::same) return (L + stride - 1) / stride;
  if (L < k) throw ShapeError("conv1d: input length " + std::to_string(L) + " shorter than kernel " + std::to_string(k));
  return (L - k) / stride + 1;
}

// Cross-correlation: out[b,oc,i] = bias[oc] + sum_{ic,j} K[oc,ic,j] * x[b,ic, i*stride + j - pad_left]
template <class S>
Tensor<S> conv1d(const Tensor<S>& x, const ConvParams<S>& p, int stride, Padding pad) {
  const int B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int Cout = p.kernel.dim(0), k = p.kernel.dim(2);
  if (p.kernel.dim(1) != Cin)
    throw ShapeError("conv1d: input channels " + shape_str(x.shape) + " do not match kernel " + shape_str(p.kernel.shape));
  const int pad_left = pad == Padding::same ? (k - 1) / 2 : 0;
  const int Lout = conv_out_length(L, k, stride, pad);

  Tensor<S> out({B, Cout, Lout});
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < Cout; ++oc) {
      auto o = out.row(b, oc);
      o = p.bias[oc];
      for (int ic = 0; ic < Cin; ++ic) {
        const auto xin = x.row(b, ic);
        for (int j = 0; j < k; ++j) {
          const S w = p.kernel[(static_cast<Eigen::Index>(oc) * Cin + ic) * k + j];
          if (w == S(0)) continue;
          // valid output range for this tap: 0 <= i*stride + j - pad_left < L
          const int off = j - pad_left;
          const int i_lo = std::max(0, (-off + stride - 1) / stride);
          const int i_hi = std::min(Lout - 1, (L - 1 - off) / stride);
          if (i_hi < i_lo) continue;
          if (stride == 1) {
            o.segment(i_lo, i_hi - i_lo + 1) += w * xin.segment(i_lo + off, i_hi - i_lo + 1);
          } else {
            for (int i = i_lo; i <= i_hi; ++i) o[i] += w * xin[i * stride + off];
          }
        }
      }
    }
  return out;
}

template <class S>
struct ConvGrads {
  Tensor<S> kernel, bias, input;
};

template <class S>
ConvGrads<S> conv1d_backward(const Tensor<S>& upstream, const Tensor<S>& x, const ConvParams<S>& p, int stride,
                             Padding pad) {
  const int B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int Cout = p.kernel.dim(0), k = p.kernel.dim(2);
  const int pad_left = pad == Padding::same ? (k - 1) / 2 : 0;
  const int Lout = conv_out_length(L, k, stride, pad);
  if (upstream.dim(0) != B || upstream.dim(1) != Cout || upstream.dim(2) != Lout)
    throw ShapeError("conv1d_backward: upstream " + shape_str(upstream.shape) + " does not match output shape");

  ConvGrads<S> g{Tensor<S>(p.kernel.shape), Tensor<S>(p.bias.shape), Tensor<S>(x.shape)};
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < Cout; ++oc) {
      const auto up = upstream.row(b, oc);
      g.bias[oc] += up.sum();
      for (int ic = 0; ic < Cin; ++ic) {
        const auto xin = x.row(b, ic);
        auto gxin = g.input.row(b, ic);
        for (int j = 0; j < k; ++j) {
          const int off = j - pad_left;
          const int i_lo = std::max(0, (-off + stride - 1) / stride);
          const int i_hi = std::min(Lout - 1, (L - 1 - off) / stride);
          if (i_hi < i_lo) continue;
          const Eigen::Index kidx = (static_cast<Eigen::Index>(oc) * Cin + ic) * k + j;
          if (stride == 1) {
            const int n = i_hi - i_lo + 1;
            g.kernel[kidx] += (up.segment(i_lo, n) * xin.segment(i_lo + off, n)).sum();
            gxin.segment(i_lo + off, n) += p.kernel[kidx] * up.segment(i_lo, n);
          } else {
            for (int i = i_lo; i <= i_hi; ++i) {
              g.kernel[kidx] += up[i] * xin[i * stride + off];
              gxin[i * stride + off] += p.kernel[kidx] * up[i];
            }
          }
        }
      }
    }
  return g;
}

template <class S>
struct PoolResult {
  Tensor<S> output;
  std::vector<int> argmax;  // flat input index per output element
};

// Ties go to the first maximal index in the window.
template <class S>
PoolResult<S> maxpool1d(const Tensor<S>& x, int k, int stride) {
  if (k <= 0 || stride <= 0) throw ShapeError("maxpool1d: k and stride must be positive");
  const int B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (L < k) throw ShapeError("maxpool1d: input length " + std::to_string(L) + " shorter than window " + std::to_string(k));
  const int Lout = (L - k) / stride + 1;
  PoolResult<S> r{Tensor<S>({B, C, Lout}), std::vector<int>(static_cast<size_t>(B) * C * Lout)};
  Eigen::Index oflat = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const auto xin = x.row(b, c);
      for (int i = 0; i < Lout; ++i, ++oflat) {
        int best = i * stride;
        S best_v = xin[best];
        for (int j = 1; j < k; ++j) {
          const int t = i * stride + j;
          if (xin[t] > best_v) {
            best_v = xin[t];
            best = t;
          }
        }
        r.output.data[oflat] = best_v;
        r.argmax[static_cast<size_t>(oflat)] = (b * C + c) * L + best;
      }
    }
  return r;
}

template <class S>
Tensor<S> maxpool1d_backward(const Tensor<S>& upstream, const std::vector<int>& argmax,
                             const std::vector<int>& input_shape) {
  if (static_cast<size_t>(upstream.size()) != argmax.size())
    throw ShapeError("maxpool1d_backward: upstream does not match cached argmax count");
  Tensor<S> gx(input_shape);
  for (Eigen::Index i = 0; i < upstream.size(); ++i) gx.data[argmax[static_cast<size_t>(i)]] += upstream.data[i];
  return gx;
}

template <class S>
struct BnCache {
  Tensor<S> xhat;          // normalized input
  ArrayX<S> inv_std;       // per channel, the one used in forward
  Mode mode = Mode::train;
};

// Per-channel normalization over (batch, length). Train mode uses biased
// batch variance and updates running stats with the unbiased estimate.
template <class S>
Tensor<S> batchnorm1d(const Tensor<S>& x, BatchNormParams<S>& p, Mode mode, S momentum, S eps,
                      BnCache<S>* cache = nullptr) {
  const int B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (p.gain.size() != C)
    throw ShapeError("batchnorm1d: channel count " + std::to_string(C) + " does not match params " + shape_str(p.gain.shape));
  const Eigen::Index N = static_cast<Eigen::Index>(B) * L;
  if (mode == Mode::train && B < 2) throw ShapeError("batchnorm1d: train mode requires batch >= 2");

  Tensor<S> out(x.shape);
  Tensor<S> xhat(x.shape);
  ArrayX<S> inv_std(C);
  for (int c = 0; c < C; ++c) {
    S mean, var;
    if (mode == Mode::train) {
      S sum = 0, sq = 0;
      for (int b = 0; b < B; ++b) {
        const auto xin = x.row(b, c);
        sum += xin.sum();
        sq += (xin * xin).sum();
      }
      mean = sum / static_cast<S>(N);
      var = sq / static_cast<S>(N) - mean * mean;
      if (var < S(0)) var = S(0);
      const S unbiased = N > 1 ? var * static_cast<S>(N) / static_cast<S>(N - 1) : var;
      p.running_mean[c] = (S(1) - momentum) * p.running_mean[c] + momentum * mean;
      p.running_var[c] = (S(1) - momentum) * p.running_var[c] + momentum * unbiased;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const S is = S(1) / std::sqrt(var + eps);
    inv_std[c] = is;
    for (int b = 0; b < B; ++b) {
      auto xh = xhat.row(b, c);
      xh = (x.row(b, c) - mean) * is;
      out.row(b, c) = p.gain[c] * xh + p.shift[c];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

template <class S>
struct BnGrads {
  Tensor<S> gain, shift, input;
};

template <class S>
BnGrads<S> batchnorm1d_backward(const Tensor<S>& upstream, const BatchNormParams<S>& p, const BnCache<S>& cache) {
  const int B = upstream.dim(0), C = upstream.dim(1), L = upstream.dim(2);
  const Eigen::Index N = static_cast<Eigen::Index>(B) * L;
  BnGrads<S> g{Tensor<S>(p.gain.shape), Tensor<S>(p.shift.shape), Tensor<S>(upstream.shape)};
  for (int c = 0; c < C; ++c) {
    S sum_up = 0, sum_up_xhat = 0;
    for (int b = 0; b < B; ++b) {
      const auto up = upstream.row(b, c);
      sum_up += up.sum();
      sum_up_xhat += (up * cache.xhat.row(b, c)).sum();
    }
    g.shift[c] = sum_up;
    g.gain[c] = sum_up_xhat;
    const S is = cache.inv_std[c];
    if (cache.mode == Mode::train) {
      // dx = gain*is/N * (N*up - sum(up) - xhat*sum(up*xhat))
      const S scale = p.gain[c] * is / static_cast<S>(N);
      for (int b = 0; b < B; ++b)
        g.input.row(b, c) =
            scale * (static_cast<S>(N) * upstream.row(b, c) - sum_up - cache.xhat.row(b, c) * sum_up_xhat);
    } else {
      const S scale = p.gain[c] * is;
      for (int b = 0; b < B; ++b) g.input.row(b, c) = scale * upstream.row(b, c);
    }
  }
  return g;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return Tensor<S>(x.shape, x.data.max(S(0)));
}

// Subgradient 0 at 0.
template <class S>
Tensor<S> relu_backward(const Tensor<S>& upstream, const Tensor<S>& x) {
  require_same_shape(upstream, x, "relu_backward");
  return Tensor<S>(x.shape, upstream.data * (x.data > S(0)).template cast<S>());
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return Tensor<S>(x.shape, S(1) / (S(1) + (-x.data).exp()));
}

template <class S>
Tensor<S> sigmoid_backward(const Tensor<S>& upstream, const Tensor<S>& y) {
  require_same_shape(upstream, y, "sigmoid_backward");
  return Tensor<S>(y.shape, upstream.data * y.data * (S(1) - y.data));
}

// x: (B, in) -> (B, out), out = x W^T + b
template <class S>
Tensor<S> fc(const Tensor<S>& x, const FcParams<S>& p) {
  if (x.dim(1) != p.weight.dim(1))
    throw ShapeError("fc: input width " + shape_str(x.shape) + " does not match weight " + shape_str(p.weight.shape));
  const int B = x.dim(0), out = p.weight.dim(0);
  Tensor<S> y({B, out});
  Eigen::Map<const RowMajorMatrix<S>> W(p.weight.data.data(), out, p.weight.dim(1));
  y.matrix().noalias() = x.matrix() * W.transpose();
  y.matrix().rowwise() += Eigen::Map<const VectorX<S>>(p.bias.data.data(), out).transpose();
  return y;
}

template <class S>
struct FcGrads {
  Tensor<S> weight, bias, input;
};

template <class S>
FcGrads<S> fc_backward(const Tensor<S>& upstream, const Tensor<S>& x, const FcParams<S>& p) {
  const int out = p.weight.dim(0), in = p.weight.dim(1);
  if (upstream.dim(0) != x.dim(0) || upstream.dim(1) != out)
    throw ShapeError("fc_backward: upstream " + shape_str(upstream.shape) + " does not match output shape");
  FcGrads<S> g{Tensor<S>(p.weight.shape), Tensor<S>(p.bias.shape), Tensor<S>(x.shape)};
  Eigen::Map<const RowMajorMatrix<S>> W(p.weight.data.data(), out, in);
  Eigen::Map<RowMajorMatrix<S>> gW(g.weight.data.data(), out, in);
  gW.noalias() = upstream.matrix().transpose() * x.matrix();
  Eigen::Map<VectorX<S>>(g.bias.data.data(), out) = upstream.matrix().colwise().sum().transpose();
  g.input.matrix().noalias() = upstream.matrix() * W;
  return g;
}

// Numerically stable rowwise softmax over (B, C).
template <class S>
Tensor<S> softmax(const Tensor<S>& logits) {
  const int B = logits.dim(0), C = logits.dim(1);
  Tensor<S> p(logits.shape);
  for (int b = 0; b < B; ++b) {
    auto z = logits.data.segment(static_cast<Eigen::Index>(b) * C, C);
    auto out = p.data.segment(static_cast<Eigen::Index>(b) * C, C);
    out = (z - z.maxCoeff()).exp();
    out /= out.sum();
  }
  return p;
}

template <class S>
Tensor<S> softmax_backward(const Tensor<S>& upstream, const Tensor<S>& probs) {
  require_same_shape(upstream, probs, "softmax_backward");
  const int B = probs.dim(0), C = probs.dim(1);
  Tensor<S> g(probs.shape);
  for (int b = 0; b < B; ++b) {
    auto u = upstream.data.segment(static_cast<Eigen::Index>(b) * C, C);
    auto p = probs.data.segment(static_cast<Eigen::Index>(b) * C, C);
    g.data.segment(static_cast<Eigen::Index>(b) * C, C) = p * (u - (u * p).sum());
  }
  return g;
}

}  // namespace fedifl

#pragma once

#include <functional>

#include "fedifl/network.hpp"

namespace fedifl {

// Plain SGD: p <- p - lr * g. Frozen networks are left untouched entirely.
template <class S>
void sgd_step(Network<S>& net, const GradientSet<S>& grads, S lr) {
  if (net.frozen) return;
  for (auto& p : net.trainable_params()) {
    const Tensor<S>* g = grads.find(p.name);
    if (!g) continue;
    require_same_shape(*p.value, *g, "sgd_step(" + net.name + "/" + p.name + ")");
    p.value->data -= lr * g->data;
  }
}

// Rescale a gradient set so its joint L2 norm is at most max_norm. Loss
// values and gradient directions are untouched; only the step length is
// bounded, which keeps stiff loss phases from destroying the network in one
// update. No-op when max_norm <= 0.
template <class S>
void clip_gradient_norm(GradientSet<S>& grads, S max_norm) {
  if (max_norm <= S(0)) return;
  S sq = S(0);
  for (const auto& [name, g] : grads.grads) sq += g.data.square().sum();
  const S norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const S scale = max_norm / norm;
  for (auto& [name, g] : grads.grads) g.data *= scale;
}

// Central finite difference of a scalar function at the current value of
// every coordinate in `x`. The probe width defaults to 1e-5; callers are
// expected to run this in double precision.
template <class S>
Tensor<S> finite_diff_gradient(Tensor<S>& x, const std::function<S()>& f, S h = S(1e-5)) {
  Tensor<S> g(x.shape);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S saved = x.data[i];
    x.data[i] = saved + h;
    const S fp = f();
    x.data[i] = saved - h;
    const S fm = f();
    x.data[i] = saved;
    g.data[i] = (fp - fm) / (S(2) * h);
  }
  return g;
}

// Relative error between an analytic gradient and a reference, using the
// largest magnitude in either vector as the scale. The floor keeps tensors
// whose true gradient is zero (e.g. a conv bias feeding a batchnorm) from
// amplifying finite-difference roundoff, which sits around 1e-11.
template <class S>
S gradient_rel_error(const Tensor<S>& analytic, const Tensor<S>& numeric, S scale_floor = S(1e-6)) {
  require_same_shape(analytic, numeric, "gradient_rel_error");
  const S scale = std::max({analytic.data.abs().maxCoeff(), numeric.data.abs().maxCoeff(), scale_floor});
  return (analytic.data - numeric.data).abs().maxCoeff() / scale;
}

}  // namespace fedifl

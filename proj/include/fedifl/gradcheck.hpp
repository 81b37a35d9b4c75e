#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fedifl/init.hpp"
#include "fedifl/losses.hpp"
#include "fedifl/network.hpp"
#include "fedifl/optim.hpp"
#include "fedifl/rng.hpp"

namespace fedifl {

struct CheckOptions {
  int trials = 100;
  double tolerance = 1e-4;
  double h = 1e-5;
  uint64_t seed = 0x9e3779b97f4a7c15ULL;
  // Offset injected into one analytic coordinate per trial. The harness
  // self-test sets this to prove a wrong gradient is actually caught.
  double sabotage = 0.0;
};

struct CheckResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  double max_rel_err = 0.0;
  double seconds = 0.0;
  bool ok() const { return trials > 0 && failures == 0; }
};

namespace detail {

inline bool fd_compare(Tensor<double>& target, const Tensor<double>& analytic_in,
                       const std::function<double()>& f, const CheckOptions& opt, bool sabotage_here,
                       double& max_rel_err) {
  Tensor<double> analytic = analytic_in;
  if (sabotage_here && analytic.size() > 0 && opt.sabotage != 0.0) analytic.data[0] += opt.sabotage;
  const Tensor<double> numeric = finite_diff_gradient<double>(target, f, opt.h);
  const double err = gradient_rel_error(analytic, numeric);
  if (err > max_rel_err) max_rel_err = err;
  return err <= opt.tolerance;
}

// Checks d/d(params, input) of sum(net(x) * probe) for one random probe.
inline bool network_trial(Network<double>& net, Tensor<double>& x, Mode mode, Rng& rng, const CheckOptions& opt,
                          double& max_rel_err) {
  Tape<double> tape;
  Tensor<double> out = net.forward(x, mode, &tape);
  Tensor<double> probe(out.shape);
  rng.fill_normal(probe.data);
  GradientSet<double> gs;
  Tensor<double> gx = net.backward(tape, probe, &gs);

  const auto f = [&net, &x, mode, &probe]() {
    Tensor<double> o = net.forward(x, mode, nullptr);
    return (o.data * probe.data).sum();
  };

  bool ok = true;
  bool sabotage_here = true;
  for (auto& p : net.trainable_params()) {
    const Tensor<double>* g = gs.find(p.name);
    const Tensor<double> zero(p.value->shape);
    ok = fd_compare(*p.value, g ? *g : zero, f, opt, sabotage_here, max_rel_err) && ok;
    sabotage_here = false;
  }
  ok = fd_compare(x, gx, f, opt, sabotage_here, max_rel_err) && ok;
  return ok;
}

template <class TrialFn>
CheckResult run_trials(const std::string& name, const CheckOptions& opt, TrialFn&& trial) {
  CheckResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < opt.trials; ++t) {
    Rng rng(hash_seed({opt.seed, static_cast<uint64_t>(t)}));
    ++r.trials;
    if (!trial(rng, r.max_rel_err)) ++r.failures;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline Tensor<double> random_signal(Rng& rng, int b, int c, int l) {
  Tensor<double> x({b, c, l});
  rng.fill_normal(x.data);
  return x;
}

// Bounds values away from 0 so finite differences never straddle the kink.
inline void nudge_from_zero(Tensor<double>& x, double margin = 0.05) {
  x.data = x.data.sign() * (x.data.abs() + margin);
}

}  // namespace detail

inline CheckResult check_layer_conv(const CheckOptions& opt, Padding pad, int stride) {
  const std::string name =
      std::string("conv1d/") + (pad == Padding::same ? "same" : "none") + "/s" + std::to_string(stride);
  return detail::run_trials(name, opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(2));
    const int cin = 1 + static_cast<int>(rng.uniform_int(3));
    const int cout = 1 + static_cast<int>(rng.uniform_int(3));
    const int k = rng.uniform_int(2) ? 3 : 5;
    const int l = 8 + static_cast<int>(rng.uniform_int(9));
    Network<double> net("probe");
    net.layers.push_back(make_conv_layer<double>(rng, cout, cin, k, stride, pad));
    Tensor<double> x = detail::random_signal(rng, b, cin, l);
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

inline CheckResult check_layer_batchnorm(const CheckOptions& opt, Mode mode) {
  const std::string name = std::string("batchnorm1d/") + (mode == Mode::train ? "train" : "eval");
  return detail::run_trials(name, opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(3));
    const int c = 1 + static_cast<int>(rng.uniform_int(4));
    const int l = 4 + static_cast<int>(rng.uniform_int(13));
    Network<double> net("probe");
    auto bn = make_batchnorm_layer<double>(c);
    rng.fill_uniform(bn.params.gain.data, 0.5, 1.5);
    rng.fill_uniform(bn.params.shift.data, -0.5, 0.5);
    rng.fill_uniform(bn.params.running_mean.data, -0.3, 0.3);
    rng.fill_uniform(bn.params.running_var.data, 0.5, 2.0);
    net.layers.push_back(std::move(bn));
    Tensor<double> x = detail::random_signal(rng, b, c, l);
    return detail::network_trial(net, x, mode, rng, opt, max_err);
  });
}

inline CheckResult check_layer_maxpool(const CheckOptions& opt) {
  return detail::run_trials("maxpool1d", opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(2));
    const int c = 1 + static_cast<int>(rng.uniform_int(3));
    const int l = 8 + 2 * static_cast<int>(rng.uniform_int(5));
    Network<double> net("probe");
    net.layers.push_back(MaxPool1dLayer{2, 2});
    // Scale up so no window ever holds two values within the probe width.
    Tensor<double> x = detail::random_signal(rng, b, c, l);
    x.data *= 10.0;
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

inline CheckResult check_layer_relu(const CheckOptions& opt) {
  return detail::run_trials("relu", opt, [&](Rng& rng, double& max_err) {
    Network<double> net("probe");
    net.layers.push_back(ReluLayer{});
    Tensor<double> x = detail::random_signal(rng, 2 + static_cast<int>(rng.uniform_int(2)),
                                             1 + static_cast<int>(rng.uniform_int(3)),
                                             8 + static_cast<int>(rng.uniform_int(9)));
    detail::nudge_from_zero(x);
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

inline CheckResult check_layer_sigmoid(const CheckOptions& opt) {
  return detail::run_trials("sigmoid", opt, [&](Rng& rng, double& max_err) {
    Network<double> net("probe");
    net.layers.push_back(SigmoidLayer{});
    Tensor<double> x({2 + static_cast<int>(rng.uniform_int(2)), 1 + static_cast<int>(rng.uniform_int(8))});
    rng.fill_normal(x.data);
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

inline CheckResult check_layer_fc(const CheckOptions& opt) {
  return detail::run_trials("fc", opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(3));
    const int in = 3 + static_cast<int>(rng.uniform_int(10));
    const int out = 2 + static_cast<int>(rng.uniform_int(8));
    Network<double> net("probe");
    net.layers.push_back(make_fc_layer<double>(rng, out, in));
    Tensor<double> x({b, in});
    rng.fill_normal(x.data);
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

inline CheckResult check_fn_softmax(const CheckOptions& opt) {
  return detail::run_trials("softmax", opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(3));
    const int c = 2 + static_cast<int>(rng.uniform_int(6));
    Tensor<double> z({b, c});
    rng.fill_normal(z.data);
    Tensor<double> probe({b, c});
    rng.fill_normal(probe.data);

    const Tensor<double> p = softmax(z);
    Tensor<double> analytic = softmax_backward(probe, p);
    const auto f = [&]() { return (softmax(z).data * probe.data).sum(); };
    return detail::fd_compare(z, analytic, f, opt, true, max_err);
  });
}

// Multi-layer stack shaped like the feature extractors, checked end to end
// so cross-layer chaining (tape order, reshapes) is covered too. ReLU stays
// out of this stack: its zeros create tied pool windows where central
// differences are legitimately one-sided. The kink layers have their own
// checks at nudged inputs above.
inline CheckResult check_stack_extractor(const CheckOptions& opt) {
  return detail::run_trials("stack/extractor", opt, [&](Rng& rng, double& max_err) {
    Network<double> net("probe");
    net.layers.push_back(make_conv_layer<double>(rng, 3, 1, 5));
    net.layers.push_back(make_batchnorm_layer<double>(3));
    net.layers.push_back(MaxPool1dLayer{2, 2});
    net.layers.push_back(make_conv_layer<double>(rng, 4, 3, 3));
    net.layers.push_back(make_batchnorm_layer<double>(4));
    net.layers.push_back(MaxPool1dLayer{2, 2});
    net.layers.push_back(FlattenLayer{});
    net.layers.push_back(make_fc_layer<double>(rng, 5, 4 * 4));
    net.layers.push_back(SigmoidLayer{});
    Tensor<double> x = detail::random_signal(rng, 2, 1, 16);
    return detail::network_trial(net, x, Mode::train, rng, opt, max_err);
  });
}

namespace detail {

inline std::vector<int> random_labels(Rng& rng, int n, int classes) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int& l : out) l = rng.uniform_int(classes);
  return out;
}

inline FeatureBatch<double> random_batch(Rng& rng, int b, int d, int classes) {
  FeatureBatch<double> fb;
  fb.features = Tensor<double>({b, d});
  rng.fill_normal(fb.features.data);
  fb.labels = random_labels(rng, b, classes);
  return fb;
}

}  // namespace detail

// Structural similarity with the prototype table held fixed: checks the
// feature gradient and the prototype gradient as independent inputs.
inline CheckResult check_loss_structural(const CheckOptions& opt) {
  return detail::run_trials("loss/structural", opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(3));
    const int d = 4 + static_cast<int>(rng.uniform_int(4));
    const int classes = 2 + static_cast<int>(rng.uniform_int(2));
    // prototype source batch carrying every class at least once
    std::vector<int> psrc_labels = detail::random_labels(rng, classes + 2, classes);
    for (int c = 0; c < classes; ++c) psrc_labels[static_cast<size_t>(c)] = c;
    Tensor<double> psrc({static_cast<int>(psrc_labels.size()), d});
    rng.fill_normal(psrc.data);
    PrototypeTable<double> pt = feature_prototypes(psrc, psrc_labels);

    Tensor<double> feats({b, d});
    rng.fill_normal(feats.data);
    const std::vector<int> labels = detail::random_labels(rng, b, classes);

    const StructuralLossGrad<double> g = structural_similarity_loss(feats, labels, pt);
    const auto f = [&]() { return structural_similarity_loss(feats, labels, pt).value; };
    bool ok = detail::fd_compare(feats, g.dfeatures, f, opt, true, max_err);
    ok = detail::fd_compare(pt.protos, g.dprotos, f, opt, false, max_err) && ok;
    return ok;
  });
}

// Structural similarity with prototypes recomputed from the same features:
// checks the chained gradient through the per-label means.
inline CheckResult check_loss_structural_chained(const CheckOptions& opt) {
  return detail::run_trials("loss/structural+prototypes", opt, [&](Rng& rng, double& max_err) {
    const int d = 4 + static_cast<int>(rng.uniform_int(4));
    const int classes = 2 + static_cast<int>(rng.uniform_int(2));
    const int b = classes + 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> labels = detail::random_labels(rng, b, classes);
    for (int c = 0; c < classes; ++c) labels[static_cast<size_t>(c)] = c;
    Tensor<double> feats({b, d});
    rng.fill_normal(feats.data);

    const PrototypeTable<double> pt = feature_prototypes(feats, labels);
    const StructuralLossGrad<double> g = structural_similarity_loss(feats, labels, pt);
    Tensor<double> total = g.dfeatures;
    prototype_backward(pt, g.dprotos, labels, total);

    const auto f = [&]() {
      const PrototypeTable<double> p2 = feature_prototypes(feats, labels);
      return structural_similarity_loss(feats, labels, p2).value;
    };
    return detail::fd_compare(feats, total, f, opt, true, max_err);
  });
}

inline CheckResult check_loss_cross_entropy(const CheckOptions& opt) {
  return detail::run_trials("loss/cross_entropy", opt, [&](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(4));
    const int classes = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<int> space(static_cast<size_t>(classes));
    for (int c = 0; c < classes; ++c) space[static_cast<size_t>(c)] = c;
    Tensor<double> logits({b, classes});
    rng.fill_normal(logits.data);
    const std::vector<int> labels = detail::random_labels(rng, b, classes);
    const LossGrad<double> g = cross_entropy_loss(logits, labels, space);
    const auto f = [&]() { return cross_entropy_loss(logits, labels, space).value; };
    return detail::fd_compare(logits, g.grad, f, opt, true, max_err);
  });
}

inline CheckResult check_loss_adversarial(const CheckOptions& opt) {
  return detail::run_trials("loss/adversarial", opt, [&](Rng& rng, double& max_err) {
    const int br = 2 + static_cast<int>(rng.uniform_int(3));
    const int bf = 2 + static_cast<int>(rng.uniform_int(3));
    Tensor<double> real({br, 1}), fake({bf, 1});
    rng.fill_uniform(real.data, 0.05, 0.95);
    rng.fill_uniform(fake.data, 0.05, 0.95);
    const AdversarialLosses<double> g = adversarial_losses(real, fake);

    const auto f_ident = [&]() { return adversarial_losses(real, fake).identifier_loss; };
    const auto f_gen = [&]() { return adversarial_losses(real, fake).generator_loss; };
    bool ok = detail::fd_compare(real, g.d_real_identifier, f_ident, opt, true, max_err);
    ok = detail::fd_compare(fake, g.d_fake_identifier, f_ident, opt, false, max_err) && ok;
    ok = detail::fd_compare(fake, g.d_fake_generator, f_gen, opt, false, max_err) && ok;
    return ok;
  });
}

inline CheckResult check_loss_alignment(const CheckOptions& opt) {
  return detail::run_trials("loss/same_label_alignment", opt, [&](Rng& rng, double& max_err) {
    const int d = 3 + static_cast<int>(rng.uniform_int(5));
    FeatureBatch<double> a = detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(3)), d, 3);
    FeatureBatch<double> b = detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(3)), d, 3);
    const PairLossGrad<double> g = same_label_alignment_loss(a.features, b.features, a.labels, b.labels);
    const auto f = [&]() { return same_label_alignment_loss(a.features, b.features, a.labels, b.labels).value; };
    bool ok = detail::fd_compare(a.features, g.grad_a, f, opt, true, max_err);
    ok = detail::fd_compare(b.features, g.grad_b, f, opt, false, max_err) && ok;
    return ok;
  });
}

inline CheckResult check_loss_separation(const CheckOptions& opt) {
  return detail::run_trials("loss/cross_label_separation", opt, [&](Rng& rng, double& max_err) {
    const int d = 3 + static_cast<int>(rng.uniform_int(5));
    FeatureBatch<double> a = detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(3)), d, 3);
    FeatureBatch<double> b = detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(3)), d, 3);
    const PairLossGrad<double> g = cross_label_separation_loss(a.features, b.features, a.labels, b.labels);
    const auto f = [&]() { return cross_label_separation_loss(a.features, b.features, a.labels, b.labels).value; };
    bool ok = detail::fd_compare(a.features, g.grad_a, f, opt, true, max_err);
    ok = detail::fd_compare(b.features, g.grad_b, f, opt, false, max_err) && ok;
    return ok;
  });
}

inline CheckResult check_loss_consistency(const CheckOptions& opt) {
  return detail::run_trials("loss/instance_consistency", opt, [&](Rng& rng, double& max_err) {
    const int d = 3 + static_cast<int>(rng.uniform_int(4));
    std::vector<FeatureBatch<double>> sif;
    const int sets = 2 + static_cast<int>(rng.uniform_int(2));
    for (int s = 0; s < sets; ++s) sif.push_back(detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(2)), d, 3));
    const SetLossGrad<double> g = instance_consistency_loss(sif);
    const auto f = [&]() { return instance_consistency_loss(sif).value; };
    bool ok = true, sab = true;
    for (size_t s = 0; s < sif.size(); ++s) {
      ok = detail::fd_compare(sif[s].features, g.grads[s], f, opt, sab, max_err) && ok;
      sab = false;
    }
    return ok;
  });
}

inline CheckResult check_loss_personalization(const CheckOptions& opt) {
  return detail::run_trials("loss/instance_personalization", opt, [&](Rng& rng, double& max_err) {
    const int d = 3 + static_cast<int>(rng.uniform_int(4));
    std::vector<FeatureBatch<double>> sif, ssf;
    for (int s = 0; s < 2; ++s) {
      sif.push_back(detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(2)), d, 3));
      ssf.push_back(detail::random_batch(rng, 2 + static_cast<int>(rng.uniform_int(2)), d, 3));
    }
    const TwoSetLossGrad<double> g = instance_personalization_loss(sif, ssf);
    const auto f = [&]() { return instance_personalization_loss(sif, ssf).value; };
    bool ok = true, sab = true;
    for (size_t s = 0; s < sif.size(); ++s) {
      ok = detail::fd_compare(sif[s].features, g.grads_a[s], f, opt, sab, max_err) && ok;
      sab = false;
    }
    for (size_t s = 0; s < ssf.size(); ++s)
      ok = detail::fd_compare(ssf[s].features, g.grads_b[s], f, opt, false, max_err) && ok;
    return ok;
  });
}

inline CheckResult check_loss_orthogonal(const CheckOptions& opt, OrthogonalForm form) {
  const std::string name =
      std::string("loss/orthogonal/") + (form == OrthogonalForm::squared ? "squared" : "raw");
  return detail::run_trials(name, opt, [&, form](Rng& rng, double& max_err) {
    const int b = 2 + static_cast<int>(rng.uniform_int(3));
    const int d = 3 + static_cast<int>(rng.uniform_int(5));
    Tensor<double> fi({b, d}), fs({b, d});
    rng.fill_normal(fi.data);
    rng.fill_normal(fs.data);
    const PairLossGrad<double> g = orthogonal_loss(fi, fs, form);
    const auto f = [&]() { return orthogonal_loss(fi, fs, form).value; };
    bool ok = detail::fd_compare(fi, g.grad_a, f, opt, true, max_err);
    ok = detail::fd_compare(fs, g.grad_b, f, opt, false, max_err) && ok;
    return ok;
  });
}

inline std::vector<CheckResult> run_loss_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(check_loss_structural(opt));
  out.push_back(check_loss_structural_chained(opt));
  out.push_back(check_loss_cross_entropy(opt));
  out.push_back(check_loss_adversarial(opt));
  out.push_back(check_loss_alignment(opt));
  out.push_back(check_loss_separation(opt));
  out.push_back(check_loss_consistency(opt));
  out.push_back(check_loss_personalization(opt));
  out.push_back(check_loss_orthogonal(opt, OrthogonalForm::squared));
  out.push_back(check_loss_orthogonal(opt, OrthogonalForm::raw));
  return out;
}

inline std::vector<CheckResult> run_layer_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(check_layer_conv(opt, Padding::same, 1));
  out.push_back(check_layer_conv(opt, Padding::none, 1));
  out.push_back(check_layer_conv(opt, Padding::same, 2));
  out.push_back(check_layer_batchnorm(opt, Mode::train));
  out.push_back(check_layer_batchnorm(opt, Mode::eval));
  out.push_back(check_layer_maxpool(opt));
  out.push_back(check_layer_relu(opt));
  out.push_back(check_layer_sigmoid(opt));
  out.push_back(check_layer_fc(opt));
  out.push_back(check_fn_softmax(opt));
  CheckOptions stack_opt = opt;
  stack_opt.trials = std::max(1, opt.trials / 10);
  out.push_back(check_stack_extractor(stack_opt));
  return out;
}

}  // namespace fedifl

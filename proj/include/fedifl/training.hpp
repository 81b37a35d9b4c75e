#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedifl/data.hpp"
#include "fedifl/losses.hpp"
#include "fedifl/models.hpp"
#include "fedifl/optim.hpp"
#include "fedifl/rng.hpp"

namespace fedifl {

// Phase schedule and step sizes. Defaults are the full-scale preset; the desk
// preset shrinks epochs and batch for fast CPU runs.
struct TrainHyper {
  int ipcl_epochs = 100;
  int ipfg_epochs = 150;
  int cct_epochs = 250;
  float lr1 = 0.008f;  // IPCL
  float lr2 = 0.02f;   // IPFG
  float lr3 = 0.01f;   // CCT
  int batch_size = 256;
  int fedavg_rounds = 10;
  OrthogonalForm ortho_form = OrthogonalForm::squared;
  float cct_clip = 10.0f;  // per-network gradient norm cap in CCT; <= 0 disables
  // The shared feature set is written with the local client's own generated
  // batch included alongside the downloaded ones; set false to exclude it.
  bool sif_includes_own = true;
};

// Loss terms that ablation runs can switch off. Everything else is unchanged.
struct AblationSwitches {
  bool ssim = true;
  bool fic = true;
  bool fip = true;
  bool ortho = true;
};

struct TraceRow {
  int client = 0;
  std::string phase;
  int epoch = 0;
  double loss_total = 0;
  std::vector<std::pair<std::string, double>> components;
};

// Raised when a training loss leaves the finite range; carries a snapshot of
// where the run stood so the failure is diagnosable from the message alone.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class S>
void require_finite_loss(S value, int client, const char* phase, int epoch, int batch,
                         const std::vector<std::pair<std::string, double>>& components) {
  if (std::isfinite(static_cast<double>(value))) return;
  std::string msg = std::string("non-finite ") + phase + " loss at client " + std::to_string(client) + ", epoch " +
                    std::to_string(epoch) + ", batch " + std::to_string(batch) + " (";
  for (size_t i = 0; i < components.size(); ++i)
    msg += components[i].first + "=" + std::to_string(components[i].second) + (i + 1 < components.size() ? ", " : ")");
  throw DivergenceError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IPCL: primary + deep extractor + local classifier against the structural
// similarity and local cross-entropy terms.

template <class S>
struct IpclBatchOut {
  S ssim = S(0);
  S ce = S(0);
};

template <class S>
IpclBatchOut<S> ipcl_batch(ClientModelBundle<S>& b, const Tensor<S>& x, const std::vector<int>& labels, bool use_ssim,
                           Mode mode, GradientSet<S>* g_primary, GradientSet<S>* g_deep, GradientSet<S>* g_cls) {
  Tape<S> tp, td, tc;
  const Tensor<S> pf = b.primary.forward(x, mode, &tp);
  const Tensor<S> df = b.deep.forward(pf, mode, &td);

  IpclBatchOut<S> out;
  Tensor<S> d_df(df.shape);
  if (use_ssim) {
    const PrototypeTable<S> pt = feature_prototypes(df, labels);
    const StructuralLossGrad<S> sl = structural_similarity_loss(df, labels, pt);
    out.ssim = sl.value;
    d_df.data += sl.dfeatures.data;
    prototype_backward(pt, sl.dprotos, labels, d_df);
  }
  const Tensor<S> logits = b.local_classifier.forward(df, mode, &tc);
  const LossGrad<S> ce = cross_entropy_loss(logits, labels, b.label_space);
  out.ce = ce.value;
  d_df.data += b.local_classifier.backward(tc, ce.grad, g_cls).data;

  const Tensor<S> d_pf = b.deep.backward(td, d_df, g_deep);
  b.primary.backward(tp, d_pf, g_primary);
  return out;
}

template <class S>
void run_ipcl(ClientModelBundle<S>& b, const ClientDataset& ds, const TrainHyper& h, const AblationSwitches& ab,
              uint64_t seed, std::vector<TraceRow>& trace) {
  if (h.ipcl_epochs == 0) return;
  set_frozen(b, {NetId::primary, NetId::deep, NetId::local_classifier}, false);
  BatchStream stream(ds, h.batch_size, hash_seed({seed, 1}));
  const int steps = stream.batches_per_epoch();
  for (int epoch = 0; epoch < h.ipcl_epochs; ++epoch) {
    double sum_ssim = 0, sum_ce = 0;
    for (int k = 0; k < steps; ++k) {
      const Batch bt = stream.next();
      const Tensor<S> x = bt.signals.template cast<S>();
      GradientSet<S> gp, gd, gc;
      const IpclBatchOut<S> r = ipcl_batch(b, x, bt.labels, ab.ssim, Mode::train, &gp, &gd, &gc);
      const S total = ipcl_loss(r.ssim, r.ce);
      detail::require_finite_loss(total, ds.client_id, "ipcl", epoch, k,
                                  {{"ssim", double(r.ssim)}, {"ce1", double(r.ce)}});
      sgd_step(b.primary, gp, static_cast<S>(h.lr1));
      sgd_step(b.deep, gd, static_cast<S>(h.lr1));
      sgd_step(b.local_classifier, gc, static_cast<S>(h.lr1));
      sum_ssim += double(r.ssim);
      sum_ce += double(r.ce);
    }
    const double m_ssim = sum_ssim / steps, m_ce = sum_ce / steps;
    trace.push_back({ds.client_id, "ipcl", epoch, m_ssim + m_ce, {{"ssim", m_ssim}, {"ce1", m_ce}}});
  }
}

// ---------------------------------------------------------------------------
// IPFG: with the extractors and local classifier frozen, alternate identifier
// and generator steps so generated primary features become indistinguishable
// from real ones while staying classifiable.

template <class S>
Tensor<S> make_generator_input(const std::vector<int>& labels, const std::vector<int>& space,
                               const ArchitectureConfig& a, Rng& rng) {
  const int rows = static_cast<int>(labels.size());
  Tensor<S> gin({rows, a.noise_dim + static_cast<int>(space.size())});
  for (int r = 0; r < rows; ++r) {
    const Eigen::Index base = static_cast<Eigen::Index>(r) * gin.dim(1);
    for (int j = 0; j < a.noise_dim; ++j) gin.data[base + j] = static_cast<S>(rng.normal());
    gin.data[base + a.noise_dim + index_of_label(space, labels[static_cast<size_t>(r)])] = S(1);
  }
  return gin;
}

template <class S>
void run_ipfg(ClientModelBundle<S>& b, const ClientDataset& ds, const TrainHyper& h, uint64_t seed,
              std::vector<TraceRow>& trace) {
  if (h.ipfg_epochs == 0) return;
  set_frozen(b, {NetId::primary, NetId::deep, NetId::local_classifier}, true);
  set_frozen(b, {NetId::generator, NetId::identifier}, false);
  BatchStream stream(ds, h.batch_size, hash_seed({seed, 1}));
  Rng rng(hash_seed({seed, 2}));
  const int steps = stream.batches_per_epoch();
  const int classes = static_cast<int>(b.label_space.size());

  for (int epoch = 0; epoch < h.ipfg_epochs; ++epoch) {
    double sum_i = 0, sum_g = 0, sum_ce = 0, sum_fake_score = 0;
    for (int k = 0; k < steps; ++k) {
      const Batch bt = stream.next();
      const Tensor<S> x = bt.signals.template cast<S>();
      const Tensor<S> pf = b.primary.forward(x, Mode::eval);

      std::vector<int> ylab(static_cast<size_t>(h.batch_size));
      for (auto& y : ylab) y = b.label_space[static_cast<size_t>(rng.uniform_int(classes))];
      const Tensor<S> gin = make_generator_input<S>(ylab, b.label_space, b.arch, rng);
      Tape<S> t_gen;
      const Tensor<S> fake_pf = b.generator.forward(gin, Mode::train, &t_gen);

      // Identifier step: tell real primary features from generated ones.
      Tape<S> t_real, t_fake;
      const Tensor<S> real_scores = b.identifier.forward(pf, Mode::train, &t_real);
      const Tensor<S> fake_scores = b.identifier.forward(fake_pf, Mode::train, &t_fake);
      const AdversarialLosses<S> adv_i = adversarial_losses(real_scores, fake_scores);
      GradientSet<S> gi;
      b.identifier.backward(t_real, adv_i.d_real_identifier, &gi);
      b.identifier.backward(t_fake, adv_i.d_fake_identifier, &gi);
      sgd_step(b.identifier, gi, static_cast<S>(h.lr2));

      // Generator step against the updated identifier, plus the frozen
      // classifier chain keeping generated features label-faithful.
      Tape<S> t_fake2;
      const Tensor<S> fake_scores2 = b.identifier.forward(fake_pf, Mode::train, &t_fake2);
      const AdversarialLosses<S> adv_g = adversarial_losses(real_scores, fake_scores2);
      Tensor<S> d_fake = b.identifier.backward(t_fake2, adv_g.d_fake_generator, nullptr);
      Tape<S> t_deep, t_cls;
      const Tensor<S> dfh = b.deep.forward(fake_pf, Mode::eval, &t_deep);
      const Tensor<S> logits = b.local_classifier.forward(dfh, Mode::eval, &t_cls);
      const LossGrad<S> ce2 = cross_entropy_loss(logits, ylab, b.label_space);
      const Tensor<S> d_dfh = b.local_classifier.backward(t_cls, ce2.grad, nullptr);
      d_fake.data += b.deep.backward(t_deep, d_dfh, nullptr).data;
      GradientSet<S> gg;
      b.generator.backward(t_gen, d_fake, &gg);
      sgd_step(b.generator, gg, static_cast<S>(h.lr2));

      const S total = adv_i.identifier_loss + ipfg_loss(adv_g.generator_loss, ce2.value);
      detail::require_finite_loss(total, ds.client_id, "ipfg", epoch, k,
                                  {{"adv_i", double(adv_i.identifier_loss)},
                                   {"adv_g", double(adv_g.generator_loss)},
                                   {"ce2", double(ce2.value)}});
      sum_i += double(adv_i.identifier_loss);
      sum_g += double(adv_g.generator_loss);
      sum_ce += double(ce2.value);
      sum_fake_score += double(fake_scores2.data.mean());
    }
    trace.push_back({ds.client_id,
                     "ipfg",
                     epoch,
                     (sum_i + sum_g + sum_ce) / steps,
                     {{"adv_i", sum_i / steps},
                      {"adv_g", sum_g / steps},
                      {"ce2", sum_ce / steps},
                      {"i_fake_mean", sum_fake_score / steps}}});
  }
  set_frozen(b, {NetId::primary, NetId::deep, NetId::local_classifier}, false);
}

// ---------------------------------------------------------------------------
// CCT: disentangle invariant and specific features against the local batch
// plus features generated on behalf of every other source client.

template <class S>
struct GeneratedBatch {
  Tensor<S> gpf;  // (rows, c3, primary_length)
  std::vector<int> labels;
  int origin = -1;
};

template <class S>
GeneratedBatch<S> generate_features(Network<S>& generator, const std::vector<int>& their_space,
                                    const ArchitectureConfig& arch, const std::vector<int>& rows_per_label,
                                    int origin, Rng& rng) {
  if (rows_per_label.size() != their_space.size())
    throw std::invalid_argument("generate_features: one row count per label required");
  GeneratedBatch<S> out;
  out.origin = origin;
  for (size_t i = 0; i < their_space.size(); ++i)
    for (int r = 0; r < rows_per_label[i]; ++r) out.labels.push_back(their_space[i]);
  const Tensor<S> gin = make_generator_input<S>(out.labels, their_space, arch, rng);
  out.gpf = generator.forward(gin, Mode::eval);
  return out;
}

template <class S>
GeneratedBatch<S> generate_features(Network<S>& generator, const std::vector<int>& their_space,
                                    const ArchitectureConfig& arch, int rows_per_label, int origin, Rng& rng) {
  return generate_features(generator, their_space, arch,
                           std::vector<int>(their_space.size(), rows_per_label), origin, rng);
}

template <class S>
struct CctBatchOut {
  S fic = S(0);
  S fip = S(0);
  S ortho = S(0);
  S ce = S(0);
  Tensor<S> d_pf;  // gradient into the local primary features

  S total() const { return cct_loss(fic, fip, ortho, ce); }
};

// One CCT objective evaluation with gradients. Takes primary features rather
// than raw signals so callers decide whether the primary extractor trains;
// generated batches only drive the disentanglers (their upstream generators
// are read-only).
template <class S>
CctBatchOut<S> cct_batch(ClientModelBundle<S>& b, const Tensor<S>& pf, const std::vector<int>& labels,
                         const std::vector<GeneratedBatch<S>>& gen, const AblationSwitches& ab,
                         OrthogonalForm ortho_form, Mode mode, GradientSet<S>* g_di, GradientSet<S>* g_ds,
                         GradientSet<S>* g_cls) {
  const size_t nb = 1 + gen.size();
  std::vector<Tape<S>> tdi(nb), tds(nb);
  std::vector<FeatureBatch<S>> sif(nb), ssf(nb);
  sif[0] = {b.deep_invariant.forward(pf, mode, &tdi[0]), labels, -1, false};
  ssf[0] = {b.deep_specific.forward(pf, mode, &tds[0]), labels, -1, false};
  for (size_t j = 0; j < gen.size(); ++j) {
    sif[1 + j] = {b.deep_invariant.forward(gen[j].gpf, mode, &tdi[1 + j]), gen[j].labels, gen[j].origin, true};
    ssf[1 + j] = {b.deep_specific.forward(gen[j].gpf, mode, &tds[1 + j]), gen[j].labels, gen[j].origin, true};
  }

  std::vector<Tensor<S>> d_if, d_sf;
  for (size_t i = 0; i < nb; ++i) {
    d_if.emplace_back(sif[i].features.shape);
    d_sf.emplace_back(ssf[i].features.shape);
  }

  CctBatchOut<S> out;
  if (ab.fic && nb >= 2) {
    const SetLossGrad<S> r = instance_consistency_loss(sif);
    out.fic = r.value;
    for (size_t i = 0; i < nb; ++i) d_if[i].data += r.grads[i].data;
  }
  if (ab.fip) {
    const TwoSetLossGrad<S> r = instance_personalization_loss(sif, ssf);
    out.fip = r.value;
    for (size_t i = 0; i < nb; ++i) {
      d_if[i].data += r.grads_a[i].data;
      d_sf[i].data += r.grads_b[i].data;
    }
  }
  if (ab.ortho) {
    for (size_t i = 0; i < nb; ++i) {
      const PairLossGrad<S> r = orthogonal_loss(sif[i].features, ssf[i].features, ortho_form);
      out.ortho += r.value;
      d_if[i].data += r.grad_a.data;
      d_sf[i].data += r.grad_b.data;
    }
  }

  // Global-space cross entropy over every invariant feature row.
  int total_rows = 0;
  for (const auto& fb : sif) total_rows += fb.features.dim(0);
  Tensor<S> all_if({total_rows, sif[0].features.dim(1)});
  std::vector<int> all_labels;
  all_labels.reserve(static_cast<size_t>(total_rows));
  Eigen::Index offset = 0;
  for (const auto& fb : sif) {
    all_if.data.segment(offset, fb.features.size()) = fb.features.data;
    offset += fb.features.size();
    all_labels.insert(all_labels.end(), fb.labels.begin(), fb.labels.end());
  }
  Tape<S> t_cls;
  const Tensor<S> logits = b.global_classifier.forward(all_if, mode, &t_cls);
  const LossGrad<S> ce = cross_entropy_loss(logits, all_labels, b.global_space);
  out.ce = ce.value;
  const Tensor<S> d_all = b.global_classifier.backward(t_cls, ce.grad, g_cls);
  offset = 0;
  for (size_t i = 0; i < nb; ++i) {
    d_if[i].data += d_all.data.segment(offset, d_if[i].size());
    offset += d_if[i].size();
  }

  out.d_pf = Tensor<S>(pf.shape);
  for (size_t i = 0; i < nb; ++i) {
    const Tensor<S> dp = b.deep_invariant.backward(tdi[i], d_if[i], g_di);
    const Tensor<S> dq = b.deep_specific.backward(tds[i], d_sf[i], g_ds);
    if (i == 0) out.d_pf.data = dp.data + dq.data;
  }
  return out;
}

// Library handed to run_cct: one reconstructed generator per other client.
template <class S>
struct LibraryGenerator {
  int client_id = -1;
  std::vector<int> label_space;
  Network<S> net;
};

template <class S>
void run_cct(ClientModelBundle<S>& b, const ClientDataset& ds, std::vector<LibraryGenerator<S>>& library,
             const TrainHyper& h, const AblationSwitches& ab, uint64_t seed, std::vector<TraceRow>& trace) {
  if (h.cct_epochs == 0) return;
  set_frozen(b, {NetId::primary, NetId::deep_invariant, NetId::deep_specific, NetId::global_classifier}, false);
  set_frozen(b, {NetId::generator, NetId::identifier, NetId::deep, NetId::local_classifier}, true);
  for (auto& lg : library) lg.net.frozen = true;

  // Feature sources in client-id order: the downloaded generators, plus the
  // client's own unless configured out.
  struct Source {
    Network<S>* net;
    const std::vector<int>* space;
    int origin;
  };
  std::vector<Source> sources;
  if (h.sif_includes_own) sources.push_back({&b.generator, &b.label_space, ds.client_id});
  for (auto& lg : library) sources.push_back({&lg.net, &lg.label_space, lg.client_id});
  std::sort(sources.begin(), sources.end(), [](const Source& a, const Source& c) { return a.origin < c.origin; });

  // Uniform allocation: the same generated row count for every label the
  // fleet covers, split evenly across the generators providing it. Two things
  // depend on this. Per-label uniformity keeps the well-covered labels from
  // dominating the classifier's rows (single-provider labels get as many rows
  // as universally shared ones), and the allocation is a pure function of
  // (label spaces, batch size) with no dependence on the local dataset, so
  // clients stepping from a common seed see identical generated rows and
  // their trajectories stay mutually averageable.
  std::map<int, int> providers;
  for (const auto& src : sources)
    for (int lbl : *src.space) providers[lbl]++;
  const int rows_per_label =
      std::max(1, 3 * h.batch_size / std::max(1, static_cast<int>(providers.size())));
  std::vector<std::vector<int>> alloc(sources.size());
  std::vector<int> alloc_total(sources.size(), 0);
  for (size_t si = 0; si < sources.size(); ++si)
    for (int lbl : *sources[si].space) {
      const int rows = (rows_per_label + providers.at(lbl) - 1) / providers.at(lbl);
      alloc[si].push_back(rows);
      alloc_total[si] += rows;
    }

  BatchStream stream(ds, h.batch_size, hash_seed({seed, 1}));
  Rng rng(hash_seed({seed, 2}));
  const int steps = stream.batches_per_epoch();

  for (int epoch = 0; epoch < h.cct_epochs; ++epoch) {
    double s_fic = 0, s_fip = 0, s_o = 0, s_ce = 0;
    for (int k = 0; k < steps; ++k) {
      const Batch bt = stream.next();
      const Tensor<S> x = bt.signals.template cast<S>();
      Tape<S> tp;
      const Tensor<S> pf = b.primary.forward(x, Mode::train, &tp);

      std::vector<GeneratedBatch<S>> gen;
      gen.reserve(sources.size());
      for (size_t si = 0; si < sources.size(); ++si) {
        if (alloc_total[si] == 0) continue;
        gen.push_back(
            generate_features(*sources[si].net, *sources[si].space, b.arch, alloc[si], sources[si].origin, rng));
      }

      GradientSet<S> gp, gdi, gds, gc;
      const CctBatchOut<S> r =
          cct_batch(b, pf, bt.labels, gen, ab, h.ortho_form, Mode::train, &gdi, &gds, &gc);
      detail::require_finite_loss(r.total(), ds.client_id, "cct", epoch, k,
                                  {{"fic", double(r.fic)},
                                   {"fip", double(r.fip)},
                                   {"o", double(r.ortho)},
                                   {"ce3", double(r.ce)}});
      b.primary.backward(tp, r.d_pf, &gp);
      // The orthogonal term is quartic in feature norms and starts on
      // identically initialized DI/DS, so its first steps are orders of
      // magnitude stiffer than the rest; bounding the step keeps one batch
      // from destroying the extractors while leaving settled phases alone.
      const S clip = static_cast<S>(h.cct_clip);
      clip_gradient_norm(gp, clip);
      clip_gradient_norm(gdi, clip);
      clip_gradient_norm(gds, clip);
      clip_gradient_norm(gc, clip);
      sgd_step(b.primary, gp, static_cast<S>(h.lr3));
      sgd_step(b.deep_invariant, gdi, static_cast<S>(h.lr3));
      sgd_step(b.deep_specific, gds, static_cast<S>(h.lr3));
      sgd_step(b.global_classifier, gc, static_cast<S>(h.lr3));
      s_fic += double(r.fic);
      s_fip += double(r.fip);
      s_o += double(r.ortho);
      s_ce += double(r.ce);
    }
    trace.push_back({ds.client_id,
                     "cct",
                     epoch,
                     (s_fic + s_fip + s_o + s_ce) / steps,
                     {{"fic", s_fic / steps}, {"fip", s_fip / steps}, {"o", s_o / steps}, {"ce3", s_ce / steps}}});
  }
}

// ---------------------------------------------------------------------------
// Plain federated-averaging local step: extractors plus a global-space
// classifier trained with cross entropy only.

template <class S>
void fedavg_local_train(ClientModelBundle<S>& b, const ClientDataset& ds, int epochs, const TrainHyper& h,
                        uint64_t seed, int round, std::vector<TraceRow>& trace) {
  if (epochs == 0) return;
  set_frozen(b, {NetId::primary, NetId::deep, NetId::global_classifier}, false);
  BatchStream stream(ds, h.batch_size, hash_seed({seed, static_cast<uint64_t>(round), 1}));
  const int steps = stream.batches_per_epoch();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double sum_ce = 0;
    for (int k = 0; k < steps; ++k) {
      const Batch bt = stream.next();
      const Tensor<S> x = bt.signals.template cast<S>();
      Tape<S> tp, td, tc;
      const Tensor<S> pf = b.primary.forward(x, Mode::train, &tp);
      const Tensor<S> df = b.deep.forward(pf, Mode::train, &td);
      const Tensor<S> logits = b.global_classifier.forward(df, Mode::train, &tc);
      const LossGrad<S> ce = cross_entropy_loss(logits, bt.labels, b.global_space);
      detail::require_finite_loss(ce.value, ds.client_id, "fedavg", epoch, k, {{"ce", double(ce.value)}});
      GradientSet<S> gp, gd, gc;
      const Tensor<S> d_df = b.global_classifier.backward(tc, ce.grad, &gc);
      const Tensor<S> d_pf = b.deep.backward(td, d_df, &gd);
      b.primary.backward(tp, d_pf, &gp);
      sgd_step(b.primary, gp, static_cast<S>(h.lr1));
      sgd_step(b.deep, gd, static_cast<S>(h.lr1));
      sgd_step(b.global_classifier, gc, static_cast<S>(h.lr1));
      sum_ce += double(ce.value);
    }
    trace.push_back({ds.client_id,
                     "fedavg",
                     round * epochs + epoch,
                     sum_ce / steps,
                     {{"ce", sum_ce / steps}}});
  }
}

// ---------------------------------------------------------------------------
// Evaluation helpers. These read source-client data through the counting
// accessors; target-client data stays untouched until inference.

template <class S>
std::vector<int> predict_local(ClientModelBundle<S>& b, const Tensor<S>& x) {
  const Tensor<S> df = b.deep.forward(b.primary.forward(x, Mode::eval), Mode::eval);
  const Tensor<S> logits = b.local_classifier.forward(df, Mode::eval);
  std::vector<int> out;
  for (int r = 0; r < logits.dim(0); ++r) {
    Eigen::Index best = 0;
    logits.data.segment(static_cast<Eigen::Index>(r) * logits.dim(1), logits.dim(1)).maxCoeff(&best);
    out.push_back(b.label_space[static_cast<size_t>(best)]);
  }
  return out;
}

template <class S>
Tensor<S> stack_signals(const std::vector<SignalSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack_signals: empty sample set");
  const int C = samples[0].signal.dim(0), L = samples[0].signal.dim(1);
  Tensor<S> x({static_cast<int>(samples.size()), C, L});
  for (size_t i = 0; i < samples.size(); ++i)
    x.data.segment(static_cast<Eigen::Index>(i) * C * L, static_cast<Eigen::Index>(C) * L) =
        samples[i].signal.data.template cast<S>();
  return x;
}

// Share of a client's training samples its global pipeline labels right:
// the quantity cross-client training optimizes.
template <class S>
double global_train_accuracy(ClientModelBundle<S>& b, const ClientDataset& ds) {
  int correct = 0, total = 0;
  const size_t chunk = 256;
  for (size_t at = 0; at < ds.train_size(); at += chunk) {
    const size_t n = std::min(chunk, ds.train_size() - at);
    std::vector<SignalSample> part;
    part.reserve(n);
    for (size_t i = 0; i < n; ++i) part.push_back(ds.train(at + i));
    const Tensor<S> f = b.deep_invariant.forward(b.primary.forward(stack_signals<S>(part), Mode::eval), Mode::eval);
    const Tensor<S> logits = b.global_classifier.forward(f, Mode::eval);
    for (size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      logits.data.segment(static_cast<Eigen::Index>(i) * logits.dim(1), logits.dim(1)).maxCoeff(&best);
      correct += b.global_space[static_cast<size_t>(best)] == part[i].label;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

// Share of a client's training samples its own local pipeline labels right.
template <class S>
double local_train_accuracy(ClientModelBundle<S>& b, const ClientDataset& ds) {
  int correct = 0, total = 0;
  const size_t chunk = 256;
  for (size_t at = 0; at < ds.train_size(); at += chunk) {
    const size_t n = std::min(chunk, ds.train_size() - at);
    std::vector<SignalSample> part;
    part.reserve(n);
    for (size_t i = 0; i < n; ++i) part.push_back(ds.train(at + i));
    const std::vector<int> pred = predict_local(b, stack_signals<S>(part));
    for (size_t i = 0; i < n; ++i) {
      correct += pred[i] == part[i].label;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

// Accuracy of the frozen local pipeline on freshly generated features: how
// label-faithful the generator's output is.
template <class S>
double generated_feature_accuracy(ClientModelBundle<S>& b, int rows_per_label, Rng& rng) {
  GeneratedBatch<S> gb = generate_features(b.generator, b.label_space, b.arch, rows_per_label, -1, rng);
  const Tensor<S> df = b.deep.forward(gb.gpf, Mode::eval);
  const Tensor<S> logits = b.local_classifier.forward(df, Mode::eval);
  int correct = 0;
  for (int r = 0; r < logits.dim(0); ++r) {
    Eigen::Index best = 0;
    logits.data.segment(static_cast<Eigen::Index>(r) * logits.dim(1), logits.dim(1)).maxCoeff(&best);
    correct += b.label_space[static_cast<size_t>(best)] == gb.labels[static_cast<size_t>(r)];
  }
  return static_cast<double>(correct) / logits.dim(0);
}

}  // namespace fedifl

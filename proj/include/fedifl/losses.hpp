#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedifl/models.hpp"
#include "fedifl/tensor.hpp"

namespace fedifl {

template <class S>
struct LossGrad {
  S value = S(0);
  Tensor<S> grad;
};

template <class S>
struct PairLossGrad {
  S value = S(0);
  Tensor<S> grad_a, grad_b;
};

// A batch of d-dimensional features with labels from the global space,
// tagged with where it came from.
template <class S>
struct FeatureBatch {
  Tensor<S> features;        // (B, d)
  std::vector<int> labels;   // size B
  int origin_client = -1;
  bool generated = false;
};

// ---------------------------------------------------------------------------
// Cosine similarity and the pairwise similarity matrix

// Forward result plus everything the backward pass needs.
template <class S>
struct SimilarityMatrix {
  Tensor<S> si;     // (Ba, Bb)
  Tensor<S> a, b;   // inputs, copied
  ArrayX<S> na, nb; // row norms
  Tensor<S> denom;  // na_i * nb_j + eps
};

template <class S>
SimilarityMatrix<S> similarity_matrix(const Tensor<S>& a, const Tensor<S>& b, S eps = S(1e-8)) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("similarity_matrix: need (Ba,d) and (Bb,d), got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  const int Ba = a.dim(0), Bb = b.dim(0);
  SimilarityMatrix<S> sm;
  sm.a = a;
  sm.b = b;
  sm.na = a.matrix().rowwise().norm().array();
  sm.nb = b.matrix().rowwise().norm().array();
  sm.denom = Tensor<S>({Ba, Bb});
  sm.denom.matrix() = (sm.na.matrix() * sm.nb.matrix().transpose()).array() + eps;
  sm.si = Tensor<S>({Ba, Bb});
  sm.si.matrix() = a.matrix() * b.matrix().transpose();
  sm.si.data /= sm.denom.data;
  return sm;
}

// Accumulates d(loss)/dA and d(loss)/dB given d(loss)/dSI.
template <class S>
void similarity_matrix_backward(const SimilarityMatrix<S>& sm, const Tensor<S>& dsi, Tensor<S>& da, Tensor<S>& db) {
  require_same_shape(dsi, sm.si, "similarity_matrix_backward");
  const S tiny = S(1e-12);
  const int Ba = sm.a.dim(0), Bb = sm.b.dim(0);

  Tensor<S> m({Ba, Bb});
  m.data = dsi.data / sm.denom.data;
  Tensor<S> t({Ba, Bb});
  t.data = dsi.data * sm.si.data / sm.denom.data;

  const ArrayX<S> na_c = sm.na.max(tiny);
  const ArrayX<S> nb_c = sm.nb.max(tiny);
  // da_i = sum_j m_ij b_j - (sum_j t_ij nb_j) a_i / na_i
  const ArrayX<S> r = (t.matrix() * sm.nb.matrix()).array() / na_c;
  da.matrix().noalias() += m.matrix() * sm.b.matrix();
  da.matrix() -= r.matrix().asDiagonal() * sm.a.matrix();
  // db_j = sum_i m_ij a_i - (sum_i t_ij na_i) b_j / nb_j
  const ArrayX<S> c = (t.matrix().transpose() * sm.na.matrix()).array() / nb_c;
  db.matrix().noalias() += m.matrix().transpose() * sm.a.matrix();
  db.matrix() -= c.matrix().asDiagonal() * sm.b.matrix();
}

template <class S>
S cosine_similarity(const Tensor<S>& f1, const Tensor<S>& f2, S eps = S(1e-8)) {
  if (f1.size() != f2.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  const S dot = (f1.data * f2.data).sum();
  const S n1 = std::sqrt((f1.data * f1.data).sum());
  const S n2 = std::sqrt((f2.data * f2.data).sum());
  return dot / (n1 * n2 + eps);
}

// 1 where labels match, 0 elsewhere.
template <class S>
Tensor<S> label_match_matrix(const std::vector<int>& ya, const std::vector<int>& yb) {
  Tensor<S> m({static_cast<int>(ya.size()), static_cast<int>(yb.size())});
  Eigen::Index k = 0;
  for (int a : ya)
    for (int b : yb) m.data[k++] = a == b ? S(1) : S(0);
  return m;
}

// ---------------------------------------------------------------------------
// Masked quadratic penalties on a similarity matrix. Values are plain sums
// over all pairs; each returns d(value)/dSI for chaining.

// Same-label pairs should align: sum_ij match * (1 - si)^2.
template <class S>
LossGrad<S> alignment_penalty(const Tensor<S>& si, const Tensor<S>& match) {
  require_same_shape(si, match, "alignment_penalty");
  LossGrad<S> out;
  out.value = (match.data * (S(1) - si.data).square()).sum();
  out.grad = Tensor<S>(si.shape, S(-2) * match.data * (S(1) - si.data));
  return out;
}

// Different-label pairs should read zero similarity: sum_ij (1 - match) * si^2.
template <class S>
LossGrad<S> separation_penalty(const Tensor<S>& si, const Tensor<S>& match) {
  require_same_shape(si, match, "separation_penalty");
  LossGrad<S> out;
  out.value = ((S(1) - match.data) * si.data.square()).sum();
  out.grad = Tensor<S>(si.shape, S(2) * (S(1) - match.data) * si.data);
  return out;
}

// Same-label pairs should read zero similarity: sum_ij match * si^2.
template <class S>
LossGrad<S> projection_penalty(const Tensor<S>& si, const Tensor<S>& match) {
  require_same_shape(si, match, "projection_penalty");
  LossGrad<S> out;
  out.value = (match.data * si.data.square()).sum();
  out.grad = Tensor<S>(si.shape, S(2) * match.data * si.data);
  return out;
}

namespace detail {

template <class S>
void check_batch(const Tensor<S>& f, const std::vector<int>& labels, const std::string& who) {
  if (f.rank() != 2) throw ShapeError(who + ": features must be (B,d), got " + shape_str(f.shape));
  if (static_cast<size_t>(f.dim(0)) != labels.size())
    throw ShapeError(who + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(f.dim(0)) +
                     " feature rows");
}

}  // namespace detail

// Cross-client similarity penalty between two labeled batches.
template <class S>
PairLossGrad<S> same_label_alignment_loss(const Tensor<S>& a, const Tensor<S>& b, const std::vector<int>& ya,
                                          const std::vector<int>& yb) {
  detail::check_batch(a, ya, "same_label_alignment_loss");
  detail::check_batch(b, yb, "same_label_alignment_loss");
  const SimilarityMatrix<S> sm = similarity_matrix(a, b);
  const LossGrad<S> pen = alignment_penalty(sm.si, label_match_matrix<S>(ya, yb));
  PairLossGrad<S> out{pen.value, Tensor<S>(a.shape), Tensor<S>(b.shape)};
  similarity_matrix_backward(sm, pen.grad, out.grad_a, out.grad_b);
  return out;
}

template <class S>
PairLossGrad<S> cross_label_separation_loss(const Tensor<S>& a, const Tensor<S>& b, const std::vector<int>& ya,
                                            const std::vector<int>& yb) {
  detail::check_batch(a, ya, "cross_label_separation_loss");
  detail::check_batch(b, yb, "cross_label_separation_loss");
  const SimilarityMatrix<S> sm = similarity_matrix(a, b);
  const LossGrad<S> pen = separation_penalty(sm.si, label_match_matrix<S>(ya, yb));
  PairLossGrad<S> out{pen.value, Tensor<S>(a.shape), Tensor<S>(b.shape)};
  similarity_matrix_backward(sm, pen.grad, out.grad_a, out.grad_b);
  return out;
}

// ---------------------------------------------------------------------------
// Set-level losses over invariant/specific feature collections

template <class S>
struct SetLossGrad {
  S value = S(0);
  std::vector<Tensor<S>> grads;
};

// Sum of alignment + separation penalties over every ordered pair of
// distinct batches in the set.
template <class S>
SetLossGrad<S> instance_consistency_loss(const std::vector<FeatureBatch<S>>& sif) {
  if (sif.size() < 2) throw std::invalid_argument("instance_consistency_loss: need at least two feature batches");
  SetLossGrad<S> out;
  out.grads.reserve(sif.size());
  for (const auto& fb : sif) out.grads.emplace_back(fb.features.shape);
  for (size_t i = 0; i < sif.size(); ++i)
    for (size_t j = 0; j < sif.size(); ++j) {
      if (i == j) continue;
      const SimilarityMatrix<S> sm = similarity_matrix(sif[i].features, sif[j].features);
      const Tensor<S> match = label_match_matrix<S>(sif[i].labels, sif[j].labels);
      const LossGrad<S> ali = alignment_penalty(sm.si, match);
      const LossGrad<S> sep = separation_penalty(sm.si, match);
      out.value += ali.value + sep.value;
      const Tensor<S> dsi(sm.si.shape, ali.grad.data + sep.grad.data);
      similarity_matrix_backward(sm, dsi, out.grads[i], out.grads[j]);
    }
  return out;
}

template <class S>
struct TwoSetLossGrad {
  S value = S(0);
  std::vector<Tensor<S>> grads_a, grads_b;
};

// Projection penalty between every invariant batch and every specific batch:
// same-label invariant/specific pairs are pushed to zero similarity.
template <class S>
TwoSetLossGrad<S> instance_personalization_loss(const std::vector<FeatureBatch<S>>& sif,
                                                const std::vector<FeatureBatch<S>>& ssf) {
  if (sif.empty() || ssf.empty())
    throw std::invalid_argument("instance_personalization_loss: empty feature set");
  TwoSetLossGrad<S> out;
  for (const auto& fb : sif) out.grads_a.emplace_back(fb.features.shape);
  for (const auto& fb : ssf) out.grads_b.emplace_back(fb.features.shape);
  for (size_t i = 0; i < sif.size(); ++i)
    for (size_t j = 0; j < ssf.size(); ++j) {
      const SimilarityMatrix<S> sm = similarity_matrix(sif[i].features, ssf[j].features);
      const LossGrad<S> pen = projection_penalty(sm.si, label_match_matrix<S>(sif[i].labels, ssf[j].labels));
      out.value += pen.value;
      similarity_matrix_backward(sm, pen.grad, out.grads_a[i], out.grads_b[j]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Orthogonality between paired invariant and specific features

enum class OrthogonalForm { squared, raw };

// Per row: penalize the (squared) dot product plus deviation of both norms
// from 1. Plain sum over rows.
template <class S>
PairLossGrad<S> orthogonal_loss(const Tensor<S>& ifb, const Tensor<S>& sfb,
                                OrthogonalForm form = OrthogonalForm::squared) {
  require_same_shape(ifb, sfb, "orthogonal_loss");
  if (ifb.rank() != 2) throw ShapeError("orthogonal_loss: features must be (B,d)");
  const S tiny = S(1e-12);
  const int B = ifb.dim(0);
  PairLossGrad<S> out{S(0), Tensor<S>(ifb.shape), Tensor<S>(sfb.shape)};
  for (int i = 0; i < B; ++i) {
    const auto fi = ifb.matrix().row(i).array();
    const auto fs = sfb.matrix().row(i).array();
    auto gi = out.grad_a.matrix().row(i).array();
    auto gs = out.grad_b.matrix().row(i).array();
    const S dot = (fi * fs).sum();
    const S ni = std::sqrt((fi * fi).sum());
    const S ns = std::sqrt((fs * fs).sum());
    if (form == OrthogonalForm::squared) {
      out.value += dot * dot;
      gi += S(2) * dot * fs;
      gs += S(2) * dot * fi;
    } else {
      out.value += dot;
      gi += fs;
      gs += fi;
    }
    out.value += std::abs(ni - S(1)) + std::abs(ns - S(1));
    const S sgn_i = ni > S(1) ? S(1) : (ni < S(1) ? S(-1) : S(0));
    const S sgn_s = ns > S(1) ? S(1) : (ns < S(1) ? S(-1) : S(0));
    gi += sgn_i * fi / std::max(ni, tiny);
    gs += sgn_s * fs / std::max(ns, tiny);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prototypes and the structural similarity loss

template <class S>
struct PrototypeTable {
  std::vector<int> labels;  // sorted labels present
  Tensor<S> protos;         // (|labels|, d), one row per label
  std::vector<int> counts;  // contributing samples per label

  int row_of(int label) const { return index_of_label(labels, label); }
};

// Per-label arithmetic mean of the features carrying that label.
template <class S>
PrototypeTable<S> feature_prototypes(const Tensor<S>& features, const std::vector<int>& labels) {
  detail::check_batch(features, labels, "feature_prototypes");
  if (labels.empty()) throw std::invalid_argument("feature_prototypes: empty batch");
  PrototypeTable<S> pt;
  pt.labels = sorted_labels(labels);
  const int C = static_cast<int>(pt.labels.size()), d = features.dim(1);
  pt.protos = Tensor<S>({C, d});
  pt.counts.assign(static_cast<size_t>(C), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int r = pt.row_of(labels[i]);
    pt.protos.matrix().row(r) += features.matrix().row(static_cast<int>(i));
    ++pt.counts[static_cast<size_t>(r)];
  }
  for (int r = 0; r < C; ++r) pt.protos.matrix().row(r) /= static_cast<S>(pt.counts[static_cast<size_t>(r)]);
  return pt;
}

// Chains a gradient w.r.t. prototypes back into the per-sample features that
// were averaged: each sample receives dproto(row of its label) / count.
template <class S>
void prototype_backward(const PrototypeTable<S>& pt, const Tensor<S>& dprotos, const std::vector<int>& labels,
                        Tensor<S>& dfeatures) {
  require_same_shape(dprotos, pt.protos, "prototype_backward");
  for (size_t i = 0; i < labels.size(); ++i) {
    const int r = pt.row_of(labels[i]);
    dfeatures.matrix().row(static_cast<int>(i)) +=
        dprotos.matrix().row(r) / static_cast<S>(pt.counts[static_cast<size_t>(r)]);
  }
}

template <class S>
struct StructuralLossGrad {
  S value = S(0);
  Tensor<S> dfeatures;  // direct term only; prototype path chained separately
  Tensor<S> dprotos;
};

// Mean over samples of log(1 + sum_{c != y} e^{S_c} / e^{S_y}) where S_c is
// the cosine similarity between the sample's feature and prototype c. Equal
// to logsumexp over prototypes minus the true-label similarity.
template <class S>
StructuralLossGrad<S> structural_similarity_loss(const Tensor<S>& features, const std::vector<int>& labels,
                                                 const PrototypeTable<S>& pt, S eps = S(1e-8)) {
  detail::check_batch(features, labels, "structural_similarity_loss");
  const int B = features.dim(0), C = pt.protos.dim(0);
  if (C < 1) throw std::invalid_argument("structural_similarity_loss: empty prototype table");

  const SimilarityMatrix<S> sm = similarity_matrix(features, pt.protos, eps);  // (B, C)
  StructuralLossGrad<S> out;
  out.dfeatures = Tensor<S>(features.shape);
  out.dprotos = Tensor<S>(pt.protos.shape);

  Tensor<S> dsi({B, C});
  for (int i = 0; i < B; ++i) {
    const int y = pt.row_of(labels[static_cast<size_t>(i)]);  // throws if missing
    const auto s = sm.si.data.segment(static_cast<Eigen::Index>(i) * C, C);
    const S m = s.maxCoeff();
    const ArrayX<S> e = (s - m).exp();
    const S z = e.sum();
    out.value += m + std::log(z) - s[y];  // logsumexp - S_y
    auto d = dsi.data.segment(static_cast<Eigen::Index>(i) * C, C);
    d = e / z;  // softmax
    d[y] -= S(1);
  }
  out.value /= static_cast<S>(B);
  dsi.data /= static_cast<S>(B);
  similarity_matrix_backward(sm, dsi, out.dfeatures, out.dprotos);
  return out;
}

// ---------------------------------------------------------------------------
// Cross entropy over a sorted label space

template <class S>
LossGrad<S> cross_entropy_loss(const Tensor<S>& logits, const std::vector<int>& labels,
                               const std::vector<int>& space) {
  detail::check_batch(logits, labels, "cross_entropy_loss");
  if (logits.dim(1) != static_cast<int>(space.size()))
    throw ShapeError("cross_entropy_loss: " + std::to_string(logits.dim(1)) + " logits for " +
                     std::to_string(space.size()) + " classes");
  const int B = logits.dim(0), C = logits.dim(1);
  LossGrad<S> out;
  out.grad = Tensor<S>(logits.shape);
  for (int i = 0; i < B; ++i) {
    const int y = index_of_label(space, labels[static_cast<size_t>(i)]);
    const auto z = logits.data.segment(static_cast<Eigen::Index>(i) * C, C);
    const S m = z.maxCoeff();
    const ArrayX<S> e = (z - m).exp();
    const S zsum = e.sum();
    out.value += m + std::log(zsum) - z[y];
    auto d = out.grad.data.segment(static_cast<Eigen::Index>(i) * C, C);
    d = e / zsum;
    d[y] -= S(1);
  }
  out.value /= static_cast<S>(B);
  out.grad.data /= static_cast<S>(B);
  return out;
}

// ---------------------------------------------------------------------------
// Adversarial pair for generator/identifier training

template <class S>
struct AdversarialLosses {
  S generator_loss = S(0);   // -mean log I(fake)
  S identifier_loss = S(0);  // -mean log I(real) - mean log(1 - I(fake))
  Tensor<S> d_real_identifier;
  Tensor<S> d_fake_identifier;
  Tensor<S> d_fake_generator;
};

// Scores are identifier probabilities. Values within [0,1] are clamped into
// [1e-7, 1-1e-7] before the logs (gradient zero where clamped); anything
// outside [0,1] is rejected.
template <class S>
AdversarialLosses<S> adversarial_losses(const Tensor<S>& real_scores, const Tensor<S>& fake_scores) {
  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  const auto check = [&](const Tensor<S>& t, const char* who) {
    if (!t.all_finite() || (t.data < S(0)).any() || (t.data > S(1)).any())
      throw std::domain_error(std::string("adversarial_losses: ") + who + " scores outside [0,1]");
  };
  check(real_scores, "real");
  check(fake_scores, "fake");

  AdversarialLosses<S> out;
  out.d_real_identifier = Tensor<S>(real_scores.shape);
  out.d_fake_identifier = Tensor<S>(fake_scores.shape);
  out.d_fake_generator = Tensor<S>(fake_scores.shape);
  const S nr = static_cast<S>(real_scores.size());
  const S nf = static_cast<S>(fake_scores.size());

  for (Eigen::Index i = 0; i < real_scores.size(); ++i) {
    const S raw = real_scores.data[i];
    const S v = std::min(hi, std::max(lo, raw));
    out.identifier_loss -= std::log(v) / nr;
    out.d_real_identifier.data[i] = (raw > lo && raw < hi) ? -S(1) / (v * nr) : S(0);
  }
  for (Eigen::Index i = 0; i < fake_scores.size(); ++i) {
    const S raw = fake_scores.data[i];
    const S v = std::min(hi, std::max(lo, raw));
    out.identifier_loss -= std::log(S(1) - v) / nf;
    out.generator_loss -= std::log(v) / nf;
    const bool interior = raw > lo && raw < hi;
    out.d_fake_identifier.data[i] = interior ? S(1) / ((S(1) - v) * nf) : S(0);
    out.d_fake_generator.data[i] = interior ? -S(1) / (v * nf) : S(0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composite totals (unit weights throughout)

template <class S>
S ipcl_loss(S structural, S classify) {
  return structural + classify;
}

template <class S>
S ipfg_loss(S adversarial, S classify) {
  return adversarial + classify;
}

template <class S>
S cct_loss(S consistency, S personalization, S orthogonal, S classify) {
  return consistency + personalization + orthogonal + classify;
}

}  // namespace fedifl

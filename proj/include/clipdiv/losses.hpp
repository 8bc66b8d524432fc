// Copyright 2026 The clipdiv Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <string>

#include "clipdiv/numerics.hpp"

// Every loss takes model output distributions (softmax of logits at temperature 1)
// and returns its batch-mean value together with the exact gradient with respect
// to the logits that produced them.

namespace clipdiv {

template <typename Scalar>
struct LossTerm {
  Scalar value = 0;
  MatrixX<Scalar> grad_logits;
};

template <typename Scalar>
struct PairLossTerm {
  Scalar value = 0;
  MatrixX<Scalar> grad_logits_source;
  MatrixX<Scalar> grad_logits_target;
  Eigen::Index pairs_used = 0;
};

/// Argument order of the KL divergence in the absolute divergence loss.
enum class KlDirection {
  guidance_first,  // KL(guidance || model)
  model_first,     // KL(model || guidance)
};

/// Pulls a gradient with respect to softmax outputs back to the logits:
/// row-wise p * (g - <g, p>).
template <typename DerivedP, typename DerivedG>
MatrixX<typename DerivedP::Scalar> softmax_backward(const Eigen::MatrixBase<DerivedP>& probs,
                                                    const Eigen::MatrixBase<DerivedG>& grad_probs) {
  using Scalar = typename DerivedP::Scalar;
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Scalar inner = probs.row(i).dot(grad_probs.row(i));
    out.row(i) = probs.row(i).cwiseProduct((grad_probs.row(i).array() - inner).matrix());
  }
  return out;
}

/// Mean cross entropy -ln p_{y_i}; gradient (p - onehot(y)) / N.
template <typename Derived>
LossTerm<typename Derived::Scalar> cross_entropy_loss(const Eigen::MatrixBase<Derived>& probs,
                                                      const Labels& labels) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = probs.rows();
  const Eigen::Index k = probs.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0) throw InvalidArgument("cross_entropy_loss: empty batch");
  LossTerm<Scalar> out;
  out.grad_logits = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw InvalidArgument("cross_entropy_loss: label " + std::to_string(y) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
    out.value -= std::log(std::max(Scalar(probs(i, y)), Scalar(kKlEpsilon)));
    out.grad_logits(i, y) -= Scalar(1);
  }
  out.value /= Scalar(n);
  out.grad_logits /= Scalar(n);
  return out;
}

/// Classification loss on labelled source samples.
template <typename Derived>
LossTerm<typename Derived::Scalar> source_cls_loss(const Eigen::MatrixBase<Derived>& probs,
                                                   const Labels& labels) {
  return cross_entropy_loss(probs, labels);
}

/// Self-training loss on target samples with pseudo labels. Same loss as the
/// source term, different supervision.
template <typename Derived>
LossTerm<typename Derived::Scalar> target_pl_loss(const Eigen::MatrixBase<Derived>& probs,
                                                  const Labels& pseudo_labels) {
  return cross_entropy_loss(probs, pseudo_labels);
}

/// Batch mean of the KL divergence between CLIP's domain-agnostic distribution
/// and the model distribution. Call once per domain; the two results sum to the
/// total absolute divergence.
template <typename DerivedM, typename DerivedG>
LossTerm<typename DerivedM::Scalar> absolute_divergence(
    const Eigen::MatrixBase<DerivedM>& model_probs, const Eigen::MatrixBase<DerivedG>& guidance,
    KlDirection direction = KlDirection::guidance_first) {
  using Scalar = typename DerivedM::Scalar;
  const Eigen::Index n = model_probs.rows();
  if (guidance.rows() != n || guidance.cols() != model_probs.cols()) {
    throw DimensionError("absolute_divergence: model and guidance shapes differ");
  }
  if (n == 0) throw InvalidArgument("absolute_divergence: empty batch");
  LossTerm<Scalar> out;
  if (direction == KlDirection::guidance_first) {
    for (Eigen::Index i = 0; i < n; ++i) out.value += kl_div(guidance.row(i), model_probs.row(i));
    out.grad_logits = model_probs - guidance;
  } else {
    // d/dp_k of sum p ln(p / q) is ln p_k - ln q_k + 1; the constant cancels in
    // the softmax pullback.
    MatrixX<Scalar> log_ratio(n, model_probs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      out.value += kl_div(model_probs.row(i), guidance.row(i));
      for (Eigen::Index k = 0; k < model_probs.cols(); ++k) {
        const Scalar p = model_probs(i, k);
        log_ratio(i, k) =
            p > Scalar(0)
                ? std::log(p) - std::log(std::max(Scalar(guidance(i, k)), Scalar(kKlEpsilon)))
                : Scalar(0);
      }
    }
    out.grad_logits = softmax_backward(model_probs, log_ratio);
  }
  out.value /= Scalar(n);
  out.grad_logits /= Scalar(n);
  return out;
}

/// Mean over index-paired source/target rows of 1 - cos(d_clip, d_model), where
/// d_clip is the difference of the averaged-prompt CLIP distributions and d_model
/// the difference of the model distributions. Pairs where either difference has
/// norm below kNormEpsilon are skipped and the mean taken over the rest.
template <typename Derived1, typename Derived2, typename Derived3, typename Derived4>
PairLossTerm<typename Derived1::Scalar> relative_divergence(
    const Eigen::MatrixBase<Derived1>& src_probs, const Eigen::MatrixBase<Derived2>& tgt_probs,
    const Eigen::MatrixBase<Derived3>& src_avg_guidance,
    const Eigen::MatrixBase<Derived4>& tgt_avg_guidance) {
  using Scalar = typename Derived1::Scalar;
  const Eigen::Index b = src_probs.rows();
  const Eigen::Index k = src_probs.cols();
  if (b == 0) throw InvalidArgument("relative_divergence: empty batch");
  if (tgt_probs.rows() != b || src_avg_guidance.rows() != b || tgt_avg_guidance.rows() != b) {
    throw DimensionError("relative_divergence: all four blocks need the same number of rows");
  }
  if (tgt_probs.cols() != k || src_avg_guidance.cols() != k || tgt_avg_guidance.cols() != k) {
    throw DimensionError("relative_divergence: class counts differ");
  }

  PairLossTerm<Scalar> out;
  MatrixX<Scalar> grad_delta = MatrixX<Scalar>::Zero(b, k);
  for (Eigen::Index i = 0; i < b; ++i) {
    const VectorX<Scalar> clip_delta = (src_avg_guidance.row(i) - tgt_avg_guidance.row(i)).transpose();
    const VectorX<Scalar> model_delta = (src_probs.row(i) - tgt_probs.row(i)).transpose();
    const Scalar clip_norm = clip_delta.norm();
    const Scalar model_norm = model_delta.norm();
    if (clip_norm < Scalar(kNormEpsilon) || model_norm < Scalar(kNormEpsilon)) continue;
    const Scalar cos = clip_delta.dot(model_delta) / (clip_norm * model_norm);
    out.value += Scalar(1) - cos;
    // d(1 - cos)/d model_delta
    grad_delta.row(i) = (cos * model_delta / (model_norm * model_norm) -
                         clip_delta / (clip_norm * model_norm))
                            .transpose();
    ++out.pairs_used;
  }
  if (out.pairs_used == 0) {
    throw DegenerateError("relative_divergence: every pair in the batch is degenerate");
  }
  const Scalar count = Scalar(out.pairs_used);
  out.value /= count;
  grad_delta /= count;
  out.grad_logits_source = softmax_backward(src_probs, grad_delta);
  out.grad_logits_target = softmax_backward(tgt_probs, -grad_delta);
  return out;
}

/// Weights of the auxiliary terms in the total objective.
struct LossWeights {
  double lambda_abs = 10.0;
  double lambda_rel = 1.0;
  double lambda_pl = 0.1;

  void validate() const {
    for (double w : {lambda_abs, lambda_rel, lambda_pl}) {
      if (!std::isfinite(w) || w < 0.0) {
        throw InvalidArgument("loss weights must be finite and non-negative");
      }
    }
  }
};

/// Individually computed terms on one model snapshot. Gradients left empty
/// (0 x 0) contribute nothing.
template <typename Scalar>
struct LossParts {
  LossTerm<Scalar> cls_source;
  LossTerm<Scalar> abs_source;
  LossTerm<Scalar> abs_target;
  PairLossTerm<Scalar> rel;
  LossTerm<Scalar> pl;
};

template <typename Scalar>
struct LossBundle {
  Scalar cls_source = 0;
  Scalar abs_source = 0;
  Scalar abs_target = 0;
  Scalar abs_total = 0;
  Scalar rel = 0;
  Scalar pl = 0;
  Scalar total = 0;
  MatrixX<Scalar> grad_logits_source;
  MatrixX<Scalar> grad_logits_target;
};

namespace detail {

template <typename Scalar>
void accumulate(MatrixX<Scalar>& into, const MatrixX<Scalar>& term, Scalar weight) {
  if (term.size() == 0 || weight == Scalar(0)) return;
  if (into.size() == 0) {
    into = weight * term;
    return;
  }
  if (into.rows() != term.rows() || into.cols() != term.cols()) {
    throw DimensionError("total_objective: gradient blocks have inconsistent shapes");
  }
  into += weight * term;
}

}  // namespace detail

/// total = cls_source + lambda_abs (abs_source + abs_target) + lambda_rel rel + lambda_pl pl,
/// with the logit gradients of each domain combined using the same weights.
template <typename Scalar>
LossBundle<Scalar> total_objective(const LossParts<Scalar>& parts, const LossWeights& weights) {
  weights.validate();
  const Scalar w_abs = Scalar(weights.lambda_abs);
  const Scalar w_rel = Scalar(weights.lambda_rel);
  const Scalar w_pl = Scalar(weights.lambda_pl);

  LossBundle<Scalar> out;
  out.cls_source = parts.cls_source.value;
  out.abs_source = parts.abs_source.value;
  out.abs_target = parts.abs_target.value;
  out.abs_total = out.abs_source + out.abs_target;
  out.rel = parts.rel.value;
  out.pl = parts.pl.value;
  out.total = out.cls_source + w_abs * out.abs_total + w_rel * out.rel + w_pl * out.pl;

  detail::accumulate(out.grad_logits_source, parts.cls_source.grad_logits, Scalar(1));
  detail::accumulate(out.grad_logits_source, parts.abs_source.grad_logits, w_abs);
  detail::accumulate(out.grad_logits_source, parts.rel.grad_logits_source, w_rel);
  detail::accumulate(out.grad_logits_target, parts.abs_target.grad_logits, w_abs);
  detail::accumulate(out.grad_logits_target, parts.rel.grad_logits_target, w_rel);
  detail::accumulate(out.grad_logits_target, parts.pl.grad_logits, w_pl);
  return out;
}

/// Everything one optimisation step needs, for paired source/target batches.
template <typename Scalar>
struct BatchInputs {
  MatrixX<Scalar> src_probs;
  MatrixX<Scalar> tgt_probs;
  Labels src_labels;
  Labels tgt_pseudo_labels;  // empty: no self-training term
  MatrixX<Scalar> src_agnostic;
  MatrixX<Scalar> tgt_agnostic;
  MatrixX<Scalar> src_averaged;
  MatrixX<Scalar> tgt_averaged;
};

/// Computes every term (so zero-weighted terms are still reported), then
/// combines them. A batch in which every relative pair is degenerate contributes
/// a zero relative term; an empty pseudo-label list contributes a zero pl term.
template <typename Scalar>
LossBundle<Scalar> compute_losses(const BatchInputs<Scalar>& in, const LossWeights& weights,
                                  KlDirection direction) {
  weights.validate();
  LossParts<Scalar> parts;
  parts.cls_source = source_cls_loss(in.src_probs, in.src_labels);
  parts.abs_source = absolute_divergence(in.src_probs, in.src_agnostic, direction);
  parts.abs_target = absolute_divergence(in.tgt_probs, in.tgt_agnostic, direction);
  try {
    parts.rel = relative_divergence(in.src_probs, in.tgt_probs, in.src_averaged, in.tgt_averaged);
  } catch (const DegenerateError&) {
    parts.rel = PairLossTerm<Scalar>{};
  }
  if (!in.tgt_pseudo_labels.empty()) {
    parts.pl = target_pl_loss(in.tgt_probs, in.tgt_pseudo_labels);
  }
  LossBundle<Scalar> bundle = total_objective(parts, weights);
  if (bundle.grad_logits_source.size() == 0)
    bundle.grad_logits_source = MatrixX<Scalar>::Zero(in.src_probs.rows(), in.src_probs.cols());
  if (bundle.grad_logits_target.size() == 0)
    bundle.grad_logits_target = MatrixX<Scalar>::Zero(in.tgt_probs.rows(), in.tgt_probs.cols());
  return bundle;
}

inline std::string to_string(KlDirection direction) {
  return direction == KlDirection::guidance_first ? "guidance_first" : "model_first";
}

inline KlDirection kl_direction_from_string(const std::string& name) {
  if (name == "guidance_first") return KlDirection::guidance_first;
  if (name == "model_first") return KlDirection::model_first;
  throw InvalidArgument("unknown kl direction '" + name + "' (guidance_first|model_first)");
}

}  // namespace clipdiv

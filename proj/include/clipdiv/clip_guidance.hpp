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

#include <cstdint>
#include <map>

#include "clipdiv/dataset.hpp"
#include "clipdiv/numerics.hpp"
#include "clipdiv/prompt_bank.hpp"

namespace clipdiv {

/// CLIP's default learned logit scale is 100.
inline constexpr double kDefaultClipTau = 0.01;

/// Zero-shot class distribution of every image under one prompt set.
struct GuidanceDistribution {
  Matrix probs;  // N x K, rows are probability vectors
  PromptSet prompt_set = PromptSet::agnostic;
  double tau = kDefaultClipTau;
};

/// Row i is softmax_k(cos(text_k, image_i) / tau).
///
/// The temperature divides the cosine, as in CLIP's zero-shot classifier; scaling
/// the image embedding inside the cosine would leave it without effect.
template <typename DerivedI, typename DerivedT>
MatrixX<typename DerivedI::Scalar> zero_shot_probs(const Eigen::MatrixBase<DerivedI>& image_embs,
                                                   const Eigen::MatrixBase<DerivedT>& text_embs,
                                                   typename DerivedI::Scalar tau) {
  using Scalar = typename DerivedI::Scalar;
  if (image_embs.cols() != text_embs.cols()) {
    throw DimensionError("zero_shot_probs: image width " + std::to_string(image_embs.cols()) +
                         " != text width " + std::to_string(text_embs.cols()));
  }
  if (!(tau > Scalar(0))) throw InvalidArgument("zero_shot_probs: tau must be positive");
  const Eigen::Index n = image_embs.rows();
  const Eigen::Index k = text_embs.rows();
  if (k == 0) throw InvalidArgument("zero_shot_probs: no classes");

  VectorX<Scalar> text_norms(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    text_norms(c) = text_embs.row(c).norm();
    if (text_norms(c) <= Scalar(kNormEpsilon)) {
      throw DegenerateError("zero_shot_probs: text embedding row " + std::to_string(c) +
                            " is zero");
    }
  }
  MatrixX<Scalar> probs(n, k);
  VectorX<Scalar> cosines(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar image_norm = image_embs.row(i).norm();
    if (image_norm <= Scalar(kNormEpsilon)) {
      throw DegenerateError("zero_shot_probs: image embedding row " + std::to_string(i) +
                            " is zero");
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      cosines(c) = cosine_sim(text_embs.row(c), image_embs.row(i));
    }
    probs.row(i) = softmax(cosines, tau).transpose();
  }
  return probs;
}

GuidanceDistribution zero_shot(const Matrix& image_embs, const PromptBank& bank, PromptSet set,
                               double tau);

enum class DomainRole { source, target };

/// Guidance for one dataset, computed once. CLIP is frozen, so these are
/// constants of the data for the whole run.
struct GuidanceCache {
  std::map<PromptSet, GuidanceDistribution> distributions;

  const GuidanceDistribution& at(PromptSet set) const;
  bool contains(PromptSet set) const { return distributions.count(set) != 0; }
  std::uint64_t hash() const;
};

/// Agnostic and averaged distributions for every dataset, plus the
/// domain-specific distribution matching `role`.
GuidanceCache guidance_cache(const EmbeddingDataset& dataset, const PromptBank& bank, double tau,
                             DomainRole role);

}  // namespace clipdiv

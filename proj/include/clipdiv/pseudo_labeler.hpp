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

#include <string>

#include "clipdiv/numerics.hpp"

namespace clipdiv {

/// Guard on the per-class weight sum of the calibrated centroids.
inline constexpr double kCentroidDenominatorEpsilon = 1e-12;

/// Cosine distances this close to the minimum count as tied. Centroids that are
/// equal in exact arithmetic (e.g. a one-sample target set) differ in the last bits.
inline constexpr double kDistanceTieTolerance = 1e-12;

template <typename Scalar>
struct PseudoLabelState {
  MatrixX<Scalar> weights;            // N x K, model prob + CLIP target-prompt prob
  MatrixX<Scalar> centroids;          // K x d, calibrated
  Labels initial_labels;              // nearest calibrated centroid
  MatrixX<Scalar> refined_centroids;  // K x d, class means under initial_labels
  Labels labels;                      // nearest refined centroid
};

/// c_k = sum_i w_ik f_i / sum_i w_ik with w = model_probs + clip_target_probs.
template <typename DerivedF, typename DerivedM, typename DerivedC>
MatrixX<typename DerivedF::Scalar> calibrated_centroids(
    const Eigen::MatrixBase<DerivedF>& features, const Eigen::MatrixBase<DerivedM>& model_probs,
    const Eigen::MatrixBase<DerivedC>& clip_target_probs) {
  using Scalar = typename DerivedF::Scalar;
  const Eigen::Index n = features.rows();
  if (n == 0) throw InvalidArgument("calibrated_centroids: empty target set");
  if (model_probs.rows() != n || clip_target_probs.rows() != n) {
    throw DimensionError("calibrated_centroids: row counts differ");
  }
  if (model_probs.cols() != clip_target_probs.cols()) {
    throw DimensionError("calibrated_centroids: class counts differ");
  }
  const MatrixX<Scalar> weights = model_probs + clip_target_probs;
  MatrixX<Scalar> centroids = weights.transpose() * features;
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    centroids.row(k) /= std::max(weights.col(k).sum(), Scalar(kCentroidDenominatorEpsilon));
  }
  return centroids;
}

/// Nearest centroid under cosine distance 1 - cos(f, c); ties (within
/// kDistanceTieTolerance) go to the lowest class.
template <typename DerivedF, typename DerivedC>
Labels assign_nearest(const Eigen::MatrixBase<DerivedF>& features,
                      const Eigen::MatrixBase<DerivedC>& centroids) {
  using Scalar = typename DerivedF::Scalar;
  if (features.cols() != centroids.cols()) {
    throw DimensionError("assign_nearest: feature width " + std::to_string(features.cols()) +
                         " != centroid width " + std::to_string(centroids.cols()));
  }
  if (centroids.rows() == 0) throw InvalidArgument("assign_nearest: no centroids");
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    if (centroids.row(k).norm() <= Scalar(kNormEpsilon)) {
      throw DegenerateError("assign_nearest: centroid " + std::to_string(k) + " is zero");
    }
  }
  Labels labels(static_cast<std::size_t>(features.rows()));
  VectorX<Scalar> distance(centroids.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
      distance(k) = Scalar(1) - cosine_sim(features.row(i), centroids.row(k));
    }
    const Scalar cutoff = distance.minCoeff() + Scalar(kDistanceTieTolerance);
    int best = 0;
    while (distance(best) > cutoff) ++best;
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

template <typename Scalar>
struct RefinedAssignment {
  MatrixX<Scalar> centroids;
  Labels labels;
};

/// One refinement round: class means of the current assignment, then
/// reassignment. A class with no members keeps its row from `previous_centroids`.
template <typename DerivedF, typename DerivedC>
RefinedAssignment<typename DerivedF::Scalar> refine_round(
    const Eigen::MatrixBase<DerivedF>& features, const Labels& labels,
    const Eigen::MatrixBase<DerivedC>& previous_centroids) {
  using Scalar = typename DerivedF::Scalar;
  const Eigen::Index k = previous_centroids.rows();
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw DimensionError("refine_round: label count differs from feature rows");
  }
  if (previous_centroids.cols() != features.cols()) {
    throw DimensionError("refine_round: centroid width differs from feature width");
  }
  MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(k, features.cols());
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw InvalidArgument("refine_round: label " + std::to_string(y) + " out of range");
    }
    sums.row(y) += features.row(i);
    ++counts[static_cast<std::size_t>(y)];
  }
  RefinedAssignment<Scalar> out;
  out.centroids = previous_centroids;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto count = counts[static_cast<std::size_t>(c)];
    if (count > 0) out.centroids.row(c) = sums.row(c) / Scalar(count);
  }
  out.labels = assign_nearest(features, out.centroids);
  return out;
}

/// Calibrated centroids, nearest-centroid labels, then exactly one refinement round.
template <typename DerivedF, typename DerivedM, typename DerivedC>
PseudoLabelState<typename DerivedF::Scalar> run_pseudo_labeling(
    const Eigen::MatrixBase<DerivedF>& features, const Eigen::MatrixBase<DerivedM>& model_probs,
    const Eigen::MatrixBase<DerivedC>& clip_target_probs) {
  using Scalar = typename DerivedF::Scalar;
  PseudoLabelState<Scalar> state;
  state.centroids = calibrated_centroids(features, model_probs, clip_target_probs);
  state.weights = model_probs + clip_target_probs;
  state.initial_labels = assign_nearest(features, state.centroids);
  auto refined = refine_round(features, state.initial_labels, state.centroids);
  state.refined_centroids = std::move(refined.centroids);
  state.labels = std::move(refined.labels);
  return state;
}

}  // namespace clipdiv

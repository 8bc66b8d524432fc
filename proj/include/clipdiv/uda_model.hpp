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
#include <string>
#include <vector>

#include "clipdiv/numerics.hpp"

namespace clipdiv {

/// Affine map x -> x W + b, with W stored fan_in x fan_out.
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

/// Trainable parameters of the model. Also used for gradients and momentum
/// buffers, which share the shape.
struct Parameters {
  std::vector<DenseLayer> extractor;
  DenseLayer classifier;

  /// Same shape, all zeros.
  Parameters zeros_like() const;
  bool same_shape(const Parameters& other) const;
  Eigen::Index count() const;
  /// Extractor layers in order (weight then bias), then the classifier.
  Vector flatten() const;
  void assign_flat(const Vector& flat);
  bool all_finite() const;
};

enum class Activation { tanh };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

/// Everything the backward pass needs from one forward evaluation.
struct ForwardRecord {
  std::vector<Matrix> pre_activations;  // one per extractor layer
  std::vector<Matrix> activations;      // activations[0] is the input batch
  Matrix logits;
  Matrix probs;  // softmax(logits) at temperature 1

  const Matrix& features() const { return activations.back(); }
};

/// Feature extractor F (tanh MLP) followed by a linear classifier G.
class UdaModel {
 public:
  UdaModel() = default;

  /// `layer_dims` = (d_in, h_1, ..., d_feat); weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)),
  /// biases zero.
  static UdaModel init(const std::vector<int>& layer_dims, int num_classes, std::uint64_t seed);

  /// Wraps existing parameters; throws DimensionError if they do not chain.
  UdaModel(std::vector<int> layer_dims, int num_classes, Parameters params);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int input_dim() const { return layer_dims_.front(); }
  int feature_dim() const { return layer_dims_.back(); }
  int num_classes() const { return num_classes_; }
  Activation activation() const { return Activation::tanh; }

  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }

  ForwardRecord forward(const Matrix& inputs) const;

  /// Gradient of the scalar whose logit-gradient is `grad_logits`.
  Parameters backward(const ForwardRecord& record, const Matrix& grad_logits) const;

  /// Per-row argmax of the logits, lowest index on ties.
  Labels predict(const Matrix& inputs) const;

 private:
  std::vector<int> layer_dims_;
  int num_classes_ = 0;
  Parameters params_;
};

}  // namespace clipdiv

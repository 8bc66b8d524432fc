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

#include "clipdiv/uda_model.hpp"

#include <cmath>

namespace clipdiv {

namespace {

DenseLayer zero_layer(const DenseLayer& shape) {
  return DenseLayer{Matrix::Zero(shape.weight.rows(), shape.weight.cols()),
                    Vector::Zero(shape.bias.size())};
}

bool same_layer_shape(const DenseLayer& a, const DenseLayer& b) {
  return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
         a.bias.size() == b.bias.size();
}

template <typename Fn>
void for_each_layer(const Parameters& p, Fn&& fn) {
  for (const auto& layer : p.extractor) fn(layer);
  fn(p.classifier);
}

template <typename Fn>
void for_each_layer(Parameters& p, Fn&& fn) {
  for (auto& layer : p.extractor) fn(layer);
  fn(p.classifier);
}

DenseLayer uniform_layer(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(3.0 / fan_in);
  DenseLayer layer{Matrix(fan_in, fan_out), Vector::Zero(fan_out)};
  for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      layer.weight(i, j) = rng.uniform(-bound, bound);
  return layer;
}

}  // namespace

Parameters Parameters::zeros_like() const {
  Parameters out;
  for (const auto& layer : extractor) out.extractor.push_back(zero_layer(layer));
  out.classifier = zero_layer(classifier);
  return out;
}

bool Parameters::same_shape(const Parameters& other) const {
  if (extractor.size() != other.extractor.size()) return false;
  for (std::size_t l = 0; l < extractor.size(); ++l)
    if (!same_layer_shape(extractor[l], other.extractor[l])) return false;
  return same_layer_shape(classifier, other.classifier);
}

Eigen::Index Parameters::count() const {
  Eigen::Index n = 0;
  for_each_layer(*this, [&n](const DenseLayer& l) { n += l.weight.size() + l.bias.size(); });
  return n;
}

Vector Parameters::flatten() const {
  Vector flat(count());
  Eigen::Index offset = 0;
  for_each_layer(*this, [&](const DenseLayer& l) {
    flat.segment(offset, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
    offset += l.weight.size();
    flat.segment(offset, l.bias.size()) = l.bias;
    offset += l.bias.size();
  });
  return flat;
}

void Parameters::assign_flat(const Vector& flat) {
  if (flat.size() != count()) {
    throw DimensionError("Parameters::assign_flat: expected " + std::to_string(count()) +
                         " values, got " + std::to_string(flat.size()));
  }
  Eigen::Index offset = 0;
  for_each_layer(*this, [&](DenseLayer& l) {
    l.weight.reshaped<Eigen::RowMajor>() = flat.segment(offset, l.weight.size());
    offset += l.weight.size();
    l.bias = flat.segment(offset, l.bias.size());
    offset += l.bias.size();
  });
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each_layer(*this, [&ok](const DenseLayer& l) {
    ok = ok && l.weight.allFinite() && l.bias.allFinite();
  });
  return ok;
}

std::string to_string(Activation) { return "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + name + "'");
}

UdaModel UdaModel::init(const std::vector<int>& layer_dims, int num_classes, std::uint64_t seed) {
  if (layer_dims.empty()) throw InvalidArgument("UdaModel::init: empty layer dims");
  for (int d : layer_dims)
    if (d < 1) throw InvalidArgument("UdaModel::init: every layer dim must be >= 1");
  if (num_classes < 1) throw InvalidArgument("UdaModel::init: num_classes must be >= 1");

  Rng rng(seed);
  Parameters params;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    params.extractor.push_back(uniform_layer(layer_dims[l], layer_dims[l + 1], rng));
  }
  params.classifier = uniform_layer(layer_dims.back(), num_classes, rng);
  return UdaModel(layer_dims, num_classes, std::move(params));
}

UdaModel::UdaModel(std::vector<int> layer_dims, int num_classes, Parameters params)
    : layer_dims_(std::move(layer_dims)), num_classes_(num_classes), params_(std::move(params)) {
  if (layer_dims_.empty()) throw InvalidArgument("UdaModel: empty layer dims");
  if (params_.extractor.size() + 1 != layer_dims_.size()) {
    throw DimensionError("UdaModel: expected " + std::to_string(layer_dims_.size() - 1) +
                         " extractor layers");
  }
  for (std::size_t l = 0; l < params_.extractor.size(); ++l) {
    const auto& layer = params_.extractor[l];
    if (layer.weight.rows() != layer_dims_[l] || layer.weight.cols() != layer_dims_[l + 1] ||
        layer.bias.size() != layer_dims_[l + 1]) {
      throw DimensionError("UdaModel: extractor layer " + std::to_string(l) + " has wrong shape");
    }
  }
  if (params_.classifier.weight.rows() != layer_dims_.back() ||
      params_.classifier.weight.cols() != num_classes_ ||
      params_.classifier.bias.size() != num_classes_) {
    throw DimensionError("UdaModel: classifier has wrong shape");
  }
}

ForwardRecord UdaModel::forward(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw DimensionError("UdaModel::forward: input width " + std::to_string(inputs.cols()) +
                         " != " + std::to_string(input_dim()));
  }
  ForwardRecord record;
  record.activations.push_back(inputs);
  for (const auto& layer : params_.extractor) {
    Matrix z = record.activations.back() * layer.weight;
    z.rowwise() += layer.bias.transpose();
    record.activations.push_back(z.array().tanh().matrix());
    record.pre_activations.push_back(std::move(z));
  }
  record.logits = record.features() * params_.classifier.weight;
  record.logits.rowwise() += params_.classifier.bias.transpose();
  record.probs = softmax_rows(record.logits, 1.0);
  return record;
}

Parameters UdaModel::backward(const ForwardRecord& record, const Matrix& grad_logits) const {
  if (grad_logits.rows() != record.logits.rows() || grad_logits.cols() != record.logits.cols()) {
    throw DimensionError("UdaModel::backward: gradient shape does not match logits");
  }
  Parameters grads;
  grads.extractor.resize(params_.extractor.size());
  grads.classifier.weight = record.features().transpose() * grad_logits;
  grads.classifier.bias = grad_logits.colwise().sum().transpose();

  Matrix upstream = grad_logits * params_.classifier.weight.transpose();
  for (std::size_t l = params_.extractor.size(); l-- > 0;) {
    const Matrix& out = record.activations[l + 1];
    const Matrix grad_pre = (upstream.array() * (1.0 - out.array().square())).matrix();
    grads.extractor[l].weight = record.activations[l].transpose() * grad_pre;
    grads.extractor[l].bias = grad_pre.colwise().sum().transpose();
    if (l > 0) upstream = grad_pre * params_.extractor[l].weight.transpose();
  }
  return grads;
}

Labels UdaModel::predict(const Matrix& inputs) const {
  const ForwardRecord record = forward(inputs);
  Labels out(static_cast<std::size_t>(record.logits.rows()));
  for (Eigen::Index i = 0; i < record.logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = argmax(record.logits.row(i));
  }
  return out;
}

}  // namespace clipdiv

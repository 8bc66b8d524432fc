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

#include "clipdiv/trainer.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "clipdiv/dataio.hpp"
#include "clipdiv/pseudo_labeler.hpp"

namespace clipdiv {

namespace {

void momentum_update(DenseLayer& p, const DenseLayer& g, DenseLayer& v, double lr, double mu) {
  v.weight = mu * v.weight + g.weight;
  v.bias = mu * v.bias + g.bias;
  p.weight -= lr * v.weight;
  p.bias -= lr * v.bias;
}

/// Concatenated independent permutations of [0, n), truncated to `length`.
std::vector<int> index_stream(int n, long length, Rng& rng) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(length));
  while (static_cast<long>(out.size()) < length) {
    for (int i : rng.permutation(n)) {
      if (static_cast<long>(out.size()) == length) break;
      out.push_back(i);
    }
  }
  return out;
}

Matrix gather_rows(const Matrix& m, const int* idx, int count) {
  Matrix out(count, m.cols());
  for (int i = 0; i < count; ++i) out.row(i) = m.row(idx[i]);
  return out;
}

Labels gather_labels(const Labels& labels, const int* idx, int count) {
  Labels out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(idx[i])];
  return out;
}

double label_agreement(const Labels& a, const Labels& b) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

void validate_inputs(const EmbeddingDataset& source, const EmbeddingDataset& target,
                     const PromptBank& bank) {
  if (source.size() == 0) throw ConfigError("source dataset is empty");
  if (target.size() == 0) throw ConfigError("target dataset is empty");
  if (!source.labels) throw ConfigError("source dataset '" + source.domain_name + "' has no labels");
  source.validate();
  target.validate();
  check_pairing(source, bank);
  check_pairing(target, bank);
  if (source.inputs.cols() != target.inputs.cols()) {
    throw ConfigError("source and target input widths differ (" +
                      std::to_string(source.inputs.cols()) + " vs " +
                      std::to_string(target.inputs.cols()) + ")");
  }
}

}  // namespace

void TrainingConfig::validate() const {
  try {
    weights.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_extractor >= 0.0) || !(lr_classifier >= 0.0)) {
    throw ConfigError("learning rates must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(eta0 > 0.0) || !(alpha > 0.0) || !(beta >= 0.0)) {
    throw ConfigError("schedule needs eta0 > 0, alpha > 0, beta >= 0");
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
}

double lr_multiplier(double theta, double eta0, double alpha, double beta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw InvalidArgument("lr_multiplier: theta must lie in [0, 1], got " + std::to_string(theta));
  }
  if (!(eta0 > 0.0) || !(alpha > 0.0) || !(beta >= 0.0)) {
    throw InvalidArgument("lr_multiplier: need eta0 > 0, alpha > 0, beta >= 0");
  }
  return eta0 / std::pow(1.0 + alpha * theta, beta);
}

void sgd_step(Parameters& params, const Parameters& grads, Parameters& velocity,
              double lr_extractor, double lr_classifier, double momentum) {
  if (!params.same_shape(grads) || !params.same_shape(velocity)) {
    throw DimensionError("sgd_step: parameters, gradients and velocity differ in shape");
  }
  for (std::size_t l = 0; l < params.extractor.size(); ++l) {
    momentum_update(params.extractor[l], grads.extractor[l], velocity.extractor[l], lr_extractor,
                    momentum);
  }
  momentum_update(params.classifier, grads.classifier, velocity.classifier, lr_classifier, momentum);
}

TrainResult train(const EmbeddingDataset& source, const EmbeddingDataset& target,
                  const PromptBank& bank, const TrainingConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  validate_inputs(source, target, bank);
  const GuidanceCache source_guidance = guidance_cache(source, bank, config.tau, DomainRole::source);
  const GuidanceCache target_guidance = guidance_cache(target, bank, config.tau, DomainRole::target);
  return train(source, target, bank, source_guidance, target_guidance, config, on_epoch);
}

TrainResult train(const EmbeddingDataset& source, const EmbeddingDataset& target,
                  const PromptBank& bank, const GuidanceCache& source_guidance,
                  const GuidanceCache& target_guidance, const TrainingConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  validate_inputs(source, target, bank);

  const Matrix& src_agnostic = source_guidance.at(PromptSet::agnostic).probs;
  const Matrix& src_averaged = source_guidance.at(PromptSet::averaged).probs;
  const Matrix& tgt_agnostic = target_guidance.at(PromptSet::agnostic).probs;
  const Matrix& tgt_averaged = target_guidance.at(PromptSet::averaged).probs;
  const Matrix& tgt_specific = target_guidance.at(PromptSet::target_specific).probs;
  if (src_agnostic.rows() != source.size() || tgt_agnostic.rows() != target.size()) {
    throw ConfigError("guidance caches do not match the datasets");
  }

  RunMetrics metrics;
  metrics.guidance_hash_before = source_guidance.hash() ^ (target_guidance.hash() * 31);

  std::vector<int> layer_dims{static_cast<int>(source.inputs.cols())};
  layer_dims.insert(layer_dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  layer_dims.push_back(config.feature_dim);
  UdaModel model = UdaModel::init(layer_dims, bank.num_classes(), config.seed);
  Parameters velocity = model.params().zeros_like();
  Rng batch_rng(config.seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);

  const int b = config.batch_size;
  const int n_src = static_cast<int>(source.size());
  const int n_tgt = static_cast<int>(target.size());
  const long steps_per_epoch = (std::max(n_src, n_tgt) + b - 1) / b;
  const long total_steps = steps_per_epoch * config.epochs;
  const Labels& src_labels = *source.labels;
  long global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();

    // Pseudo labels over the whole target set with the current model.
    const ForwardRecord target_pass = model.forward(target.inputs);
    const auto pseudo = run_pseudo_labeling(target_pass.features(), target_pass.probs, tgt_specific);

    const std::vector<int> src_order = index_stream(n_src, steps_per_epoch * b, batch_rng);
    const std::vector<int> tgt_order = index_stream(n_tgt, steps_per_epoch * b, batch_rng);

    LossValues sums;
    double multiplier = config.eta0;
    for (long s = 0; s < steps_per_epoch; ++s, ++global_step) {
      const double theta = static_cast<double>(global_step) / static_cast<double>(total_steps);
      multiplier = lr_multiplier(theta, config.eta0, config.alpha, config.beta);
      const int* src_idx = src_order.data() + s * b;
      const int* tgt_idx = tgt_order.data() + s * b;

      Matrix batch(2 * b, source.inputs.cols());
      batch.topRows(b) = gather_rows(source.inputs, src_idx, b);
      batch.bottomRows(b) = gather_rows(target.inputs, tgt_idx, b);
      const ForwardRecord fwd = model.forward(batch);

      BatchInputs<double> in;
      in.src_probs = fwd.probs.topRows(b);
      in.tgt_probs = fwd.probs.bottomRows(b);
      in.src_labels = gather_labels(src_labels, src_idx, b);
      in.tgt_pseudo_labels = gather_labels(pseudo.labels, tgt_idx, b);
      in.src_agnostic = gather_rows(src_agnostic, src_idx, b);
      in.tgt_agnostic = gather_rows(tgt_agnostic, tgt_idx, b);
      in.src_averaged = gather_rows(src_averaged, src_idx, b);
      in.tgt_averaged = gather_rows(tgt_averaged, tgt_idx, b);
      const LossBundle<double> bundle = compute_losses(in, config.weights, config.kl_direction);

      Matrix grad_logits(2 * b, bank.num_classes());
      grad_logits.topRows(b) = bundle.grad_logits_source;
      grad_logits.bottomRows(b) = bundle.grad_logits_target;
      const Parameters grads = model.backward(fwd, grad_logits);
      const double scale = multiplier / config.eta0;
      sgd_step(model.params(), grads, velocity, config.lr_extractor * scale,
               config.lr_classifier * scale, config.momentum);
      if (!model.params().all_finite()) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(global_step));
      }

      StepRecord step{epoch, global_step, theta,
                      LossValues{bundle.cls_source, bundle.abs_source, bundle.abs_target,
                                 bundle.abs_total, bundle.rel, bundle.pl, bundle.total}};
      sums.cls_source += step.losses.cls_source;
      sums.abs_source += step.losses.abs_source;
      sums.abs_target += step.losses.abs_target;
      sums.abs_total += step.losses.abs_total;
      sums.rel += step.losses.rel;
      sums.pl += step.losses.pl;
      sums.total += step.losses.total;
      metrics.steps.push_back(step);
    }

    EpochRecord record;
    record.epoch = epoch;
    const double count = static_cast<double>(steps_per_epoch);
    record.mean_losses = LossValues{sums.cls_source / count, sums.abs_source / count,
                                    sums.abs_target / count, sums.abs_total / count,
                                    sums.rel / count,        sums.pl / count,
                                    sums.total / count};
    record.source_accuracy = evaluate(model, source);
    if (target.ground_truth()) {
      record.target_accuracy = evaluate(model, target);
      record.pseudo_label_accuracy = label_agreement(pseudo.labels, *target.ground_truth());
    }
    record.lr_multiplier = multiplier;
    record.lr_extractor = config.lr_extractor * multiplier / config.eta0;
    record.lr_classifier = config.lr_classifier * multiplier / config.eta0;
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }

  metrics.guidance_hash_after = source_guidance.hash() ^ (target_guidance.hash() * 31);
  return TrainResult{std::move(model), std::move(metrics)};
}

double evaluate(const UdaModel& model, const EmbeddingDataset& dataset) {
  const Labels* truth = dataset.ground_truth();
  if (truth == nullptr) {
    throw InvalidArgument("evaluate: dataset '" + dataset.domain_name + "' has no labels");
  }
  if (dataset.size() == 0) throw InvalidArgument("evaluate: empty dataset");
  return label_agreement(model.predict(dataset.inputs), *truth);
}

std::string metrics_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["cls_source"] = r.mean_losses.cls_source;
  j["abs_source"] = r.mean_losses.abs_source;
  j["abs_target"] = r.mean_losses.abs_target;
  j["abs_total"] = r.mean_losses.abs_total;
  j["rel"] = r.mean_losses.rel;
  j["pl"] = r.mean_losses.pl;
  j["total"] = r.mean_losses.total;
  j["source_accuracy"] = r.source_accuracy;
  j["target_accuracy"] = r.target_accuracy ? nlohmann::ordered_json(*r.target_accuracy) : nullptr;
  j["pseudo_label_accuracy"] =
      r.pseudo_label_accuracy ? nlohmann::ordered_json(*r.pseudo_label_accuracy) : nullptr;
  j["lr_multiplier"] = r.lr_multiplier;
  j["lr_extractor"] = r.lr_extractor;
  j["lr_classifier"] = r.lr_classifier;
  return j.dump();
}

}  // namespace clipdiv

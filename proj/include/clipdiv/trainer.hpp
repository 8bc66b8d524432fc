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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clipdiv/clip_guidance.hpp"
#include "clipdiv/dataset.hpp"
#include "clipdiv/losses.hpp"
#include "clipdiv/prompt_bank.hpp"
#include "clipdiv/uda_model.hpp"

namespace clipdiv {

struct TrainingConfig {
  LossWeights weights;
  int epochs = 10;
  int batch_size = 32;
  double lr_extractor = 2e-3;
  double lr_classifier = 2e-2;
  double momentum = 0.9;
  double eta0 = 0.01;
  double alpha = 10.0;
  double beta = 0.75;
  double tau = kDefaultClipTau;
  std::uint64_t seed = 0;
  KlDirection kl_direction = KlDirection::guidance_first;
  std::vector<int> hidden_dims = {256};
  int feature_dim = 256;

  void validate() const;
};

/// eta0 / (1 + alpha * theta)^beta for training progress theta in [0, 1].
double lr_multiplier(double theta, double eta0, double alpha, double beta);

/// Classic momentum: v <- momentum * v + g, p <- p - lr * v. Extractor layers use
/// `lr_extractor`, the classifier uses `lr_classifier`.
void sgd_step(Parameters& params, const Parameters& grads, Parameters& velocity,
              double lr_extractor, double lr_classifier, double momentum);

struct LossValues {
  double cls_source = 0;
  double abs_source = 0;
  double abs_target = 0;
  double abs_total = 0;
  double rel = 0;
  double pl = 0;
  double total = 0;
};

struct StepRecord {
  int epoch = 0;
  long step = 0;
  double theta = 0;
  LossValues losses;
};

struct EpochRecord {
  int epoch = 0;
  LossValues mean_losses;
  double source_accuracy = 0;
  std::optional<double> target_accuracy;
  std::optional<double> pseudo_label_accuracy;
  double lr_multiplier = 0;
  double lr_extractor = 0;
  double lr_classifier = 0;
  double wall_time_s = 0;
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::uint64_t guidance_hash_before = 0;
  std::uint64_t guidance_hash_after = 0;
};

struct TrainResult {
  UdaModel model;
  RunMetrics metrics;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run. Guidance is computed once from the frozen CLIP embeddings.
TrainResult train(const EmbeddingDataset& source, const EmbeddingDataset& target,
                  const PromptBank& bank, const TrainingConfig& config,
                  const EpochCallback& on_epoch = {});

/// Same, with caller-owned guidance caches (source role and target role).
TrainResult train(const EmbeddingDataset& source, const EmbeddingDataset& target,
                  const PromptBank& bank, const GuidanceCache& source_guidance,
                  const GuidanceCache& target_guidance, const TrainingConfig& config,
                  const EpochCallback& on_epoch = {});

/// Fraction of predictions equal to the dataset's ground truth.
double evaluate(const UdaModel& model, const EmbeddingDataset& dataset);

/// One JSON object per epoch, without wall time, so identical runs produce
/// identical lines.
std::string metrics_json_line(const EpochRecord& record);

}  // namespace clipdiv

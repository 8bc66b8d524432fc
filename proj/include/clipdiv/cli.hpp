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
#include <iosfwd>
#include <string>
#include <vector>

#include "clipdiv/trainer.hpp"

namespace clipdiv {

/// Entry point of the `clipdiv` tool. Returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Parameters a sweep may vary.
inline const std::vector<std::string> kSweepParams = {"lambda_abs", "lambda_rel", "lambda_pl",
                                                      "batch_size"};

struct SweepPlan {
  std::string param;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  TrainingConfig base;

  void validate() const;
};

struct SweepCell {
  double value = 0;
  std::uint64_t seed = 0;
  double target_accuracy = 0;
  double source_accuracy = 0;
  double final_total_loss = 0;
};

/// `base` with `param` set to `value` and the given seed.
TrainingConfig sweep_config(const SweepPlan& plan, double value, std::uint64_t seed);

/// Runs every (value, seed) cell on up to `workers` threads. Cells come back in
/// value-major, seed-minor order regardless of completion order; `on_cell` is
/// called (serialized) as each one finishes.
std::vector<SweepCell> run_sweep(const SweepPlan& plan, const EmbeddingDataset& source,
                                 const EmbeddingDataset& target, const PromptBank& bank,
                                 int workers,
                                 const std::function<void(const SweepCell&)>& on_cell = {});

/// One row per (value, seed) followed by a `mean` row per value.
std::string sweep_csv(const SweepPlan& plan, const std::vector<SweepCell>& cells);

/// Mean target accuracy per value, in value order.
std::vector<double> sweep_means(const SweepPlan& plan, const std::vector<SweepCell>& cells);

/// Worker cap from CLIPDIV_THREADS (unset or invalid: hardware concurrency).
int worker_cap();

}  // namespace clipdiv

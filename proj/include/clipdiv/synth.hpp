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

#include "clipdiv/dataset.hpp"
#include "clipdiv/prompt_bank.hpp"

namespace clipdiv {

/// Two-domain benchmark with a controllable domain shift and controllable
/// CLIP informativeness.
struct SynthConfig {
  int num_classes = 5;
  int dim_input = 16;
  int dim_clip = 32;
  int samples_per_domain = 500;
  double domain_gap = 3.0;     // length of the target input offset
  double clip_fidelity = 0.9;  // 1: image embedding is its class text embedding; 0: pure noise
  double noise_scale = 0.5;    // per-coordinate std of input noise
  std::uint64_t seed = 7;
  std::string source_domain = "source";
  std::string target_domain = "target";

  /// Throws InvalidArgument for out-of-range fields.
  void validate() const;
};

struct SynthBenchmark {
  EmbeddingDataset source;  // training labels in `labels`
  EmbeddingDataset target;  // ground truth only in `eval_labels`
  PromptBank prompts;
};

/// Deterministic in `cfg`. Every stored value is already representable in f32,
/// so a written and re-read benchmark equals the in-memory one exactly.
///
/// Inputs: class means are orthogonal with norm kClassMeanNorm; source samples
/// are mean + noise, target samples are mean + gap * v + noise for a fixed unit
/// direction v. Text: agnostic rows t_k are orthonormal; domain-specific rows add
/// a small per-domain direction. CLIP image embeddings are
/// normalize(fidelity * t_y + (1 - fidelity) * n + kImageDomainWeight * u_domain)
/// with n ~ N(0, (kClipNoiseScale * noise_scale)^2 I).
SynthBenchmark synth_generate(const SynthConfig& cfg);

inline constexpr double kClassMeanNorm = 2.0;
inline constexpr double kClipNoiseScale = 6.0;
inline constexpr double kTextDomainWeight = 0.3;
inline constexpr double kImageDomainWeight = 0.1;

}  // namespace clipdiv

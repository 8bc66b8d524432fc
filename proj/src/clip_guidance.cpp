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

#include "clipdiv/clip_guidance.hpp"

namespace clipdiv {

GuidanceDistribution zero_shot(const Matrix& image_embs, const PromptBank& bank, PromptSet set,
                               double tau) {
  return GuidanceDistribution{zero_shot_probs(image_embs, bank.text(set), tau), set, tau};
}

const GuidanceDistribution& GuidanceCache::at(PromptSet set) const {
  auto it = distributions.find(set);
  if (it == distributions.end()) {
    throw InvalidArgument("guidance cache has no '" + to_string(set) + "' distribution");
  }
  return it->second;
}

std::uint64_t GuidanceCache::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [set, dist] : distributions) {
    h ^= static_cast<std::uint64_t>(set) + 1;
    h *= 0x100000001b3ULL;
    h = hash_values(dist.probs, h);
  }
  return h;
}

GuidanceCache guidance_cache(const EmbeddingDataset& dataset, const PromptBank& bank, double tau,
                             DomainRole role) {
  if (dataset.clip_embs.rows() != dataset.inputs.rows() || dataset.clip_embs.cols() == 0) {
    throw InvalidArgument("guidance_cache: dataset '" + dataset.domain_name +
                          "' has no CLIP image embeddings");
  }
  if (dataset.clip_embs.cols() != bank.dim_clip()) {
    throw DimensionError("guidance_cache: dataset CLIP width " +
                         std::to_string(dataset.clip_embs.cols()) + " != prompt width " +
                         std::to_string(bank.dim_clip()));
  }
  GuidanceCache cache;
  const PromptSet specific =
      role == DomainRole::source ? PromptSet::source_specific : PromptSet::target_specific;
  for (PromptSet set : {PromptSet::agnostic, PromptSet::averaged, specific}) {
    cache.distributions.emplace(set, zero_shot(dataset.clip_embs, bank, set, tau));
  }
  return cache;
}

}  // namespace clipdiv

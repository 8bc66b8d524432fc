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

#include <optional>
#include <string>
#include <vector>

#include "clipdiv/numerics.hpp"

namespace clipdiv {

/// One domain's samples: model inputs, frozen CLIP image embeddings and labels.
///
/// `labels` are training labels (source domain). `eval_labels` hold ground truth
/// that must only be used for scoring (target domain); the training loop never
/// reads them.
struct EmbeddingDataset {
  std::string domain_name;
  std::vector<std::string> class_names;
  Matrix inputs;
  Matrix clip_embs;
  std::optional<Labels> labels;
  std::optional<Labels> eval_labels;

  Eigen::Index size() const { return inputs.rows(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  /// Whichever ground truth is present, training labels first.
  const Labels* ground_truth() const {
    if (labels) return &*labels;
    if (eval_labels) return &*eval_labels;
    return nullptr;
  }

  /// Throws InvalidArgument when row counts or label ranges are inconsistent.
  void validate() const;
};

}  // namespace clipdiv

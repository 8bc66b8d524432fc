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

/// "a {domain} photo of a {class}", or "a photo of a {class}" when no domain is
/// given. The article stays "a" for every class name.
std::vector<std::string> render_prompts(const std::vector<std::string>& class_names,
                                        const std::optional<std::string>& domain_name);

/// Row-wise mean of two K x d text-embedding blocks.
template <typename DerivedS, typename DerivedT>
MatrixX<typename DerivedS::Scalar> build_averaged(const Eigen::MatrixBase<DerivedS>& source_text,
                                                  const Eigen::MatrixBase<DerivedT>& target_text) {
  if (source_text.rows() != target_text.rows() || source_text.cols() != target_text.cols()) {
    throw DimensionError("build_averaged: shape mismatch");
  }
  return (source_text + target_text) / typename DerivedS::Scalar(2);
}

enum class PromptSet { agnostic, averaged, source_specific, target_specific };

std::string to_string(PromptSet set);
PromptSet prompt_set_from_string(const std::string& name);

/// Per-class text embeddings for every prompt set. The averaged set is always
/// derived from the source and target sets at construction.
class PromptBank {
 public:
  PromptBank(std::vector<std::string> class_names, Matrix source_text, Matrix target_text,
             Matrix agnostic_text, std::string source_domain = {}, std::string target_domain = {});

  int num_classes() const { return static_cast<int>(class_names_.size()); }
  Eigen::Index dim_clip() const { return agnostic_text_.cols(); }

  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::string& source_domain() const { return source_domain_; }
  const std::string& target_domain() const { return target_domain_; }

  const Matrix& source_text() const { return source_text_; }
  const Matrix& target_text() const { return target_text_; }
  const Matrix& agnostic_text() const { return agnostic_text_; }
  const Matrix& averaged_text() const { return averaged_text_; }
  const Matrix& text(PromptSet set) const;

 private:
  std::vector<std::string> class_names_;
  std::string source_domain_;
  std::string target_domain_;
  Matrix source_text_;
  Matrix target_text_;
  Matrix agnostic_text_;
  Matrix averaged_text_;
};

}  // namespace clipdiv

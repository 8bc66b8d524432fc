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

#include "clipdiv/prompt_bank.hpp"

#include <set>

namespace clipdiv {

std::vector<std::string> render_prompts(const std::vector<std::string>& class_names,
                                        const std::optional<std::string>& domain_name) {
  if (class_names.empty()) throw InvalidArgument("render_prompts: no class names");
  std::set<std::string> seen;
  std::vector<std::string> prompts;
  prompts.reserve(class_names.size());
  for (const auto& name : class_names) {
    if (!seen.insert(name).second) {
      throw InvalidArgument("render_prompts: duplicate class name '" + name + "'");
    }
    if (domain_name) {
      prompts.push_back("a " + *domain_name + " photo of a " + name);
    } else {
      prompts.push_back("a photo of a " + name);
    }
  }
  return prompts;
}

std::string to_string(PromptSet set) {
  switch (set) {
    case PromptSet::agnostic:
      return "agnostic";
    case PromptSet::averaged:
      return "averaged";
    case PromptSet::source_specific:
      return "source";
    case PromptSet::target_specific:
      return "target";
  }
  return "unknown";
}

PromptSet prompt_set_from_string(const std::string& name) {
  if (name == "agnostic") return PromptSet::agnostic;
  if (name == "averaged") return PromptSet::averaged;
  if (name == "source" || name == "source_specific") return PromptSet::source_specific;
  if (name == "target" || name == "target_specific") return PromptSet::target_specific;
  throw InvalidArgument("unknown prompt set '" + name + "'");
}

PromptBank::PromptBank(std::vector<std::string> class_names, Matrix source_text,
                       Matrix target_text, Matrix agnostic_text, std::string source_domain,
                       std::string target_domain)
    : class_names_(std::move(class_names)),
      source_domain_(std::move(source_domain)),
      target_domain_(std::move(target_domain)),
      source_text_(std::move(source_text)),
      target_text_(std::move(target_text)),
      agnostic_text_(std::move(agnostic_text)) {
  const auto k = static_cast<Eigen::Index>(class_names_.size());
  if (k == 0) throw InvalidArgument("PromptBank: no classes");
  std::set<std::string> unique(class_names_.begin(), class_names_.end());
  if (static_cast<Eigen::Index>(unique.size()) != k) {
    throw InvalidArgument("PromptBank: duplicate class names");
  }
  const Eigen::Index d = agnostic_text_.cols();
  if (d == 0) throw InvalidArgument("PromptBank: zero embedding width");
  for (const Matrix* m : {&source_text_, &target_text_, &agnostic_text_}) {
    if (m->rows() != k || m->cols() != d) {
      throw DimensionError("PromptBank: every text block must be " + std::to_string(k) + "x" +
                           std::to_string(d));
    }
  }
  averaged_text_ = build_averaged(source_text_, target_text_);
}

const Matrix& PromptBank::text(PromptSet set) const {
  switch (set) {
    case PromptSet::agnostic:
      return agnostic_text_;
    case PromptSet::averaged:
      return averaged_text_;
    case PromptSet::source_specific:
      return source_text_;
    case PromptSet::target_specific:
      return target_text_;
  }
  throw InvalidArgument("PromptBank::text: bad prompt set");
}

}  // namespace clipdiv

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

#include "clipdiv/synth.hpp"

#include <cmath>

#include "clipdiv/dataio.hpp"

namespace clipdiv {

namespace {

Vector unit_gaussian(Rng& rng, Eigen::Index dim) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
  return v / v.norm();
}

/// `count` unit rows, mutually orthogonal when count <= dim (modified Gram-Schmidt).
Matrix random_unit_rows(Rng& rng, int count, int dim) {
  Matrix rows(count, dim);
  for (int k = 0; k < count; ++k) {
    Vector v = unit_gaussian(rng, dim);
    if (k < dim) {
      for (int j = 0; j < k; ++j) v -= rows.row(j).dot(v) * rows.row(j).transpose();
    }
    rows.row(k) = (v / v.norm()).transpose();
  }
  return rows;
}

Labels balanced_labels(Rng& rng, int n, int k) {
  Labels labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % k;
  rng.shuffle(labels);
  return labels;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 1 || dim_input < 1 || dim_clip < 1 || samples_per_domain < 1) {
    throw InvalidArgument("synth: counts and dimensions must be >= 1");
  }
  if (dim_clip < num_classes) {
    throw InvalidArgument("synth: dim_clip (" + std::to_string(dim_clip) +
                          ") must be >= num_classes (" + std::to_string(num_classes) +
                          ") for orthonormal class text embeddings");
  }
  if (!(clip_fidelity >= 0.0 && clip_fidelity <= 1.0)) {
    throw InvalidArgument("synth: clip_fidelity must lie in [0, 1]");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale) || !std::isfinite(domain_gap)) {
    throw InvalidArgument("synth: noise_scale must be >= 0 and domain_gap finite");
  }
  if (source_domain == target_domain) {
    throw InvalidArgument("synth: source and target domain names must differ");
  }
}

SynthBenchmark synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int k = cfg.num_classes;
  const int n = cfg.samples_per_domain;

  const Matrix class_means = kClassMeanNorm * random_unit_rows(rng, k, cfg.dim_input);
  const Vector shift = unit_gaussian(rng, cfg.dim_input);
  const Matrix text = random_unit_rows(rng, k, cfg.dim_clip);
  const Vector source_dir = unit_gaussian(rng, cfg.dim_clip);
  const Vector target_dir = unit_gaussian(rng, cfg.dim_clip);

  std::vector<std::string> class_names;
  for (int c = 0; c < k; ++c) class_names.push_back("class_" + std::to_string(c));

  auto make_domain = [&](const std::string& name, double gap, const Vector& clip_dir) {
    EmbeddingDataset ds;
    ds.domain_name = name;
    ds.class_names = class_names;
    const Labels labels = balanced_labels(rng, n, k);
    ds.inputs.resize(n, cfg.dim_input);
    ds.clip_embs.resize(n, cfg.dim_clip);
    for (int i = 0; i < n; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      Vector x = class_means.row(y).transpose() + gap * shift;
      for (int j = 0; j < cfg.dim_input; ++j) x(j) += cfg.noise_scale * rng.normal();
      ds.inputs.row(i) = x.transpose();

      Vector e = cfg.clip_fidelity * text.row(y).transpose() + kImageDomainWeight * clip_dir;
      for (int j = 0; j < cfg.dim_clip; ++j) {
        e(j) += (1.0 - cfg.clip_fidelity) * kClipNoiseScale * cfg.noise_scale * rng.normal();
      }
      ds.clip_embs.row(i) = (e / e.norm()).transpose();
    }
    ds.inputs = round_to_f32(ds.inputs);
    ds.clip_embs = round_to_f32(ds.clip_embs);
    return std::make_pair(std::move(ds), labels);
  };

  auto [source, source_labels] = make_domain(cfg.source_domain, 0.0, source_dir);
  auto [target, target_labels] = make_domain(cfg.target_domain, cfg.domain_gap, target_dir);
  source.labels = std::move(source_labels);
  target.eval_labels = std::move(target_labels);

  Matrix source_text = text.rowwise() + kTextDomainWeight * source_dir.transpose();
  Matrix target_text = text.rowwise() + kTextDomainWeight * target_dir.transpose();
  source_text.rowwise().normalize();
  target_text.rowwise().normalize();
  PromptBank prompts(class_names, round_to_f32(source_text), round_to_f32(target_text),
                     round_to_f32(text), cfg.source_domain, cfg.target_domain);
  return SynthBenchmark{std::move(source), std::move(target), std::move(prompts)};
}

}  // namespace clipdiv

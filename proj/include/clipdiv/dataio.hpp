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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clipdiv/dataset.hpp"
#include "clipdiv/prompt_bank.hpp"
#include "clipdiv/uda_model.hpp"

// On-disk layout. Every directory holds a UTF-8 JSON `manifest.json` plus raw
// blobs: little-endian, row-major, no headers. Embeddings are f32 on disk and
// f64 in memory; labels are u32; checkpoint parameters are f64. The manifest
// field names are documented in docs/FORMAT.md.

namespace clipdiv {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

enum class BlobType { f32, f64, u32 };

std::string to_string(BlobType type);
std::size_t element_size(BlobType type);

struct BlobLayout {
  std::string file;
  BlobType dtype = BlobType::f32;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t bytes = 0;
};

/// Parsed and validated manifest. Validation checks every declared count and
/// byte length, and that each blob file exists with exactly that size, before
/// any blob is read.
struct Manifest {
  std::string kind;
  std::map<std::string, BlobLayout> blobs;
  std::string raw_json;
};

Manifest read_manifest(const std::filesystem::path& dir, const std::string& expected_kind);

void write_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& dir);
EmbeddingDataset read_dataset(const std::filesystem::path& dir);

/// Writes the source, target and agnostic text blocks; the averaged block is
/// recomputed on load and never stored.
void write_prompts(const PromptBank& bank, const std::filesystem::path& dir);
PromptBank read_prompts(const std::filesystem::path& dir);

void write_checkpoint(const UdaModel& model, const std::filesystem::path& dir,
                      const std::vector<std::string>& class_names = {});
UdaModel read_checkpoint(const std::filesystem::path& dir);

/// Throws ConfigError when a dataset and a prompt bank disagree on the classes
/// or the CLIP width.
void check_pairing(const EmbeddingDataset& dataset, const PromptBank& bank);

/// Rounds every entry to the nearest f32, the precision kept on disk.
Matrix round_to_f32(const Matrix& m);

}  // namespace clipdiv

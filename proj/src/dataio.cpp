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

#include "clipdiv/dataio.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace clipdiv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void format_error(const fs::path& file, const std::string& what) {
  throw FormatError(file.string() + ": " + what);
}

BlobType blob_type_from_string(const std::string& name, const fs::path& manifest) {
  if (name == "f32") return BlobType::f32;
  if (name == "f64") return BlobType::f64;
  if (name == "u32") return BlobType::u32;
  format_error(manifest, "unknown dtype '" + name + "'");
}

template <typename T>
T require(const json& j, const char* key, const fs::path& manifest) {
  if (!j.contains(key)) format_error(manifest, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    format_error(manifest, std::string("field '") + key + "' has the wrong type: " + e.what());
  }
}

std::uint64_t require_count(const json& j, const char* key, const fs::path& manifest,
                            std::uint64_t minimum) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    format_error(manifest, std::string("field '") + key + "' must be an integer");
  }
  const auto value = j.at(key).get<std::int64_t>();
  if (value < static_cast<std::int64_t>(minimum)) {
    format_error(manifest, std::string("field '") + key + "' must be >= " +
                               std::to_string(minimum) + ", got " + std::to_string(value));
  }
  return static_cast<std::uint64_t>(value);
}

bool plain_file_name(const std::string& name) {
  return !name.empty() && name != "." && name != ".." &&
         name.find('/') == std::string::npos && name.find('\\') == std::string::npos;
}

json blob_json(const BlobLayout& b) {
  return json{{"file", b.file},
              {"dtype", to_string(b.dtype)},
              {"rows", b.rows},
              {"cols", b.cols},
              {"bytes", b.bytes}};
}

BlobLayout make_blob(std::string file, BlobType type, std::uint64_t rows, std::uint64_t cols) {
  return BlobLayout{std::move(file), type, rows, cols, rows * cols * element_size(type)};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) format_error(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_matrix_blob(const fs::path& dir, const BlobLayout& layout, const Matrix& m) {
  std::string bytes;
  bytes.reserve(layout.bytes);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (layout.dtype == BlobType::f32) {
        put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))));
      } else {
        put_u64(bytes, std::bit_cast<std::uint64_t>(m(i, j)));
      }
    }
  }
  write_file(dir / layout.file, bytes);
}

void write_labels_blob(const fs::path& dir, const BlobLayout& layout, const Labels& labels) {
  std::string bytes;
  bytes.reserve(layout.bytes);
  for (int y : labels) put_u32(bytes, static_cast<std::uint32_t>(y));
  write_file(dir / layout.file, bytes);
}

Matrix read_matrix_blob(const fs::path& dir, const BlobLayout& layout) {
  const fs::path path = dir / layout.file;
  const std::string bytes = read_file(path);
  if (bytes.size() != layout.bytes) {
    format_error(path, "expected " + std::to_string(layout.bytes) + " bytes, read " +
                           std::to_string(bytes.size()));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Matrix m(static_cast<Eigen::Index>(layout.rows), static_cast<Eigen::Index>(layout.cols));
  const std::size_t width = element_size(layout.dtype);
  std::size_t offset = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, offset += width) {
      const double v = layout.dtype == BlobType::f32
                           ? static_cast<double>(std::bit_cast<float>(get_u32(p + offset)))
                           : std::bit_cast<double>(get_u64(p + offset));
      if (!std::isfinite(v)) {
        format_error(path, "non-finite value at byte offset " + std::to_string(offset));
      }
      m(i, j) = v;
    }
  }
  return m;
}

Labels read_labels_blob(const fs::path& dir, const BlobLayout& layout, int num_classes) {
  const fs::path path = dir / layout.file;
  const std::string bytes = read_file(path);
  if (bytes.size() != layout.bytes) {
    format_error(path, "expected " + std::to_string(layout.bytes) + " bytes, read " +
                           std::to_string(bytes.size()));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Labels labels(layout.rows);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint32_t y = get_u32(p + 4 * i);
    if (y >= static_cast<std::uint32_t>(num_classes)) {
      format_error(path, "label " + std::to_string(y) + " at byte offset " +
                             std::to_string(4 * i) + " is outside [0, " +
                             std::to_string(num_classes) + ")");
    }
    labels[i] = static_cast<int>(y);
  }
  return labels;
}

json base_manifest(const std::string& kind) {
  return json{{"format", "clipdiv"}, {"version", kFormatVersion}, {"kind", kind}};
}

void write_manifest(const fs::path& dir, const json& manifest) {
  write_file(dir / kManifestName, manifest.dump(2) + "\n");
}

std::vector<std::string> read_class_names(const json& j, const fs::path& manifest) {
  auto names = require<std::vector<std::string>>(j, "class_names", manifest);
  if (names.empty()) format_error(manifest, "class_names is empty");
  return names;
}

/// The declared shape of a blob must equal what the manifest's counts imply.
void expect_shape(const Manifest& m, const std::string& name, BlobType type, std::uint64_t rows,
                  std::uint64_t cols, const fs::path& manifest) {
  const auto it = m.blobs.find(name);
  if (it == m.blobs.end()) format_error(manifest, "missing blob '" + name + "'");
  const BlobLayout& b = it->second;
  if (b.dtype != type) {
    format_error(manifest, "blob '" + name + "' must have dtype " + to_string(type));
  }
  if (b.rows != rows || b.cols != cols) {
    format_error(manifest, "blob '" + name + "' is declared " + std::to_string(b.rows) + "x" +
                               std::to_string(b.cols) + ", expected " + std::to_string(rows) +
                               "x" + std::to_string(cols));
  }
}

}  // namespace

std::string to_string(BlobType type) {
  switch (type) {
    case BlobType::f32:
      return "f32";
    case BlobType::f64:
      return "f64";
    case BlobType::u32:
      return "u32";
  }
  return "?";
}

std::size_t element_size(BlobType type) { return type == BlobType::f64 ? 8 : 4; }

Matrix round_to_f32(const Matrix& m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void EmbeddingDataset::validate() const {
  if (class_names.empty()) throw InvalidArgument("dataset '" + domain_name + "' has no classes");
  if (inputs.rows() != clip_embs.rows()) {
    throw InvalidArgument("dataset '" + domain_name + "': inputs have " +
                          std::to_string(inputs.rows()) + " rows but CLIP embeddings have " +
                          std::to_string(clip_embs.rows()));
  }
  for (const auto* labs : {labels ? &*labels : nullptr, eval_labels ? &*eval_labels : nullptr}) {
    if (labs == nullptr) continue;
    if (static_cast<Eigen::Index>(labs->size()) != inputs.rows()) {
      throw InvalidArgument("dataset '" + domain_name + "': label count differs from sample count");
    }
    for (int y : *labs) {
      if (y < 0 || y >= num_classes()) {
        throw InvalidArgument("dataset '" + domain_name + "': label " + std::to_string(y) +
                              " out of range");
      }
    }
  }
}

Manifest read_manifest(const fs::path& dir, const std::string& expected_kind) {
  const fs::path path = dir / kManifestName;
  if (!fs::exists(path)) format_error(path, "manifest not found");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    format_error(path, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) format_error(path, "manifest must be a JSON object");
  if (require<std::string>(j, "format", path) != "clipdiv") {
    format_error(path, "not a clipdiv manifest");
  }
  const auto version = require_count(j, "version", path, 0);
  if (version != kFormatVersion) {
    format_error(path, "unsupported version " + std::to_string(version));
  }
  Manifest m;
  m.kind = require<std::string>(j, "kind", path);
  if (m.kind != expected_kind) {
    format_error(path, "expected kind '" + expected_kind + "', found '" + m.kind + "'");
  }
  if (!j.contains("blobs") || !j.at("blobs").is_object()) {
    format_error(path, "missing 'blobs' object");
  }
  for (const auto& [name, b] : j.at("blobs").items()) {
    if (!b.is_object()) format_error(path, "blob '" + name + "' must be an object");
    BlobLayout layout;
    layout.file = require<std::string>(b, "file", path);
    if (!plain_file_name(layout.file)) {
      format_error(path, "blob '" + name + "' file name must be a plain relative name");
    }
    layout.dtype = blob_type_from_string(require<std::string>(b, "dtype", path), path);
    layout.rows = require_count(b, "rows", path, 1);
    layout.cols = require_count(b, "cols", path, 1);
    layout.bytes = require_count(b, "bytes", path, 0);
    if (layout.bytes != layout.rows * layout.cols * element_size(layout.dtype)) {
      format_error(path, "blob '" + name + "' declares " + std::to_string(layout.bytes) +
                             " bytes but rows x cols x " +
                             std::to_string(element_size(layout.dtype)) + " = " +
                             std::to_string(layout.rows * layout.cols * element_size(layout.dtype)));
    }
    m.blobs.emplace(name, std::move(layout));
  }
  m.raw_json = j.dump();

  // Kind-specific counts, still before touching any blob.
  if (m.kind == "dataset") {
    const auto classes = read_class_names(j, path);
    const auto n = require_count(j, "num_samples", path, 1);
    const auto d_in = require_count(j, "dim_input", path, 1);
    const auto d_clip = require_count(j, "dim_clip", path, 1);
    expect_shape(m, "inputs", BlobType::f32, n, d_in, path);
    expect_shape(m, "clip", BlobType::f32, n, d_clip, path);
    for (const char* opt : {"labels", "eval_labels"}) {
      if (m.blobs.count(opt)) expect_shape(m, opt, BlobType::u32, n, 1, path);
    }
    for (const auto& [name, layout] : m.blobs) {
      if (name != "inputs" && name != "clip" && name != "labels" && name != "eval_labels") {
        format_error(path, "unknown blob '" + name + "'");
      }
    }
  } else if (m.kind == "prompts") {
    const auto classes = read_class_names(j, path);
    const auto d_clip = require_count(j, "dim_clip", path, 1);
    for (const char* set : {"source", "target", "agnostic"}) {
      expect_shape(m, set, BlobType::f32, classes.size(), d_clip, path);
    }
    if (m.blobs.size() != 3) format_error(path, "prompt manifests hold exactly three blobs");
  } else if (m.kind == "checkpoint") {
    const auto dims = require<std::vector<int>>(j, "layer_dims", path);
    if (dims.empty()) format_error(path, "layer_dims is empty");
    for (int d : dims)
      if (d < 1) format_error(path, "layer_dims entries must be >= 1");
    const auto k = require_count(j, "num_classes", path, 1);
    activation_from_string(require<std::string>(j, "activation", path));
    std::uint64_t count = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      count += static_cast<std::uint64_t>(dims[l] + 1) * static_cast<std::uint64_t>(dims[l + 1]);
    count += static_cast<std::uint64_t>(dims.back() + 1) * k;
    expect_shape(m, "params", BlobType::f64, 1, count, path);
  } else {
    format_error(path, "unknown kind '" + m.kind + "'");
  }

  for (const auto& [name, layout] : m.blobs) {
    const fs::path blob = dir / layout.file;
    std::error_code ec;
    const auto size = fs::file_size(blob, ec);
    if (ec) format_error(blob, "blob '" + name + "' is missing");
    if (size != layout.bytes) {
      format_error(blob, "blob '" + name + "' is " + std::to_string(size) + " bytes, manifest declares " +
                             std::to_string(layout.bytes) +
                             (size < layout.bytes ? " (truncated at offset " + std::to_string(size) + ")"
                                                : " (trailing data at offset " +
                                                      std::to_string(layout.bytes) + ")"));
    }
  }
  return m;
}

void write_dataset(const EmbeddingDataset& dataset, const fs::path& dir) {
  dataset.validate();
  if (dataset.size() == 0) throw InvalidArgument("write_dataset: empty dataset");
  fs::create_directories(dir);
  const auto n = static_cast<std::uint64_t>(dataset.size());
  json manifest = base_manifest("dataset");
  manifest["domain"] = dataset.domain_name;
  manifest["class_names"] = dataset.class_names;
  manifest["num_samples"] = n;
  manifest["dim_input"] = dataset.inputs.cols();
  manifest["dim_clip"] = dataset.clip_embs.cols();

  json blobs = json::object();
  const BlobLayout inputs = make_blob("inputs.f32", BlobType::f32, n, dataset.inputs.cols());
  const BlobLayout clip = make_blob("clip.f32", BlobType::f32, n, dataset.clip_embs.cols());
  write_matrix_blob(dir, inputs, dataset.inputs);
  write_matrix_blob(dir, clip, dataset.clip_embs);
  blobs["inputs"] = blob_json(inputs);
  blobs["clip"] = blob_json(clip);
  if (dataset.labels) {
    const BlobLayout layout = make_blob("labels.u32", BlobType::u32, n, 1);
    write_labels_blob(dir, layout, *dataset.labels);
    blobs["labels"] = blob_json(layout);
  }
  if (dataset.eval_labels) {
    const BlobLayout layout = make_blob("eval_labels.u32", BlobType::u32, n, 1);
    write_labels_blob(dir, layout, *dataset.eval_labels);
    blobs["eval_labels"] = blob_json(layout);
  }
  manifest["blobs"] = blobs;
  write_manifest(dir, manifest);
}

EmbeddingDataset read_dataset(const fs::path& dir) {
  const Manifest m = read_manifest(dir, "dataset");
  const json j = json::parse(m.raw_json);
  EmbeddingDataset ds;
  ds.domain_name = j.value("domain", std::string{});
  ds.class_names = j.at("class_names").get<std::vector<std::string>>();
  ds.inputs = read_matrix_blob(dir, m.blobs.at("inputs"));
  ds.clip_embs = read_matrix_blob(dir, m.blobs.at("clip"));
  if (m.blobs.count("labels")) ds.labels = read_labels_blob(dir, m.blobs.at("labels"), ds.num_classes());
  if (m.blobs.count("eval_labels"))
    ds.eval_labels = read_labels_blob(dir, m.blobs.at("eval_labels"), ds.num_classes());
  return ds;
}

void write_prompts(const PromptBank& bank, const fs::path& dir) {
  fs::create_directories(dir);
  const auto k = static_cast<std::uint64_t>(bank.num_classes());
  const auto d = static_cast<std::uint64_t>(bank.dim_clip());
  json manifest = base_manifest("prompts");
  manifest["class_names"] = bank.class_names();
  manifest["dim_clip"] = d;
  manifest["source_domain"] = bank.source_domain();
  manifest["target_domain"] = bank.target_domain();
  manifest["prompts"] = {
      {"source", render_prompts(bank.class_names(), bank.source_domain())},
      {"target", render_prompts(bank.class_names(), bank.target_domain())},
      {"agnostic", render_prompts(bank.class_names(), std::nullopt)},
  };
  json blobs = json::object();
  const std::pair<const char*, const Matrix*> sets[] = {{"source", &bank.source_text()},
                                                        {"target", &bank.target_text()},
                                                        {"agnostic", &bank.agnostic_text()}};
  for (const auto& [name, matrix] : sets) {
    const BlobLayout layout = make_blob(std::string(name) + ".f32", BlobType::f32, k, d);
    write_matrix_blob(dir, layout, *matrix);
    blobs[name] = blob_json(layout);
  }
  manifest["blobs"] = blobs;
  write_manifest(dir, manifest);
}

PromptBank read_prompts(const fs::path& dir) {
  const Manifest m = read_manifest(dir, "prompts");
  const json j = json::parse(m.raw_json);
  return PromptBank(j.at("class_names").get<std::vector<std::string>>(),
                    read_matrix_blob(dir, m.blobs.at("source")),
                    read_matrix_blob(dir, m.blobs.at("target")),
                    read_matrix_blob(dir, m.blobs.at("agnostic")),
                    j.value("source_domain", std::string{}), j.value("target_domain", std::string{}));
}

void write_checkpoint(const UdaModel& model, const fs::path& dir,
                      const std::vector<std::string>& class_names) {
  fs::create_directories(dir);
  const Vector flat = model.params().flatten();
  json manifest = base_manifest("checkpoint");
  manifest["layer_dims"] = model.layer_dims();
  manifest["num_classes"] = model.num_classes();
  manifest["activation"] = to_string(model.activation());
  if (!class_names.empty()) manifest["class_names"] = class_names;
  const BlobLayout layout =
      make_blob("params.f64", BlobType::f64, 1, static_cast<std::uint64_t>(flat.size()));
  write_matrix_blob(dir, layout, Matrix(flat.transpose()));
  manifest["blobs"] = {{"params", blob_json(layout)}};
  write_manifest(dir, manifest);
}

UdaModel read_checkpoint(const fs::path& dir) {
  const Manifest m = read_manifest(dir, "checkpoint");
  const json j = json::parse(m.raw_json);
  const auto dims = j.at("layer_dims").get<std::vector<int>>();
  const int k = j.at("num_classes").get<int>();
  UdaModel model = UdaModel::init(dims, k, 0);
  const Matrix flat = read_matrix_blob(dir, m.blobs.at("params"));
  model.params().assign_flat(flat.row(0).transpose());
  return model;
}

void check_pairing(const EmbeddingDataset& dataset, const PromptBank& bank) {
  if (dataset.num_classes() != bank.num_classes()) {
    throw ConfigError("dataset '" + dataset.domain_name + "' has " +
                      std::to_string(dataset.num_classes()) + " classes, prompts have " +
                      std::to_string(bank.num_classes()));
  }
  if (dataset.class_names != bank.class_names()) {
    throw ConfigError("dataset '" + dataset.domain_name +
                      "' lists its classes differently from the prompt bank");
  }
  if (dataset.clip_embs.cols() != bank.dim_clip()) {
    throw ConfigError("dataset '" + dataset.domain_name + "' CLIP width " +
                      std::to_string(dataset.clip_embs.cols()) + " != prompt width " +
                      std::to_string(bank.dim_clip()));
  }
}

}  // namespace clipdiv

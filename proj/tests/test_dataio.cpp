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

#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "clipdiv/dataio.hpp"
#include "clipdiv/synth.hpp"
#include "clipdiv/trainer.hpp"
#include "fixtures.hpp"

using namespace clipdiv;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

SynthBenchmark tiny() {
  SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.dim_input = 4;
  cfg.dim_clip = 5;
  cfg.samples_per_domain = 12;
  return synth_generate(cfg);
}

json load(const fs::path& file) {
  std::ifstream in(file);
  return json::parse(in);
}

void save(const fs::path& file, const json& j) {
  std::ofstream out(file, std::ios::trunc);
  out << j.dump(2);
}

template <typename T>
void write_raw(const fs::path& file, const std::vector<T>& values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  for (T v : values) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
}

std::string format_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "<no FormatError>";
}

}  // namespace

TEST_CASE("dataset round-trip is exact at f32 precision") {
  fixtures::TempDir dir("ds_roundtrip");
  const auto bench = tiny();
  write_dataset(bench.source, dir / "source");
  write_dataset(bench.target, dir / "target");
  const auto s = read_dataset(dir / "source");
  const auto t = read_dataset(dir / "target");
  CHECK(s.inputs == bench.source.inputs);
  CHECK(s.clip_embs == bench.source.clip_embs);
  CHECK(s.labels == bench.source.labels);
  CHECK_FALSE(s.eval_labels.has_value());
  CHECK(t.eval_labels == bench.target.eval_labels);
  CHECK_FALSE(t.labels.has_value());
  CHECK(s.class_names == bench.source.class_names);
  CHECK(s.domain_name == bench.source.domain_name);

  // Values that are not f32-representable come back rounded.
  EmbeddingDataset fine = bench.source;
  fine.inputs(0, 0) = 0.1;
  write_dataset(fine, dir / "fine");
  CHECK(read_dataset(dir / "fine").inputs(0, 0) == static_cast<double>(0.1f));
  CHECK(round_to_f32(fine.inputs)(0, 0) == static_cast<double>(0.1f));

  const json m = load(dir / "source" / "manifest.json");
  CHECK(m["format"] == "clipdiv");
  CHECK(m["version"] == 1);
  CHECK(m["kind"] == "dataset");
  CHECK(m["blobs"]["inputs"]["bytes"] == 12 * 4 * 4);
  CHECK(fs::file_size(dir / "source" / "inputs.f32") == 12 * 4 * 4);
  CHECK(fs::file_size(dir / "source" / "labels.u32") == 12 * 4);
}

TEST_CASE("blobs are raw little-endian without headers") {
  fixtures::TempDir dir("ds_bytes");
  EmbeddingDataset ds;
  ds.domain_name = "d";
  ds.class_names = {"a", "b"};
  ds.inputs = Matrix(1, 2);
  ds.inputs << 1.0, -2.5;
  ds.clip_embs = Matrix(1, 1);
  ds.clip_embs << 0.5;
  ds.labels = Labels{1};
  write_dataset(ds, dir.path());
  std::ifstream in(dir / "inputs.f32", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  // 1.0f = 0x3f800000, -2.5f = 0xc0200000
  const unsigned char expected[8] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
  CHECK(std::memcmp(bytes, expected, 8) == 0);
  std::ifstream lab(dir / "labels.u32", std::ios::binary);
  unsigned char lb[4];
  lab.read(reinterpret_cast<char*>(lb), 4);
  CHECK((lb[0] == 1 && lb[1] == 0 && lb[2] == 0 && lb[3] == 0));
}

TEST_CASE("malformed dataset manifests are rejected") {
  fixtures::TempDir dir("ds_bad");
  const auto bench = tiny();
  const fs::path ds = dir / "ds";
  auto reset = [&] {
    fs::remove_all(ds);
    write_dataset(bench.source, ds);
  };

  SUBCASE("truncated blob names the blob and offset") {
    reset();
    fs::resize_file(ds / "clip.f32", 100);
    const std::string msg = format_message([&] { read_dataset(ds); });
    CHECK(msg.find("clip") != std::string::npos);
    CHECK(msg.find("offset 100") != std::string::npos);
  }
  SUBCASE("trailing bytes") {
    reset();
    std::ofstream(ds / "inputs.f32", std::ios::app | std::ios::binary) << "xx";
    CHECK(format_message([&] { read_dataset(ds); }).find("trailing") != std::string::npos);
  }
  SUBCASE("dim_clip of zero is rejected before any blob is read") {
    reset();
    json m = load(ds / "manifest.json");
    m["dim_clip"] = 0;
    save(ds / "manifest.json", m);
    fs::remove(ds / "clip.f32");
    CHECK(format_message([&] { read_dataset(ds); }).find("dim_clip") != std::string::npos);
  }
  SUBCASE("missing blob") {
    reset();
    fs::remove(ds / "labels.u32");
    CHECK(format_message([&] { read_dataset(ds); }).find("labels") != std::string::npos);
  }
  SUBCASE("unknown version") {
    reset();
    json m = load(ds / "manifest.json");
    m["version"] = 2;
    save(ds / "manifest.json", m);
    CHECK(format_message([&] { read_dataset(ds); }).find("version") != std::string::npos);
  }
  SUBCASE("declared shape disagrees with counts") {
    reset();
    json m = load(ds / "manifest.json");
    m["num_samples"] = 11;
    save(ds / "manifest.json", m);
    CHECK_THROWS_AS(read_dataset(ds), FormatError);
  }
  SUBCASE("wrong kind") {
    reset();
    CHECK_THROWS_AS(read_prompts(ds), FormatError);
  }
  SUBCASE("label out of range") {
    reset();
    std::vector<std::uint32_t> labels(12, 0);
    labels[5] = 3;
    write_raw(ds / "labels.u32", labels);
    const std::string msg = format_message([&] { read_dataset(ds); });
    CHECK(msg.find("offset 20") != std::string::npos);
  }
  SUBCASE("blob path escaping the directory") {
    reset();
    json m = load(ds / "manifest.json");
    m["blobs"]["inputs"]["file"] = "../inputs.f32";
    save(ds / "manifest.json", m);
    CHECK_THROWS_AS(read_dataset(ds), FormatError);
  }
  SUBCASE("invalid JSON and missing manifest") {
    reset();
    std::ofstream(ds / "manifest.json", std::ios::trunc) << "{ not json";
    CHECK_THROWS_AS(read_dataset(ds), FormatError);
    CHECK_THROWS_AS(read_dataset(dir / "nowhere"), FormatError);
  }
}

TEST_CASE("prompt bank round-trip") {
  fixtures::TempDir dir("prompts");
  const auto bench = tiny();
  write_prompts(bench.prompts, dir.path());
  const auto p = read_prompts(dir.path());
  CHECK(p.source_text() == bench.prompts.source_text());
  CHECK(p.target_text() == bench.prompts.target_text());
  CHECK(p.agnostic_text() == bench.prompts.agnostic_text());
  CHECK(p.averaged_text() == (p.source_text() + p.target_text()) / 2.0);
  CHECK(p.class_names() == bench.prompts.class_names());
  CHECK(p.source_domain() == "source");
  CHECK(p.target_domain() == "target");
  CHECK_FALSE(fs::exists(dir / "averaged.f32"));
  const json m = load(dir / "manifest.json");
  CHECK(m["prompts"]["agnostic"][0] == "a photo of a class_0");
  CHECK(m["prompts"]["target"][2] == "a target photo of a class_2");

  json bad = m;
  bad["blobs"].erase("agnostic");
  save(dir / "manifest.json", bad);
  CHECK_THROWS_AS(read_prompts(dir.path()), FormatError);
}

TEST_CASE("pairing checks") {
  const auto bench = tiny();
  CHECK_NOTHROW(check_pairing(bench.source, bench.prompts));
  EmbeddingDataset ds = bench.source;
  ds.class_names = {"x", "y"};
  CHECK_THROWS_AS(check_pairing(ds, bench.prompts), ConfigError);
  ds.class_names = {"class_1", "class_0", "class_2"};
  CHECK_THROWS_AS(check_pairing(ds, bench.prompts), ConfigError);
  ds = bench.source;
  ds.clip_embs = Matrix::Ones(12, 4);
  CHECK_THROWS_AS(check_pairing(ds, bench.prompts), ConfigError);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  fixtures::TempDir dir("ckpt");
  Rng rng(3);
  auto model = UdaModel::init({4, 7, 5}, 3, 11);
  Vector flat = model.params().flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += 1e-3 * rng.normal();
  model.params().assign_flat(flat);
  write_checkpoint(model, dir.path(), {"a", "b", "c"});
  const auto back = read_checkpoint(dir.path());
  CHECK(back.layer_dims() == model.layer_dims());
  CHECK(back.num_classes() == 3);
  CHECK(back.params().flatten() == flat);

  json m = load(dir / "manifest.json");
  m["layer_dims"] = std::vector<int>{4, 7, 6};
  save(dir / "manifest.json", m);
  CHECK_THROWS_AS(read_checkpoint(dir.path()), FormatError);
}

TEST_CASE("hand-written export-style dataset loads and trains") {
  // What an external exporter produces: two classes, four images per domain,
  // model inputs equal to the CLIP image embeddings, target ground truth kept
  // as evaluation-only labels.
  fixtures::TempDir dir("export");
  const std::vector<float> clip = {1, 0, 0.1f, 0.9f, 0.1f, 0, 0, 1, 0.1f, 0.1f, 0.9f, 0};
  const std::vector<float> text = {1, 0, 0, 0, 1, 0};
  const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
  auto write_domain = [&](const std::string& name, const std::string& label_blob) {
    const fs::path d = dir / name;
    fs::create_directories(d);
    std::vector<float> x(clip);
    write_raw(d / "inputs.f32", x);
    write_raw(d / "clip.f32", x);
    write_raw(d / (label_blob + ".u32"), labels);
    json m = {{"format", "clipdiv"},
              {"version", 1},
              {"kind", "dataset"},
              {"domain", name},
              {"class_names", {"bike", "mug"}},
              {"num_samples", 4},
              {"dim_input", 3},
              {"dim_clip", 3},
              {"blobs",
               {{"inputs", {{"file", "inputs.f32"}, {"dtype", "f32"}, {"rows", 4}, {"cols", 3}, {"bytes", 48}}},
                {"clip", {{"file", "clip.f32"}, {"dtype", "f32"}, {"rows", 4}, {"cols", 3}, {"bytes", 48}}},
                {label_blob,
                 {{"file", label_blob + ".u32"}, {"dtype", "u32"}, {"rows", 4}, {"cols", 1}, {"bytes", 16}}}}}};
    save(d / "manifest.json", m);
  };
  write_domain("product", "labels");
  write_domain("clipart", "eval_labels");
  {
    const fs::path d = dir / "prompts";
    fs::create_directories(d);
    for (const char* set : {"source", "target", "agnostic"}) write_raw(d / (std::string(set) + ".f32"), text);
    json blobs;
    for (const char* set : {"source", "target", "agnostic"}) {
      blobs[set] = {{"file", std::string(set) + ".f32"}, {"dtype", "f32"}, {"rows", 2}, {"cols", 3}, {"bytes", 24}};
    }
    save(d / "manifest.json", {{"format", "clipdiv"},
                               {"version", 1},
                               {"kind", "prompts"},
                               {"class_names", {"bike", "mug"}},
                               {"dim_clip", 3},
                               {"source_domain", "product"},
                               {"target_domain", "clipart"},
                               {"blobs", blobs}});
  }
  const auto source = read_dataset(dir / "product");
  const auto target = read_dataset(dir / "clipart");
  const auto prompts = read_prompts(dir / "prompts");
  CHECK(source.labels.has_value());
  CHECK(target.eval_labels.has_value());
  CHECK_FALSE(target.labels.has_value());
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.hidden_dims = {4};
  cfg.feature_dim = 4;
  const auto r = train(source, target, prompts, cfg);
  CHECK(r.metrics.epochs.size() == 2);
  CHECK(r.metrics.epochs.back().target_accuracy.has_value());
}

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

#include "clipdiv/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "clipdiv/clip_guidance.hpp"
#include "clipdiv/dataio.hpp"
#include "clipdiv/pseudo_labeler.hpp"
#include "clipdiv/synth.hpp"

namespace clipdiv {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

template <typename T>
void take(const json& j, std::initializer_list<const char*> keys, T& into) {
  for (const char* key : keys) {
    if (!j.contains(key)) continue;
    try {
      into = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

template <typename T>
void take(const std::optional<T>& flag, T& into) {
  if (flag) into = *flag;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

double label_accuracy(const Labels& predicted, const Labels& truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Training flags, shared by `train` and `sweep`.

struct TrainFlags {
  std::optional<double> lambda_abs, lambda_rel, lambda_pl;
  std::optional<int> epochs, batch_size, feature_dim;
  std::optional<double> lr_extractor, lr_classifier, momentum, eta0, alpha, beta, tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kl_direction;
  std::optional<std::vector<int>> hidden_dims;
  std::string config;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON file with training settings (flags override)");
    app->add_option("--lambda-abs", lambda_abs, "weight of the absolute divergence (default 10)");
    app->add_option("--lambda-rel", lambda_rel, "weight of the relative divergence (default 1)");
    app->add_option("--lambda-pl", lambda_pl, "weight of the pseudo-label loss (default 0.1)");
    app->add_option("--epochs", epochs, "training epochs (default 10)");
    app->add_option("--batch-size", batch_size, "paired batch size per domain (default 32)");
    app->add_option("--lr-extractor", lr_extractor, "base learning rate of F (default 2e-3)");
    app->add_option("--lr-classifier", lr_classifier, "base learning rate of G (default 2e-2)");
    app->add_option("--momentum", momentum, "SGD momentum (default 0.9)");
    app->add_option("--eta0", eta0, "schedule eta0 (default 0.01)");
    app->add_option("--alpha", alpha, "schedule alpha (default 10)");
    app->add_option("--beta", beta, "schedule beta (default 0.75)");
    app->add_option("--tau", tau, "CLIP temperature (default 0.01)");
    app->add_option("--seed", seed, "model and batching seed (default 0)");
    app->add_option("--kl-direction", kl_direction, "guidance_first | model_first");
    app->add_option("--hidden-dims", hidden_dims, "hidden widths of F, comma separated")
        ->delimiter(',');
    app->add_option("--feature-dim", feature_dim, "output width of F (default 256)");
  }

  static KlDirection parse_direction(const std::string& name) {
    try {
      return kl_direction_from_string(name);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }

  TrainingConfig resolve() const {
    TrainingConfig cfg;
    if (!config.empty()) {
      const json j = load_json_file(config);
      take(j, {"lambda_abs"}, cfg.weights.lambda_abs);
      take(j, {"lambda_rel"}, cfg.weights.lambda_rel);
      take(j, {"lambda_pl"}, cfg.weights.lambda_pl);
      take(j, {"epochs"}, cfg.epochs);
      take(j, {"batch_size"}, cfg.batch_size);
      take(j, {"lr_extractor"}, cfg.lr_extractor);
      take(j, {"lr_classifier"}, cfg.lr_classifier);
      take(j, {"momentum"}, cfg.momentum);
      take(j, {"eta0"}, cfg.eta0);
      take(j, {"alpha"}, cfg.alpha);
      take(j, {"beta"}, cfg.beta);
      take(j, {"tau"}, cfg.tau);
      take(j, {"seed"}, cfg.seed);
      take(j, {"hidden_dims"}, cfg.hidden_dims);
      take(j, {"feature_dim"}, cfg.feature_dim);
      std::string direction = to_string(cfg.kl_direction);
      take(j, {"kl_direction"}, direction);
      cfg.kl_direction = parse_direction(direction);
    }
    take(lambda_abs, cfg.weights.lambda_abs);
    take(lambda_rel, cfg.weights.lambda_rel);
    take(lambda_pl, cfg.weights.lambda_pl);
    take(epochs, cfg.epochs);
    take(batch_size, cfg.batch_size);
    take(lr_extractor, cfg.lr_extractor);
    take(lr_classifier, cfg.lr_classifier);
    take(momentum, cfg.momentum);
    take(eta0, cfg.eta0);
    take(alpha, cfg.alpha);
    take(beta, cfg.beta);
    take(tau, cfg.tau);
    take(seed, cfg.seed);
    take(hidden_dims, cfg.hidden_dims);
    take(feature_dim, cfg.feature_dim);
    if (kl_direction) cfg.kl_direction = parse_direction(*kl_direction);
    cfg.validate();
    return cfg;
  }
};

json config_json(const TrainingConfig& cfg) {
  return json{{"lambda_abs", cfg.weights.lambda_abs},
              {"lambda_rel", cfg.weights.lambda_rel},
              {"lambda_pl", cfg.weights.lambda_pl},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"lr_extractor", cfg.lr_extractor},
              {"lr_classifier", cfg.lr_classifier},
              {"momentum", cfg.momentum},
              {"eta0", cfg.eta0},
              {"alpha", cfg.alpha},
              {"beta", cfg.beta},
              {"tau", cfg.tau},
              {"seed", cfg.seed},
              {"kl_direction", to_string(cfg.kl_direction)},
              {"hidden_dims", cfg.hidden_dims},
              {"feature_dim", cfg.feature_dim}};
}

struct Inputs {
  EmbeddingDataset source;
  EmbeddingDataset target;
  PromptBank bank;
};

Inputs load_training_inputs(const std::string& source_dir, const std::string& target_dir,
                            const std::string& prompt_dir) {
  Inputs in{read_dataset(source_dir), read_dataset(target_dir), read_prompts(prompt_dir)};
  check_pairing(in.source, in.bank);
  check_pairing(in.target, in.bank);
  if (!in.source.labels) throw ConfigError("source dataset " + source_dir + " has no labels");
  return in;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::string out = "benchmark";
  std::string config;
  std::optional<int> k, d_in, d_clip, n;
  std::optional<double> gap, fidelity, noise;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> source_domain, target_domain;

  void attach(CLI::App* app) {
    app->add_option("--out", out, "output directory (default ./benchmark)");
    app->add_option("--config", config, "JSON file with generator settings (flags override)");
    app->add_option("--k,--num-classes", k, "number of classes (default 5)");
    app->add_option("--d-in,--dim-input", d_in, "model input width (default 16)");
    app->add_option("--d-clip,--dim-clip", d_clip, "CLIP embedding width (default 32)");
    app->add_option("--n,--samples-per-domain", n, "samples per domain (default 500)");
    app->add_option("--gap,--domain-gap", gap, "target offset length (default 3.0)");
    app->add_option("--fidelity,--clip-fidelity", fidelity, "CLIP informativeness in [0,1] (default 0.9)");
    app->add_option("--noise,--noise-scale", noise, "input noise std (default 0.5)");
    app->add_option("--seed", seed, "generator seed (default 7)");
    app->add_option("--source-domain", source_domain, "source domain name (default 'source')");
    app->add_option("--target-domain", target_domain, "target domain name (default 'target')");
  }

  SynthConfig resolve() const {
    SynthConfig cfg;
    if (!config.empty()) {
      const json j = load_json_file(config);
      take(j, {"k", "num_classes"}, cfg.num_classes);
      take(j, {"d_in", "dim_input"}, cfg.dim_input);
      take(j, {"d_clip", "dim_clip"}, cfg.dim_clip);
      take(j, {"n", "samples_per_domain"}, cfg.samples_per_domain);
      take(j, {"gap", "domain_gap"}, cfg.domain_gap);
      take(j, {"fidelity", "clip_fidelity"}, cfg.clip_fidelity);
      take(j, {"noise", "noise_scale"}, cfg.noise_scale);
      take(j, {"seed"}, cfg.seed);
      take(j, {"source_domain"}, cfg.source_domain);
      take(j, {"target_domain"}, cfg.target_domain);
    }
    take(k, cfg.num_classes);
    take(d_in, cfg.dim_input);
    take(d_clip, cfg.dim_clip);
    take(n, cfg.samples_per_domain);
    take(gap, cfg.domain_gap);
    take(fidelity, cfg.clip_fidelity);
    take(noise, cfg.noise_scale);
    take(seed, cfg.seed);
    take(source_domain, cfg.source_domain);
    take(target_domain, cfg.target_domain);
    try {
      cfg.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    return cfg;
  }
};

double zero_shot_accuracy(const EmbeddingDataset& ds, const PromptBank& bank, PromptSet set,
                          double tau) {
  const Labels* truth = ds.ground_truth();
  if (truth == nullptr) throw InvalidArgument("dataset '" + ds.domain_name + "' has no labels");
  const GuidanceDistribution dist = zero_shot(ds.clip_embs, bank, set, tau);
  Labels predicted(truth->size());
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i)
    predicted[static_cast<std::size_t>(i)] = argmax(dist.probs.row(i));
  return label_accuracy(predicted, *truth);
}

int cmd_synth(const SynthFlags& flags, std::ostream& out) {
  const SynthConfig cfg = flags.resolve();
  const SynthBenchmark bench = synth_generate(cfg);
  const fs::path root(flags.out);
  write_dataset(bench.source, root / "source");
  write_dataset(bench.target, root / "target");
  write_prompts(bench.prompts, root / "prompts");

  json summary;
  summary["source"] = (root / "source").string();
  summary["target"] = (root / "target").string();
  summary["prompts"] = (root / "prompts").string();
  summary["num_classes"] = cfg.num_classes;
  summary["dim_input"] = cfg.dim_input;
  summary["dim_clip"] = cfg.dim_clip;
  summary["samples_per_domain"] = cfg.samples_per_domain;
  summary["seed"] = cfg.seed;
  summary["zero_shot_accuracy"] = {
      {"source",
       {{"agnostic", zero_shot_accuracy(bench.source, bench.prompts, PromptSet::agnostic, kDefaultClipTau)},
        {"source", zero_shot_accuracy(bench.source, bench.prompts, PromptSet::source_specific, kDefaultClipTau)}}},
      {"target",
       {{"agnostic", zero_shot_accuracy(bench.target, bench.prompts, PromptSet::agnostic, kDefaultClipTau)},
        {"target", zero_shot_accuracy(bench.target, bench.prompts, PromptSet::target_specific, kDefaultClipTau)}}}};
  out << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// zeroshot

struct ZeroShotFlags {
  std::string data, prompts, out, config;
  std::vector<std::string> sets{"agnostic"};
  double tau = kDefaultClipTau;
};

int cmd_zeroshot(const ZeroShotFlags& flags, std::ostream& out) {
  double tau = flags.tau;
  if (!flags.config.empty()) take(load_json_file(flags.config), {"tau"}, tau);
  const EmbeddingDataset ds = read_dataset(flags.data);
  const PromptBank bank = read_prompts(flags.prompts);
  check_pairing(ds, bank);
  const Labels* truth = ds.ground_truth();
  if (truth == nullptr) throw InvalidArgument("dataset " + flags.data + " has no labels");

  std::vector<PromptSet> sets;
  for (const auto& name : flags.sets) {
    if (name == "all") {
      sets = {PromptSet::agnostic, PromptSet::averaged, PromptSet::source_specific,
              PromptSet::target_specific};
      break;
    }
    sets.push_back(prompt_set_from_string(name));
  }
  json acc = json::object();
  for (PromptSet set : sets) {
    const GuidanceDistribution dist = zero_shot(ds.clip_embs, bank, set, tau);
    Labels predicted(truth->size());
    for (Eigen::Index i = 0; i < dist.probs.rows(); ++i)
      predicted[static_cast<std::size_t>(i)] = argmax(dist.probs.row(i));
    acc[to_string(set)] = label_accuracy(predicted, *truth);
    if (!flags.out.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
        for (Eigen::Index k = 0; k < dist.probs.cols(); ++k) csv << (k ? "," : "") << dist.probs(i, k);
        csv << "\n";
      }
      write_text(fs::path(flags.out) / (to_string(set) + ".csv"), csv.str());
    }
  }
  out << json{{"dataset", ds.domain_name}, {"tau", tau}, {"num_samples", ds.size()}, {"accuracy", acc}}.dump()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainCmdFlags {
  std::string source, target, prompts, out = "run", metrics, steps;
  TrainFlags train;
};

int cmd_train(const TrainCmdFlags& flags, std::ostream& out, std::ostream& err) {
  const TrainingConfig cfg = flags.train.resolve();
  const Inputs in = load_training_inputs(flags.source, flags.target, flags.prompts);
  const fs::path run_dir(flags.out);
  fs::create_directories(run_dir);
  const fs::path metrics_path = flags.metrics.empty() ? run_dir / "metrics.jsonl" : fs::path(flags.metrics);
  if (metrics_path.has_parent_path()) fs::create_directories(metrics_path.parent_path());
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw Error("cannot open " + metrics_path.string());

  const TrainResult result = train(in.source, in.target, in.bank, cfg, [&](const EpochRecord& r) {
    metrics << metrics_json_line(r) << "\n";
    metrics.flush();
    err << "epoch " << r.epoch << " total " << format_fixed(r.mean_losses.total) << " target_acc "
        << (r.target_accuracy ? format_fixed(*r.target_accuracy) : std::string("n/a")) << " ("
        << format_fixed(r.wall_time_s) << " s)\n";
  });
  write_checkpoint(result.model, run_dir / "checkpoint", in.bank.class_names());
  write_text(run_dir / "config.json", config_json(cfg).dump(2) + "\n");
  if (!flags.steps.empty()) {
    std::ostringstream lines;
    for (const StepRecord& s : result.metrics.steps) {
      json j{{"epoch", s.epoch},           {"step", s.step},
             {"theta", s.theta},           {"cls_source", s.losses.cls_source},
             {"abs_source", s.losses.abs_source}, {"abs_target", s.losses.abs_target},
             {"abs_total", s.losses.abs_total},   {"rel", s.losses.rel},
             {"pl", s.losses.pl},          {"total", s.losses.total}};
      lines << j.dump() << "\n";
    }
    write_text(flags.steps, lines.str());
  }

  const EpochRecord& last = result.metrics.epochs.back();
  json summary{{"checkpoint", (run_dir / "checkpoint").string()},
               {"metrics", metrics_path.string()},
               {"epochs", cfg.epochs},
               {"source_accuracy", last.source_accuracy},
               {"target_accuracy", last.target_accuracy ? json(*last.target_accuracy) : json(nullptr)}};
  out << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  std::string model, data, out, config;
};

int cmd_eval(const EvalFlags& flags, std::ostream& out) {
  const UdaModel model = read_checkpoint(flags.model);
  const EmbeddingDataset ds = read_dataset(flags.data);
  if (ds.inputs.cols() != model.input_dim()) {
    throw ConfigError("dataset input width " + std::to_string(ds.inputs.cols()) +
                      " != model input width " + std::to_string(model.input_dim()));
  }
  const Labels predicted = model.predict(ds.inputs);
  if (!flags.out.empty()) {
    std::ostringstream lines;
    for (int y : predicted) lines << y << "\n";
    write_text(flags.out, lines.str());
  }
  const Labels* truth = ds.ground_truth();
  if (truth == nullptr) throw InvalidArgument("dataset " + flags.data + " has no labels");
  out << json{{"dataset", ds.domain_name},
              {"num_samples", ds.size()},
              {"accuracy", evaluate(model, ds)}}
             .dump()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pseudo-label

struct PseudoFlags {
  std::string model, target, prompts, out, config;
  double tau = kDefaultClipTau;
};

int cmd_pseudo_label(const PseudoFlags& flags, std::ostream& out) {
  double tau = flags.tau;
  if (!flags.config.empty()) take(load_json_file(flags.config), {"tau"}, tau);
  const UdaModel model = read_checkpoint(flags.model);
  const EmbeddingDataset target = read_dataset(flags.target);
  const PromptBank bank = read_prompts(flags.prompts);
  check_pairing(target, bank);
  if (model.num_classes() != bank.num_classes()) {
    throw ConfigError("model has " + std::to_string(model.num_classes()) + " classes, prompts have " +
                      std::to_string(bank.num_classes()));
  }
  const GuidanceDistribution clip = zero_shot(target.clip_embs, bank, PromptSet::target_specific, tau);
  const ForwardRecord fwd = model.forward(target.inputs);
  const auto state = run_pseudo_labeling(fwd.features(), fwd.probs, clip.probs);

  json j;
  j["dataset"] = target.domain_name;
  j["num_samples"] = target.size();
  j["labels"] = state.labels;
  j["initial_labels"] = state.initial_labels;
  j["centroids"] = matrix_json(state.centroids);
  j["refined_centroids"] = matrix_json(state.refined_centroids);
  j["weights"] = matrix_json(state.weights);
  if (const Labels* truth = target.ground_truth()) {
    j["accuracy"] = label_accuracy(state.labels, *truth);
    j["initial_accuracy"] = label_accuracy(state.initial_labels, *truth);
  }
  if (flags.out.empty()) {
    out << j.dump() << "\n";
  } else {
    write_text(flags.out, j.dump() + "\n");
    out << json{{"out", flags.out}, {"num_samples", target.size()}}.dump() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepFlags {
  std::string source, target, prompts, out = "sweep", param;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainFlags train;
};

std::string cell_file_name(const std::string& param, const SweepCell& cell) {
  return param + "=" + format_number(cell.value) + "_seed=" + std::to_string(cell.seed) + ".json";
}

int cmd_sweep(const SweepFlags& flags, std::ostream& out, std::ostream& err) {
  SweepPlan plan{flags.param, flags.values, flags.seeds, flags.train.resolve()};
  plan.validate();
  const Inputs in = load_training_inputs(flags.source, flags.target, flags.prompts);
  if (!in.target.ground_truth()) {
    throw ConfigError("sweep needs target ground truth (eval_labels) to score cells");
  }
  const fs::path root(flags.out);
  fs::create_directories(root / "cells");
  write_text(root / "base_config.json", config_json(plan.base).dump(2) + "\n");

  const auto cells = run_sweep(plan, in.source, in.target, in.bank, worker_cap(), [&](const SweepCell& c) {
    json j{{"param", plan.param},
           {"value", c.value},
           {"seed", c.seed},
           {"target_accuracy", c.target_accuracy},
           {"source_accuracy", c.source_accuracy},
           {"final_total_loss", c.final_total_loss}};
    write_text(root / "cells" / cell_file_name(plan.param, c), j.dump() + "\n");
    err << plan.param << "=" << format_number(c.value) << " seed " << c.seed << " target_acc "
        << format_fixed(c.target_accuracy) << "\n";
  });
  write_text(root / "sweep.csv", sweep_csv(plan, cells));

  json means = json::array();
  const auto per_value = sweep_means(plan, cells);
  for (std::size_t v = 0; v < plan.values.size(); ++v) {
    means.push_back({{"value", plan.values[v]}, {"mean_target_accuracy", per_value[v]}});
  }
  out << json{{"csv", (root / "sweep.csv").string()}, {"param", plan.param}, {"means", means}}.dump()
      << "\n";
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

void SweepPlan::validate() const {
  if (std::find(kSweepParams.begin(), kSweepParams.end(), param) == kSweepParams.end()) {
    throw ConfigError("unknown sweep parameter '" + param +
                      "' (lambda_abs, lambda_rel, lambda_pl, batch_size)");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  for (double v : values) sweep_config(*this, v, seeds.front()).validate();
}

TrainingConfig sweep_config(const SweepPlan& plan, double value, std::uint64_t seed) {
  TrainingConfig cfg = plan.base;
  cfg.seed = seed;
  if (plan.param == "lambda_abs") {
    cfg.weights.lambda_abs = value;
  } else if (plan.param == "lambda_rel") {
    cfg.weights.lambda_rel = value;
  } else if (plan.param == "lambda_pl") {
    cfg.weights.lambda_pl = value;
  } else if (plan.param == "batch_size") {
    if (value != std::floor(value)) throw ConfigError("batch_size values must be integers");
    cfg.batch_size = static_cast<int>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + plan.param + "'");
  }
  return cfg;
}

std::vector<SweepCell> run_sweep(const SweepPlan& plan, const EmbeddingDataset& source,
                                 const EmbeddingDataset& target, const PromptBank& bank,
                                 int workers, const std::function<void(const SweepCell&)>& on_cell) {
  plan.validate();
  std::vector<SweepCell> cells;
  for (double v : plan.values)
    for (std::uint64_t s : plan.seeds) cells.push_back(SweepCell{v, s, 0, 0, 0});

  // Guidance depends only on the data and tau, so it is shared by every cell.
  const GuidanceCache source_guidance = guidance_cache(source, bank, plan.base.tau, DomainRole::source);
  const GuidanceCache target_guidance = guidance_cache(target, bank, plan.base.tau, DomainRole::target);

  std::atomic<std::size_t> next{0};
  std::mutex report;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        SweepCell& cell = cells[i];
        const TrainResult r = train(source, target, bank, source_guidance, target_guidance,
                                    sweep_config(plan, cell.value, cell.seed));
        cell.target_accuracy = evaluate(r.model, target);
        cell.source_accuracy = evaluate(r.model, source);
        cell.final_total_loss = r.metrics.epochs.back().mean_losses.total;
        std::lock_guard lock(report);
        if (on_cell) on_cell(cell);
      } catch (...) {
        std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const int count = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return cells;
}

std::vector<double> sweep_means(const SweepPlan& plan, const std::vector<SweepCell>& cells) {
  std::vector<double> means;
  const std::size_t per_value = plan.seeds.size();
  for (std::size_t v = 0; v < plan.values.size(); ++v) {
    double sum = 0;
    for (std::size_t s = 0; s < per_value; ++s) sum += cells[v * per_value + s].target_accuracy;
    means.push_back(sum / static_cast<double>(per_value));
  }
  return means;
}

std::string sweep_csv(const SweepPlan& plan, const std::vector<SweepCell>& cells) {
  std::ostringstream csv;
  csv << "param,value,seed,target_accuracy,source_accuracy,final_total_loss\n";
  const std::size_t per_value = plan.seeds.size();
  for (std::size_t v = 0; v < plan.values.size(); ++v) {
    double sums[3] = {0, 0, 0};
    for (std::size_t s = 0; s < per_value; ++s) {
      const SweepCell& c = cells[v * per_value + s];
      csv << plan.param << "," << format_number(c.value) << "," << c.seed << ","
          << format_fixed(c.target_accuracy) << "," << format_fixed(c.source_accuracy) << ","
          << format_fixed(c.final_total_loss) << "\n";
      sums[0] += c.target_accuracy;
      sums[1] += c.source_accuracy;
      sums[2] += c.final_total_loss;
    }
    const double n = static_cast<double>(per_value);
    csv << plan.param << "," << format_number(plan.values[v]) << ",mean," << format_fixed(sums[0] / n)
        << "," << format_fixed(sums[1] / n) << "," << format_fixed(sums[2] / n) << "\n";
  }
  return csv.str();
}

int worker_cap() {
  if (const char* env = std::getenv("CLIPDIV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"clipdiv: language-guided unsupervised domain adaptation on precomputed CLIP embeddings"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  SynthFlags synth_flags;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic two-domain benchmark");
  synth_flags.attach(synth_cmd);

  ZeroShotFlags zs_flags;
  auto* zs_cmd = app.add_subcommand("zeroshot", "CLIP zero-shot accuracy per prompt set");
  zs_cmd->add_option("--data", zs_flags.data, "dataset directory")->required();
  zs_cmd->add_option("--prompts", zs_flags.prompts, "prompt directory")->required();
  zs_cmd->add_option("--prompt-set", zs_flags.sets, "agnostic | averaged | source | target | all")
      ->delimiter(',');
  zs_cmd->add_option("--tau", zs_flags.tau, "CLIP temperature (default 0.01)");
  zs_cmd->add_option("--out", zs_flags.out, "directory for per-set probability CSVs");
  zs_cmd->add_option("--config", zs_flags.config, "JSON file (reads 'tau')");

  TrainCmdFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train the UDA model");
  train_cmd->add_option("--source", train_flags.source, "source dataset directory")->required();
  train_cmd->add_option("--target", train_flags.target, "target dataset directory")->required();
  train_cmd->add_option("--prompts", train_flags.prompts, "prompt directory")->required();
  train_cmd->add_option("--out", train_flags.out, "run directory (default ./run)");
  train_cmd->add_option("--metrics", train_flags.metrics, "metrics JSON-lines path (default <out>/metrics.jsonl)");
  train_cmd->add_option("--steps", train_flags.steps, "optional per-step loss JSON-lines path");
  train_flags.train.attach(train_cmd);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
  eval_cmd->add_option("--model", eval_flags.model, "checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_flags.data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_flags.out, "write predicted class ids, one per line");
  eval_cmd->add_option("--config", eval_flags.config, "unused; accepted for uniformity");

  PseudoFlags pl_flags;
  auto* pl_cmd = app.add_subcommand("pseudo-label", "dump the pseudo-labelling state for a target set");
  pl_cmd->add_option("--model", pl_flags.model, "checkpoint directory")->required();
  pl_cmd->add_option("--target", pl_flags.target, "target dataset directory")->required();
  pl_cmd->add_option("--prompts", pl_flags.prompts, "prompt directory")->required();
  pl_cmd->add_option("--tau", pl_flags.tau, "CLIP temperature (default 0.01)");
  pl_cmd->add_option("--out", pl_flags.out, "write the JSON state here instead of stdout");
  pl_cmd->add_option("--config", pl_flags.config, "JSON file (reads 'tau')");

  SweepFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sensitivity sweep");
  sweep_cmd->add_option("--source", sweep_flags.source, "source dataset directory")->required();
  sweep_cmd->add_option("--target", sweep_flags.target, "target dataset directory")->required();
  sweep_cmd->add_option("--prompts", sweep_flags.prompts, "prompt directory")->required();
  sweep_cmd->add_option("--out", sweep_flags.out, "output directory (default ./sweep)");
  sweep_cmd->add_option("--param", sweep_flags.param, "lambda_abs | lambda_rel | lambda_pl | batch_size")
      ->required();
  sweep_cmd->add_option("--values", sweep_flags.values, "comma separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_flags.seeds, "comma separated seeds (default 1,2,3,4,5)")
      ->delimiter(',');
  sweep_flags.train.attach(sweep_cmd);
  sweep_cmd->remove_option(sweep_cmd->get_option("--seed"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth_cmd) return cmd_synth(synth_flags, out);
    if (*zs_cmd) return cmd_zeroshot(zs_flags, out);
    if (*train_cmd) return cmd_train(train_flags, out, err);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*pl_cmd) return cmd_pseudo_label(pl_flags, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, out, err);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace clipdiv

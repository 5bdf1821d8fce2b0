/* Copyright 2026 The DET Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line entry point: train, eval, neighbors, stats, gradcheck, synth.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "det/checkpoint.h"
#include "det/errors.h"
#include "det/gradcheck.h"
#include "det/io.h"
#include "det/model.h"
#include "det/semantic_index.h"
#include "det/training.h"

namespace fs = std::filesystem;

namespace {

std::string resolve_data(const std::string& path) {
  const char* root = std::getenv("DET_DATA_ROOT");
  if (root == nullptr || path.empty() || fs::path(path).is_absolute() || fs::exists(path)) {
    return path;
  }
  return (fs::path(root) / path).string();
}

const det::Graph& bundle_graph(const det::DatasetBundle& data) {
  if (const auto* nb = std::get_if<det::NodeBundle>(&data)) return nb->graph;
  if (const auto* kg = std::get_if<det::KgBundle>(&data)) return kg->graph;
  throw det::ModeError("graph-set bundles have no single graph");
}

det::TrainConfig config_from_checkpoint(const det::Checkpoint& ck, std::size_t threads) {
  det::TrainConfig c = det::default_train_config(det::parse_task(ck.extras.task));
  c.data = ck.extras.data;
  c.k = ck.extras.k;
  c.candidate_count = ck.extras.candidate_count;
  c.seed = ck.model.seed;
  c.threads = threads;
  return c;
}

int run_train(const std::string& config_path, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& output, std::size_t threads) {
  det::TrainConfig config = det::load_train_config(config_path);
  if (seed) config.seed = *seed;
  if (output) config.output = *output;
  if (threads > 0) config.threads = threads;
  config.data = resolve_data(config.data);
  det::validate(config);
  std::cerr << "resolved config:\n" << det::format_train_config(config);

  const det::DatasetBundle data = det::load_bundle(config.data);
  det::DetModel model(det::model_config_for(config, data));
  std::cerr << fmt::format("model: {} parameters\n", model.parameters().scalar_count());
  const det::TrainResult result = det::train(config, data, model);

  fs::create_directories(config.output);
  const fs::path out(config.output);
  {
    std::ofstream f(out / "config.txt");
    f << det::format_train_config(config);
  }
  {
    std::ofstream f(out / "metrics.csv");
    result.report.write_csv(f);
  }
  {
    std::ofstream f(out / "timing.csv");
    result.report.write_csv(f, true);
  }
  {
    std::ofstream f(out / "steps.csv");
    f << "epoch,step,main,sn,total\n";
    for (const det::StepRecord& s : result.steps) {
      f << fmt::format("{},{},{:.17g},{:.17g},{:.17g}\n", s.epoch, s.step, s.main, s.sn, s.total);
    }
  }
  det::write_checkpoint((out / "checkpoint.det").string(), model,
                        {det::to_string(config.task), config.data, config.k, config.candidate_count});
  std::cout << fmt::format("seed {} epochs {} best_epoch {} steps {}\n", config.seed,
                           result.epochs_run, result.best_epoch, result.steps.size());
  for (const auto& [name, value] : result.test) std::cout << fmt::format("test {} {:.6f}\n", name, value);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::optional<std::string>& data_dir,
             const std::string& split, std::size_t threads) {
  const det::Checkpoint ck = det::read_checkpoint(checkpoint);
  det::TrainConfig config = config_from_checkpoint(ck, std::max<std::size_t>(1, threads));
  if (data_dir) config.data = resolve_data(*data_dir);
  const det::DatasetBundle data = det::load_bundle(config.data);
  det::DetModel model(ck.model);
  det::load_parameters(ck, model);
  const det::Split which = split == "train" ? det::Split::kTrain
                           : split == "valid" ? det::Split::kValid
                           : split == "test"  ? det::Split::kTest
                                              : throw det::ConfigError("unknown split " + split);
  std::optional<det::SemanticNeighborIndex> index;
  if (config.task != det::Task::kGraphRegression) {
    index = det::evaluation_index(model, bundle_graph(data), config);
  }
  const det::MetricMap metrics =
      det::evaluate(config.task, model, data, which, index ? &*index : nullptr);
  for (const auto& [name, value] : metrics) std::cout << fmt::format("{} {} {:.6f}\n", split, name, value);
  return 0;
}

int run_neighbors(const std::string& checkpoint, const std::optional<std::string>& data_dir,
                  det::NodeId node, std::size_t threads) {
  const det::Checkpoint ck = det::read_checkpoint(checkpoint);
  det::TrainConfig config = config_from_checkpoint(ck, std::max<std::size_t>(1, threads));
  if (data_dir) config.data = resolve_data(*data_dir);
  const det::DatasetBundle data = det::load_bundle(config.data);
  det::DetModel model(ck.model);
  det::load_parameters(ck, model);
  const det::Graph& g = bundle_graph(data);
  g.check_node(node);
  const det::SemanticNeighborIndex index = det::evaluation_index(model, g, config);
  for (const det::SemanticNeighbor& s : index.neighbors(node)) {
    std::cout << fmt::format("{}\t{}\t{:.6f}\n", node, s.node, s.score);
  }
  return 0;
}

int run_stats(const std::string& data_path, std::size_t max_hop) {
  const std::string path = resolve_data(data_path);
  det::Graph g;
  if (fs::is_directory(path)) {
    const det::DatasetBundle data = det::load_bundle(path);
    g = bundle_graph(data);
  } else {
    g = det::load_edge_list(path);
  }
  const std::vector<double> stats = det::hop_statistics(g, max_hop);
  for (std::size_t k = 1; k <= max_hop; ++k) {
    std::cout << (k > 1 ? " " : "") << fmt::format("{}:{:.1f}", k, stats[k - 1]);
  }
  std::cout << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const det::GradcheckCase& c : det::run_gradcheck(seed)) {
    std::cout << fmt::format("{} {} max_rel_err={:.3e}\n", c.passed ? "ok  " : "FAIL", c.name,
                             c.max_relative_error);
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

int run_synth(const std::string& kind, const std::string& out, std::uint64_t seed) {
  det::write_bundle(det::generate_synthetic(kind, seed), out);
  std::cout << fmt::format("wrote {} bundle to {}\n", kind, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-encoding graph transformer"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads for semantic index refresh");

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  train->add_option("--config", config_path, "Config file (key = value)")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--output", output, "Override the output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint;
  std::optional<std::string> data_dir;
  std::string split = "test";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset bundle (defaults to the one used for training)");
  eval->add_option("--split", split, "train, valid or test");

  auto* neighbors = app.add_subcommand("neighbors", "Print the semantic neighbors of a node");
  det::NodeId node = 0;
  neighbors->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  neighbors->add_option("--node", node, "Node id")->required();
  neighbors->add_option("--data", data_dir, "Dataset bundle");

  auto* stats = app.add_subcommand("stats", "Mean number of nodes at each exact hop distance");
  std::string stats_data;
  std::size_t max_hop = 3;
  stats->add_option("--data", stats_data, "Edge list file or dataset bundle")->required();
  stats->add_option("--max-hop", max_hop, "Largest hop")->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t check_seed = 7;
  gradcheck->add_option("--seed", check_seed, "Seed for random inputs");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset bundle");
  std::string kind, out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--kind", kind, "planted-cluster, block-citation, toy-kg or toy-graphs")->required();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(config_path, seed, output, threads);
    if (*eval) return run_eval(checkpoint, data_dir, split, threads);
    if (*neighbors) return run_neighbors(checkpoint, data_dir, node, threads);
    if (*stats) return run_stats(stats_data, max_hop);
    if (*gradcheck) return run_gradcheck(check_seed);
    if (*synth) return run_synth(kind, out, synth_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

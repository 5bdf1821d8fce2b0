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

// Training loop, optimizers, task losses and evaluation metrics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "det/dataset.h"
#include "det/model.h"
#include "det/neighbor_index.h"
#include "det/parameters.h"
#include "det/semantic_index.h"

namespace det {

enum class Task { kGraphRegression, kNodeClassification, kKgCompletion };
enum class OptimizerKind { kSgd, kAdam, kAdamax };

const char* to_string(Task task);
Task parse_task(const std::string& text);
const char* to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
  Task task = Task::kNodeClassification;
  std::string data;
  std::string output = "run";
  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t max_steps = 0;   // 0 = no cap
  double learning_rate = 0.005;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double tau = 0.15;
  double lambda = 1.0;
  double alpha = 1.0;
  std::size_t k = 16;
  std::size_t candidate_count = 1024;
  std::size_t refresh_interval = 1;
  std::size_t negatives_per_node = 0;  // 0 = |N(v)| capped at 16
  std::uint64_t seed = 0;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t semantic_heads = 1;
  std::size_t ffn_hidden = 64;
  std::size_t atom_layers = 1;
  std::size_t max_degree = 64;
  std::size_t max_distance = 8;
  std::size_t node_cap = 256;
  double dropout = 0.0;
  std::size_t patience = 20;
  bool layerwise_combination = true;
  SemanticOperator semantic_operator = SemanticOperator::kDifference;
  bool strict_staleness = true;
  std::size_t threads = 1;
};

// Task-dependent defaults.
TrainConfig default_train_config(Task task);
// "key = value" lines, '#' comments. `task` is applied first so that the
// remaining keys override its defaults. Unknown keys are errors.
TrainConfig parse_train_config(std::istream& in, const std::string& source);
TrainConfig load_train_config(const std::string& path);
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
void validate(const TrainConfig& config);
// Every key with its resolved value, one "key = value" per line.
std::string format_train_config(const TrainConfig& config);

ModelConfig model_config_for(const TrainConfig& config, const DatasetBundle& data);

// ---------------------------------------------------------------------------
// Optimizers.

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct MomentState {
  std::vector<double> m;
  std::vector<double> v;  // Adam second moment, Adamax infinity norm
};

// One update of `params` in place; `step` counts from 1.
void optimizer_step(const OptimizerSettings& settings, std::span<double> params,
                    std::span<const double> grads, MomentState& state, std::size_t step);

class Optimizer {
 public:
  Optimizer(OptimizerSettings settings, const ParameterStore& store);
  void step(ParameterStore& store);
  std::size_t steps() const { return steps_; }

 private:
  OptimizerSettings settings_;
  std::vector<MomentState> state_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Metrics.

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  double seconds = 0.0;  // wall clock since training started
};

class MetricReport {
 public:
  void add(std::size_t epoch, const std::string& split, const std::string& metric, double value,
           double seconds = 0.0);
  const std::vector<MetricRow>& rows() const { return rows_; }
  std::optional<double> find(std::size_t epoch, const std::string& split,
                             const std::string& metric) const;
  // "epoch,split,metric,value"; wall clock only when asked, so that reports
  // of identical runs are byte-identical.
  void write_csv(std::ostream& out, bool with_wall_clock = false) const;

 private:
  std::vector<MetricRow> rows_;
};

using MetricMap = std::map<std::string, double>;

double mean_absolute_error(std::span<const double> predicted, std::span<const double> truth);
double accuracy(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth);
double micro_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

// Tie-aware rank: 1 + #higher + 0.5 * #equal, skipping `filtered` entries.
double filtered_rank(std::span<const double> scores, NodeId target,
                     std::span<const NodeId> filtered = {});

struct KgRank {
  double filtered = 0.0;
  double raw = 0.0;
};

// mrr, mr, hits@1, hits@3, hits@10 over filtered ranks.
MetricMap summarize_ranks(std::span<const double> ranks);

enum class Split { kTrain, kValid, kTest };
const char* to_string(Split split);

// Index used for evaluation: a deterministic function of the parameters.
SemanticNeighborIndex evaluation_index(const DetModel& model, const Graph& g,
                                       const TrainConfig& config);

// Filtered ranks of both the tail and the head query of every triple.
std::vector<KgRank> kg_ranks(const DetModel& model, const KgBundle& kg, Split split,
                             const SemanticNeighborIndex& index);

// graph-regression: mae. node-classification: accuracy or micro_f1.
// kg-completion: mrr, mr, hits1, hits3, hits10.
MetricMap evaluate(Task task, const DetModel& model, const DatasetBundle& data, Split split,
                   const SemanticNeighborIndex* index = nullptr);

const char* primary_metric(Task task, const DatasetBundle& data);
bool higher_is_better(Task task);

// ---------------------------------------------------------------------------
// Training.

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double main = 0.0;
  double sn = 0.0;
  double total = 0.0;
};

struct TrainHooks {
  // Runs after backward and before the optimizer step.
  std::function<void(const StepRecord&, DetModel&)> after_backward;
  // Runs after each epoch's validation.
  std::function<void(std::size_t epoch, const MetricMap& valid)> after_epoch;
};

struct TrainResult {
  MetricReport report;
  std::vector<StepRecord> steps;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_valid = 0.0;
  MetricMap test;
};

TrainResult train(const TrainConfig& config, const DatasetBundle& data, DetModel& model,
                  const TrainHooks& hooks = {});

}  // namespace det

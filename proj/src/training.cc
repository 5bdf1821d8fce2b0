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

#include "det/training.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "det/errors.h"
#include "det/rng.h"

namespace det {

const char* to_string(Task task) {
  switch (task) {
    case Task::kGraphRegression: return "graph-regression";
    case Task::kNodeClassification: return "node-classification";
    case Task::kKgCompletion: return "kg-completion";
  }
  return "?";
}

Task parse_task(const std::string& text) {
  if (text == "graph-regression") return Task::kGraphRegression;
  if (text == "node-classification") return Task::kNodeClassification;
  if (text == "kg-completion") return Task::kKgCompletion;
  throw ConfigError("unknown task: " + text);
}

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdamax: return "adamax";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "adamax") return OptimizerKind::kAdamax;
  throw ConfigError("unknown optimizer: " + text);
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Config.

TrainConfig default_train_config(Task task) {
  TrainConfig c;
  c.task = task;
  switch (task) {
    case Task::kNodeClassification:
      c.optimizer = OptimizerKind::kAdam;
      c.learning_rate = 0.005;
      c.batch_size = 0;
      c.refresh_interval = 1;
      c.alpha = 1.0;
      break;
    case Task::kKgCompletion:
      c.optimizer = OptimizerKind::kAdamax;
      c.learning_rate = 0.01;
      c.batch_size = 256;
      c.refresh_interval = 10;
      c.alpha = 1.0;
      break;
    case Task::kGraphRegression:
      c.optimizer = OptimizerKind::kAdam;
      c.learning_rate = 0.001;
      c.batch_size = 256;
      c.alpha = 0.0;
      break;
  }
  return c;
}

namespace {

template <typename T>
T config_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("bad value '{}' for {}", text, key));
  }
  return value;
}

bool config_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("bad boolean '{}' for {}", text, key));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string real(double v) { return fmt::format("{}", v); }

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  const auto size = [&] { return config_number<std::size_t>(key, value); };
  const auto number = [&] { return config_number<double>(key, value); };
  if (key == "task") c.task = parse_task(value);
  else if (key == "data") c.data = value;
  else if (key == "output") c.output = value;
  else if (key == "epochs") c.epochs = size();
  else if (key == "batch_size") c.batch_size = size();
  else if (key == "max_steps") c.max_steps = size();
  else if (key == "learning_rate") c.learning_rate = number();
  else if (key == "optimizer") c.optimizer = parse_optimizer(value);
  else if (key == "beta1") c.beta1 = number();
  else if (key == "beta2") c.beta2 = number();
  else if (key == "epsilon") c.epsilon = number();
  else if (key == "tau") c.tau = number();
  else if (key == "lambda") c.lambda = number();
  else if (key == "alpha") c.alpha = number();
  else if (key == "k") c.k = size();
  else if (key == "candidate_count") c.candidate_count = size();
  else if (key == "refresh_interval") c.refresh_interval = size();
  else if (key == "negatives_per_node") c.negatives_per_node = size();
  else if (key == "seed") c.seed = config_number<std::uint64_t>(key, value);
  else if (key == "layers") c.layers = size();
  else if (key == "hidden") c.hidden = size();
  else if (key == "heads") c.heads = size();
  else if (key == "semantic_heads") c.semantic_heads = size();
  else if (key == "ffn_hidden") c.ffn_hidden = size();
  else if (key == "atom_layers") c.atom_layers = size();
  else if (key == "max_degree") c.max_degree = size();
  else if (key == "max_distance") c.max_distance = size();
  else if (key == "node_cap") c.node_cap = size();
  else if (key == "dropout") c.dropout = number();
  else if (key == "patience") c.patience = size();
  else if (key == "layerwise_combination") c.layerwise_combination = config_bool(key, value);
  else if (key == "semantic_operator") c.semantic_operator = parse_semantic_operator(value);
  else if (key == "strict_staleness") c.strict_staleness = config_bool(key, value);
  else if (key == "threads") c.threads = size();
  else throw ConfigError("unknown config key: " + key);
}

void validate(const TrainConfig& c) {
  const auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (c.epochs == 0) fail("epochs must be at least 1");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    fail("betas must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) fail("epsilon must be positive");
  if (!(c.tau >= 0.0 && c.tau <= 1.0)) fail("tau must lie in [0, 1]");
  if (!std::isfinite(c.lambda)) fail("lambda must be finite");
  if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha)) fail("alpha must be >= 0");
  if (c.k == 0) fail("k must be at least 1");
  if (c.candidate_count == 0) fail("candidate_count must be at least 1");
  if (c.refresh_interval == 0) fail("refresh_interval must be at least 1");
  if (c.layers == 0) fail("layers must be at least 1");
  if (c.heads == 0 || c.semantic_heads == 0 || c.hidden % c.heads != 0 ||
      c.hidden % c.semantic_heads != 0) {
    fail("hidden must be divisible by heads and semantic_heads");
  }
  if (c.ffn_hidden == 0) fail("ffn_hidden must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (c.threads == 0) fail("threads must be at least 1");
}

TrainConfig parse_train_config(std::istream& in, const std::string& source) {
  struct Entry {
    std::string key, value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::set<std::string> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    Entry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ParseError(source, line_no, "empty key");
    if (!keys.insert(e.key).second) throw ParseError(source, line_no, "duplicate key " + e.key);
    entries.push_back(std::move(e));
  }
  Task task = Task::kNodeClassification;
  for (const Entry& e : entries) {
    if (e.key != "task") continue;
    try {
      task = parse_task(e.value);
    } catch (const ConfigError& err) {
      throw ParseError(source, e.line, err.what());
    }
  }
  TrainConfig c = default_train_config(task);
  for (const Entry& e : entries) {
    try {
      set_config_value(c, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ParseError(source, e.line, err.what());
    }
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_train_config(in, path);
}

std::string format_train_config(const TrainConfig& c) {
  std::string s;
  const auto line = [&](const char* key, const std::string& value) {
    s += fmt::format("{} = {}\n", key, value);
  };
  line("task", to_string(c.task));
  line("data", c.data);
  line("output", c.output);
  line("epochs", std::to_string(c.epochs));
  line("batch_size", std::to_string(c.batch_size));
  line("max_steps", std::to_string(c.max_steps));
  line("learning_rate", real(c.learning_rate));
  line("optimizer", to_string(c.optimizer));
  line("beta1", real(c.beta1));
  line("beta2", real(c.beta2));
  line("epsilon", real(c.epsilon));
  line("tau", real(c.tau));
  line("lambda", real(c.lambda));
  line("alpha", real(c.alpha));
  line("k", std::to_string(c.k));
  line("candidate_count", std::to_string(c.candidate_count));
  line("refresh_interval", std::to_string(c.refresh_interval));
  line("negatives_per_node", std::to_string(c.negatives_per_node));
  line("seed", std::to_string(c.seed));
  line("layers", std::to_string(c.layers));
  line("hidden", std::to_string(c.hidden));
  line("heads", std::to_string(c.heads));
  line("semantic_heads", std::to_string(c.semantic_heads));
  line("ffn_hidden", std::to_string(c.ffn_hidden));
  line("atom_layers", std::to_string(c.atom_layers));
  line("max_degree", std::to_string(c.max_degree));
  line("max_distance", std::to_string(c.max_distance));
  line("node_cap", std::to_string(c.node_cap));
  line("dropout", real(c.dropout));
  line("patience", std::to_string(c.patience));
  line("layerwise_combination", c.layerwise_combination ? "true" : "false");
  line("semantic_operator", to_string(c.semantic_operator));
  line("strict_staleness", c.strict_staleness ? "true" : "false");
  line("threads", std::to_string(c.threads));
  return s;
}

ModelConfig model_config_for(const TrainConfig& c, const DatasetBundle& data) {
  ModelConfig m;
  m.layers = c.layers;
  m.hidden = c.hidden;
  m.heads = c.heads;
  m.semantic_heads = c.semantic_heads;
  m.ffn_hidden = c.ffn_hidden;
  m.atom_layers = c.atom_layers;
  m.max_degree = c.max_degree;
  m.max_distance = c.max_distance;
  m.node_cap = c.node_cap;
  m.tau = c.tau;
  m.lambda = c.lambda;
  m.layerwise_combination = c.layerwise_combination;
  m.semantic_operator = c.semantic_operator;
  m.seed = c.seed;
  switch (c.task) {
    case Task::kNodeClassification: {
      const auto* nb = std::get_if<NodeBundle>(&data);
      if (nb == nullptr) throw ConfigError("node-classification needs a node bundle");
      const Graph& g = nb->graph;
      if (!g.features() || !g.labels()) throw ConfigError("node bundle lacks features or labels");
      m.mode = ModelMode::kEgoNode;
      m.feature_dim = g.features()->cols;
      m.class_count = g.labels()->class_count;
      m.multilabel = g.labels()->multilabel;
      if (g.typed()) {
        TypeId top = 0;
        for (const Edge& e : g.edges()) top = std::max(top, *e.type);
        m.relation_count = top + 1u;
      }
      break;
    }
    case Task::kKgCompletion: {
      const auto* kg = std::get_if<KgBundle>(&data);
      if (kg == nullptr) throw ConfigError("kg-completion needs a kg bundle");
      m.mode = ModelMode::kKg;
      m.entity_count = kg->entity_count();
      m.relation_count = 2 * kg->relation_count();
      break;
    }
    case Task::kGraphRegression: {
      const auto* set = std::get_if<GraphSetBundle>(&data);
      if (set == nullptr) throw ConfigError("graph-regression needs a graph-set bundle");
      m.mode = ModelMode::kWholeGraph;
      m.relation_count = set->relation_count;
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Optimizers.

void optimizer_step(const OptimizerSettings& s, std::span<double> params,
                    std::span<const double> grads, MomentState& state, std::size_t step) {
  if (params.size() != grads.size()) {
    throw ShapeError(fmt::format("optimizer: {} params, {} grads", params.size(), grads.size()));
  }
  if (step == 0) throw ContractError("optimizer steps count from 1");
  const std::size_t n = params.size();
  if (s.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = s.learning_rate * grads[i];
      if (delta != 0.0) params[i] -= delta;
    }
    return;
  }
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);
  if (state.m.size() != n || state.v.size() != n) throw ShapeError("optimizer state shape mismatch");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  if (s.kind == OptimizerKind::kAdam) {
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
      state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * grads[i];
      state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
      const double delta =
          s.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + s.epsilon);
      if (delta != 0.0) params[i] -= delta;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * grads[i];
      state.v[i] = std::max(s.beta2 * state.v[i], std::fabs(grads[i]));
      const double delta = (s.learning_rate / c1) * state.m[i] / (state.v[i] + s.epsilon);
      if (delta != 0.0) params[i] -= delta;
    }
  }
}

Optimizer::Optimizer(OptimizerSettings settings, const ParameterStore& store)
    : settings_(settings), state_(store.entries().size()) {}

void Optimizer::step(ParameterStore& store) {
  const auto& entries = store.entries();
  if (entries.size() != state_.size()) throw ShapeError("optimizer: parameter set changed");
  ++steps_;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ad::Tensor t = entries[i].tensor;
    optimizer_step(settings_, t.mutable_values(), t.grad(), state_[i], steps_);
  }
}

// ---------------------------------------------------------------------------
// Metrics.

void MetricReport::add(std::size_t epoch, const std::string& split, const std::string& metric,
                       double value, double seconds) {
  rows_.push_back({epoch, split, metric, value, seconds});
}

std::optional<double> MetricReport::find(std::size_t epoch, const std::string& split,
                                         const std::string& metric) const {
  for (const MetricRow& r : rows_) {
    if (r.epoch == epoch && r.split == split && r.metric == metric) return r.value;
  }
  return std::nullopt;
}

void MetricReport::write_csv(std::ostream& out, bool with_wall_clock) const {
  out << (with_wall_clock ? "epoch,split,metric,value,seconds\n" : "epoch,split,metric,value\n");
  for (const MetricRow& r : rows_) {
    out << fmt::format("{},{},{},{:.17g}", r.epoch, r.split, r.metric, r.value);
    if (with_wall_clock) out << fmt::format(",{:.3f}", r.seconds);
    out << '\n';
  }
}

double mean_absolute_error(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw ContractError("mae: sizes differ or empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += std::fabs(predicted[i] - truth[i]);
  return total / static_cast<double>(predicted.size());
}

double accuracy(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw ContractError("accuracy: sizes differ or empty");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

double micro_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ContractError("micro_f1: sizes differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double filtered_rank(std::span<const double> scores, NodeId target,
                     std::span<const NodeId> filtered) {
  if (target >= scores.size()) throw ContractError("filtered_rank: target out of range");
  std::vector<std::uint8_t> skip(scores.size(), 0);
  for (NodeId f : filtered) {
    if (f < skip.size() && f != target) skip[f] = 1;
  }
  const double s = scores[target];
  double higher = 0.0, equal = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == target || skip[i]) continue;
    if (scores[i] > s) higher += 1.0;
    else if (scores[i] == s) equal += 1.0;
  }
  return 1.0 + higher + 0.5 * equal;
}

MetricMap summarize_ranks(std::span<const double> ranks) {
  if (ranks.empty()) throw ContractError("summarize_ranks: no ranks");
  double rr = 0.0, r = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  for (double x : ranks) {
    rr += 1.0 / x;
    r += x;
    h1 += x <= 1.0 ? 1.0 : 0.0;
    h3 += x <= 3.0 ? 1.0 : 0.0;
    h10 += x <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  return {{"mrr", rr / n}, {"mr", r / n}, {"hits1", h1 / n}, {"hits3", h3 / n}, {"hits10", h10 / n}};
}

SemanticNeighborIndex evaluation_index(const DetModel& model, const Graph& g,
                                       const TrainConfig& config) {
  RefreshOptions options;
  options.k = config.k;
  options.candidate_count = config.candidate_count;
  options.seed = config.seed;
  options.epoch = 0;
  options.threads = config.threads;
  return refresh_index(model, g, options);
}

namespace {

using AnswerMap = std::map<std::pair<NodeId, TypeId>, std::vector<NodeId>>;

AnswerMap known_answers(const KgBundle& kg) {
  AnswerMap known;
  const auto r_count = static_cast<TypeId>(kg.relation_count());
  for (const auto* part : {&kg.train, &kg.valid, &kg.test}) {
    for (const Triple& t : *part) {
      known[{t.head, t.relation}].push_back(t.tail);
      known[{t.tail, t.relation + r_count}].push_back(t.head);
    }
  }
  return known;
}

const std::vector<Triple>& kg_split(const KgBundle& kg, Split split) {
  return split == Split::kTrain ? kg.train : split == Split::kValid ? kg.valid : kg.test;
}

template <typename T>
const std::vector<T>& pick_split(const std::vector<T>& train, const std::vector<T>& valid,
                                 const std::vector<T>& test, Split split) {
  return split == Split::kTrain ? train : split == Split::kValid ? valid : test;
}

}  // namespace

std::vector<KgRank> kg_ranks(const DetModel& model, const KgBundle& kg, Split split,
                             const SemanticNeighborIndex& index) {
  const AnswerMap known = known_answers(kg);
  const auto r_count = static_cast<TypeId>(kg.relation_count());
  std::vector<KgRank> ranks;
  for (const Triple& t : kg_split(kg, split)) {
    const std::pair<NodeId, std::pair<TypeId, NodeId>> queries[2] = {
        {t.head, {t.relation, t.tail}}, {t.tail, {t.relation + r_count, t.head}}};
    for (const auto& [from, rt] : queries) {
      const std::vector<double> scores = model.score_entities(kg.graph, from, rt.first, index);
      const std::vector<NodeId>& filter = known.at({from, rt.first});
      ranks.push_back({filtered_rank(scores, rt.second, filter), filtered_rank(scores, rt.second)});
    }
  }
  return ranks;
}

const char* primary_metric(Task task, const DatasetBundle& data) {
  switch (task) {
    case Task::kGraphRegression: return "mae";
    case Task::kKgCompletion: return "mrr";
    case Task::kNodeClassification: {
      const auto* nb = std::get_if<NodeBundle>(&data);
      return nb != nullptr && nb->graph.labels() && nb->graph.labels()->multilabel ? "micro_f1"
                                                                                  : "accuracy";
    }
  }
  return "?";
}

bool higher_is_better(Task task) { return task != Task::kGraphRegression; }

MetricMap evaluate(Task task, const DetModel& model, const DatasetBundle& data, Split split,
                   const SemanticNeighborIndex* index) {
  ad::NoGradScope no_grad;
  switch (task) {
    case Task::kGraphRegression: {
      const auto* set = std::get_if<GraphSetBundle>(&data);
      if (set == nullptr) throw ConfigError("graph-regression needs a graph-set bundle");
      const auto& samples = pick_split(set->train, set->valid, set->test, split);
      std::vector<double> predicted, truth;
      for (const GraphSample& s : samples) {
        predicted.push_back(model.head(model.forward_graph(s.graph).h).item());
        truth.push_back(s.target);
      }
      return {{"mae", mean_absolute_error(predicted, truth)}};
    }
    case Task::kNodeClassification: {
      const auto* nb = std::get_if<NodeBundle>(&data);
      if (nb == nullptr) throw ConfigError("node-classification needs a node bundle");
      if (index == nullptr) throw ContractError("evaluate: node classification needs an index");
      const NodeLabels& labels = *nb->graph.labels();
      const auto& nodes = pick_split(nb->train, nb->valid, nb->test, split);
      if (labels.multilabel) {
        std::vector<std::uint8_t> predicted, truth;
        for (NodeId v : nodes) {
          const ad::Tensor logits = model.head(model.forward_node(nb->graph, {v}, *index).h);
          for (std::size_t c = 0; c < labels.class_count; ++c) {
            predicted.push_back(logits.at(0, c) > 0.0 ? 1 : 0);
            truth.push_back(labels.multi[v * labels.class_count + c]);
          }
        }
        return {{"micro_f1", micro_f1(predicted, truth)}};
      }
      std::vector<std::int32_t> predicted, truth;
      for (NodeId v : nodes) {
        const ad::Tensor logits = model.head(model.forward_node(nb->graph, {v}, *index).h);
        const auto row = logits.values();
        predicted.push_back(
            static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        truth.push_back(labels.single[v]);
      }
      return {{"accuracy", accuracy(predicted, truth)}};
    }
    case Task::kKgCompletion: {
      const auto* kg = std::get_if<KgBundle>(&data);
      if (kg == nullptr) throw ConfigError("kg-completion needs a kg bundle");
      if (index == nullptr) throw ContractError("evaluate: kg completion needs an index");
      std::vector<double> filtered;
      for (const KgRank& r : kg_ranks(model, *kg, split, *index)) filtered.push_back(r.filtered);
      return summarize_ranks(filtered);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Training.

namespace {

struct BatchLoss {
  ad::Tensor main;
  ad::Tensor sn;
};

ad::Tensor mean_of(const std::vector<ad::Tensor>& terms) {
  return ad::scalar_mul(ad::sum(ad::concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
}

ad::Tensor classification_loss(const ad::Tensor& logits, const NodeLabels& labels,
                               std::span<const NodeId> nodes) {
  if (!labels.multilabel) {
    std::vector<std::size_t> target;
    for (NodeId v : nodes) {
      if (labels.single[v] < 0) throw IntegrityError(fmt::format("node {} has no label", v));
      target.push_back(static_cast<std::size_t>(labels.single[v]));
    }
    return ad::scalar_mul(ad::mean(ad::pick(ad::row_log_softmax(logits), target)), -1.0);
  }
  const std::size_t c = labels.class_count;
  std::vector<double> y;
  for (NodeId v : nodes) {
    for (std::size_t j = 0; j < c; ++j) y.push_back(labels.multi[v * c + j]);
  }
  const ad::Tensor yt = ad::Tensor::from(nodes.size(), c, y);
  for (double& x : y) x = 1.0 - x;
  const ad::Tensor ny = ad::Tensor::from(nodes.size(), c, y);
  const ad::Tensor p = ad::sigmoid(logits);
  const ad::Tensor q = ad::add_scalar(ad::scalar_mul(p, -1.0), 1.0);
  const ad::Tensor ll =
      ad::add(ad::mul(yt, ad::clamped_log(p)), ad::mul(ny, ad::clamped_log(q)));
  return ad::scalar_mul(ad::mean(ll), -1.0);
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetBundle& data, DetModel& model,
                  const TrainHooks& hooks) {
  validate(config);
  const ModelConfig expected = model_config_for(config, data);
  if (!(expected == model.config())) {
    throw ConfigError("model does not match the training config and dataset");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto seconds = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const auto* nb = std::get_if<NodeBundle>(&data);
  const auto* kg = std::get_if<KgBundle>(&data);
  const auto* gs = std::get_if<GraphSetBundle>(&data);
  const Graph* graph = nb != nullptr ? &nb->graph : kg != nullptr ? &kg->graph : nullptr;
  const std::size_t item_count =
      nb != nullptr ? nb->train.size() : kg != nullptr ? kg->train.size() : gs->train.size();
  if (item_count == 0) throw ConfigError("training split is empty");
  const std::optional<std::size_t> negatives =
      config.negatives_per_node == 0 ? std::nullopt
                                     : std::optional<std::size_t>(config.negatives_per_node);
  const auto r_count = kg != nullptr ? static_cast<TypeId>(kg->relation_count()) : TypeId{0};

  Optimizer optimizer({config.optimizer, config.learning_rate, config.beta1, config.beta2,
                       config.epsilon},
                      model.parameters());
  const char* metric = primary_metric(config.task, data);
  const bool higher = higher_is_better(config.task);

  TrainResult result;
  SemanticNeighborIndex index;
  std::optional<double> best;
  std::vector<std::vector<double>> best_params = model.parameters().snapshot();
  std::size_t global_step = 0;
  std::size_t last_gain = 0;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    if (graph != nullptr && epoch % config.refresh_interval == 0) {
      RefreshOptions options{config.k, config.candidate_count, config.seed,
                             static_cast<std::int64_t>(epoch), config.threads};
      index = refresh_index(model, *graph, options);
    }
    std::vector<std::size_t> order(item_count);
    for (std::size_t i = 0; i < item_count; ++i) order[i] = i;
    Rng shuffle(Rng::derive(config.seed, epoch, 1));
    for (std::size_t i = item_count; i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
    const std::size_t batch = config.batch_size == 0 ? item_count
                                                     : std::min(config.batch_size, item_count);
    double sum_main = 0.0, sum_sn = 0.0, sum_total = 0.0;
    std::size_t batches = 0;

    for (std::size_t first = 0; first < item_count; first += batch) {
      const std::span<const std::size_t> items(order.data() + first,
                                               std::min(batch, item_count - first));
      StepRecord record{epoch, global_step, 0.0, 0.0, 0.0};
      Rng drop_rng(Rng::derive(config.seed, global_step, 2));
      Rng neg_rng(Rng::derive(config.seed, global_step, 3));
      ForwardOptions fo;
      fo.dropout = {config.dropout, &drop_rng};
      fo.epoch = static_cast<std::int64_t>(epoch);
      fo.refresh_interval = config.refresh_interval;
      fo.strict_staleness = config.strict_staleness;

      ad::Tape tape;
      ad::Tensor total;
      try {
        ad::TapeScope scope(tape);
        ad::Tensor main;
        std::optional<ad::Tensor> sn;
        if (nb != nullptr) {
          std::vector<NodeId> nodes;
          std::vector<ad::Tensor> rows;
          for (std::size_t i : items) {
            const NodeId v = nb->train[i];
            nodes.push_back(v);
            rows.push_back(model.head(model.forward_node(nb->graph, {v}, index, fo).h));
          }
          main = classification_loss(ad::concat_rows(rows), *nb->graph.labels(), nodes);
          if (config.alpha > 0.0) sn = batch_fetching_loss(model, nb->graph, nodes, negatives, neg_rng);
        } else if (kg != nullptr) {
          std::vector<ad::Tensor> rows;
          std::vector<std::size_t> targets;
          std::vector<NodeId> anchors;
          for (std::size_t i : items) {
            const Triple& t = kg->train[i];
            rows.push_back(model.head(model.forward_node(kg->graph, {t.head, t.relation, t.tail}, index, fo).h));
            targets.push_back(t.tail);
            rows.push_back(model.head(
                model.forward_node(kg->graph, {t.tail, t.relation + r_count, t.head}, index, fo).h));
            targets.push_back(t.head);
            anchors.push_back(t.head);
            anchors.push_back(t.tail);
          }
          main = ad::scalar_mul(ad::mean(ad::pick(ad::row_log_softmax(ad::concat_rows(rows)), targets)),
                                -1.0);
          if (config.alpha > 0.0) sn = batch_fetching_loss(model, kg->graph, anchors, negatives, neg_rng);
        } else {
          std::vector<ad::Tensor> errors;
          std::vector<ad::Tensor> sn_terms;
          for (std::size_t i : items) {
            const GraphSample& s = gs->train[i];
            const ad::Tensor pred = model.head(model.forward_graph(s.graph, fo).h);
            errors.push_back(ad::abs(ad::add_scalar(pred, -s.target)));
            if (config.alpha > 0.0) {
              std::vector<NodeId> all(s.graph.node_count());
              for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
              sn_terms.push_back(batch_fetching_loss(model, s.graph, all, negatives, neg_rng));
            }
          }
          main = mean_of(errors);
          if (config.alpha > 0.0) sn = mean_of(sn_terms);
        }
        total = sn ? ad::add(main, ad::scalar_mul(*sn, config.alpha)) : main;
        record.main = main.item();
        record.sn = sn ? sn->item() : 0.0;
        record.total = total.item();
        if (!std::isfinite(record.total)) throw NumericError("non-finite loss");
        model.parameters().zero_grad();
        tape.backward(total);
      } catch (const NumericError& e) {
        throw DivergenceError(fmt::format("training diverged at epoch {} step {}: {}", epoch,
                                          global_step, e.what()));
      }
      if (hooks.after_backward) hooks.after_backward(record, model);
      optimizer.step(model.parameters());
      result.steps.push_back(record);
      sum_main += record.main;
      sum_sn += record.sn;
      sum_total += record.total;
      ++batches;
      ++global_step;
      if (config.max_steps != 0 && global_step >= config.max_steps) {
        stop = true;
        break;
      }
    }
    const double b = static_cast<double>(batches);
    result.report.add(epoch, "train", "loss", sum_total / b, seconds());
    result.report.add(epoch, "train", "main_loss", sum_main / b, seconds());
    result.report.add(epoch, "train", "sn_loss", sum_sn / b, seconds());

    std::optional<SemanticNeighborIndex> eval_index;
    if (graph != nullptr) eval_index = evaluation_index(model, *graph, config);
    const MetricMap valid = evaluate(config.task, model, data, Split::kValid,
                                     eval_index ? &*eval_index : nullptr);
    for (const auto& [name, value] : valid) result.report.add(epoch, "valid", name, value, seconds());
    result.epochs_run = epoch + 1;
    const double score = valid.at(metric);
    // Ties keep the later snapshot; only strict gains reset the patience.
    if (!best || (higher ? score > *best : score < *best)) last_gain = epoch;
    if (!best || (higher ? score >= *best : score <= *best)) {
      best = score;
      result.best_epoch = epoch;
      best_params = model.parameters().snapshot();
    }
    if (hooks.after_epoch) hooks.after_epoch(epoch, valid);
    if (config.patience > 0 && epoch - last_gain >= config.patience) break;
  }
  model.parameters().restore(best_params);
  result.best_valid = best.value_or(0.0);

  std::optional<SemanticNeighborIndex> eval_index;
  if (graph != nullptr) eval_index = evaluation_index(model, *graph, config);
  result.test = evaluate(config.task, model, data, Split::kTest, eval_index ? &*eval_index : nullptr);
  for (const auto& [name, value] : result.test) {
    result.report.add(result.best_epoch, "test", name, value, seconds());
  }
  return result;
}

}  // namespace det

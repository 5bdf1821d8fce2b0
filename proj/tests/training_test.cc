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

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "det/errors.h"
#include "det/io.h"
#include "det/training.h"

namespace det {
namespace {

TrainConfig small(Task task) {
  TrainConfig c = default_train_config(task);
  c.layers = 1;
  c.hidden = 8;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.k = 4;
  c.epochs = 3;
  c.patience = 100;
  return c;
}

DatasetBundle small_nodes(std::uint64_t seed) {
  BlockCitationParams p;
  p.nodes = 45;
  return generate_block_citation(p, seed);
}

DatasetBundle small_graphs(std::uint64_t seed) {
  ToyGraphsParams p;
  p.graphs = 20;
  return generate_toy_graphs(p, seed);
}

DatasetBundle small_kg(std::uint64_t seed) {
  ToyKgParams p;
  p.groups = 3;
  p.group_size = 5;
  p.holdout = 0.2;
  return generate_toy_kg(p, seed);
}

TEST(Optimizer, SgdExample) {
  std::vector<double> p = {0.0, 0.0};
  const std::vector<double> g = {1.0, -2.0};
  MomentState s;
  optimizer_step({OptimizerKind::kSgd, 1.0}, p, g, s, 1);
  EXPECT_EQ(p, (std::vector<double>{-1.0, 2.0}));
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  for (OptimizerKind kind : {OptimizerKind::kSgd, OptimizerKind::kAdam, OptimizerKind::kAdamax}) {
    std::vector<double> p = {0.3, -1.2, 5.0};
    const std::vector<double> before = p;
    const std::vector<double> g(3, 0.0);
    MomentState s;
    for (std::size_t t = 1; t <= 5; ++t) optimizer_step({kind, 0.1}, p, g, s, t);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, FirstStepClosedForm) {
  const std::vector<double> g = {0.5, -3.0, 1e-3};
  for (OptimizerKind kind : {OptimizerKind::kAdam, OptimizerKind::kAdamax}) {
    std::vector<double> p = {1.0, 1.0, 1.0};
    MomentState s;
    const OptimizerSettings st{kind, 0.01, 0.9, 0.999, 1e-8};
    optimizer_step(st, p, g, s, 1);
    for (std::size_t i = 0; i < 3; ++i) {
      // m_hat = g; v_hat = g^2 (Adam) or |g| (Adamax)
      const double want = 1.0 - 0.01 * g[i] / (std::fabs(g[i]) + 1e-8);
      EXPECT_NEAR(p[i], want, 1e-15);
    }
  }
}

TEST(Optimizer, ShapeMismatch) {
  std::vector<double> p(3);
  const std::vector<double> g(2);
  MomentState s;
  EXPECT_THROW(optimizer_step({}, p, g, s, 1), ShapeError);
}

TEST(Metrics, PerfectPredictions) {
  const std::vector<double> y = {0.5, 1.5};
  EXPECT_EQ(mean_absolute_error(y, y), 0.0);
  const std::vector<std::int32_t> c = {0, 2, 1};
  EXPECT_EQ(accuracy(c, c), 1.0);
  const std::vector<double> ranks = {1.0, 1.0};
  const MetricMap m = summarize_ranks(ranks);
  EXPECT_EQ(m.at("mrr"), 1.0);
  EXPECT_EQ(m.at("mr"), 1.0);
}

TEST(Metrics, ConstantPredictorOnBalancedLabels) {
  const std::vector<std::int32_t> truth = {0, 1, 0, 1, 1, 0};
  const std::vector<std::int32_t> pred(6, 1);
  EXPECT_EQ(accuracy(pred, truth), 0.5);
}

TEST(Metrics, MicroF1) {
  const std::vector<std::uint8_t> truth = {1, 0, 1, 1, 0, 0};
  const std::vector<std::uint8_t> pred = {1, 1, 0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(micro_f1(pred, truth), 2.0 * 2 / (2.0 * 2 + 1 + 1));
  EXPECT_EQ(micro_f1(truth, truth), 1.0);
}

// Five triples over four entities with fixed scores per query.
TEST(Metrics, HandEnumeratedFilteredRanks) {
  // known: (0,r,1) (0,r,2) (1,r,3) (2,r,3) (3,r,0); test query (0,r,?) -> 2
  const std::vector<double> s0 = {0.1, 0.9, 0.5, 0.7};
  const std::vector<NodeId> known0 = {1, 2};
  EXPECT_EQ(filtered_rank(s0, 2, known0), 2.0);  // only 3 beats it once 1 is removed
  EXPECT_EQ(filtered_rank(s0, 2), 3.0);
  // query (1,r,?) -> 3, scores tie with entity 0
  const std::vector<double> s1 = {0.4, 0.2, 0.4, 0.4};
  const std::vector<NodeId> known1 = {3};
  EXPECT_EQ(filtered_rank(s1, 3, known1), 2.0);
  // query (3,r,?) -> 0, best score
  const std::vector<double> s3 = {0.8, 0.1, 0.2, 0.3};
  EXPECT_EQ(filtered_rank(s3, 0, std::vector<NodeId>{0}), 1.0);
  const std::vector<double> ranks = {2.0, 2.0, 1.0};
  const MetricMap m = summarize_ranks(ranks);
  EXPECT_EQ(m.at("mrr"), (0.5 + 0.5 + 1.0) / 3.0);
  EXPECT_EQ(m.at("mr"), 5.0 / 3.0);
  EXPECT_EQ(m.at("hits1"), 1.0 / 3.0);
  EXPECT_EQ(m.at("hits3"), 1.0);
}

TEST(Metrics, RankInvariantsOnModel) {
  const DatasetBundle data = small_kg(1);
  const TrainConfig c = small(Task::kKgCompletion);
  DetModel m(model_config_for(c, data));
  const auto& kg = std::get<KgBundle>(data);
  const auto idx = evaluation_index(m, kg.graph, c);
  for (const KgRank& r : kg_ranks(m, kg, Split::kTest, idx)) {
    EXPECT_LE(r.filtered, r.raw);
    EXPECT_GE(r.filtered, 1.0);
  }
  const MetricMap e = evaluate(Task::kKgCompletion, m, data, Split::kValid, &idx);
  EXPECT_LE(e.at("hits1"), e.at("hits3"));
  EXPECT_LE(e.at("hits3"), e.at("hits10"));
  EXPECT_LE(e.at("hits10"), 1.0);
}

TEST(Config, DefaultsPerTask) {
  const TrainConfig n = default_train_config(Task::kNodeClassification);
  EXPECT_EQ(n.optimizer, OptimizerKind::kAdam);
  EXPECT_EQ(n.learning_rate, 0.005);
  EXPECT_EQ(n.refresh_interval, 1u);
  const TrainConfig k = default_train_config(Task::kKgCompletion);
  EXPECT_EQ(k.optimizer, OptimizerKind::kAdamax);
  EXPECT_EQ(k.learning_rate, 0.01);
  EXPECT_EQ(k.refresh_interval, 10u);
  EXPECT_EQ(k.batch_size, 256u);
  const TrainConfig g = default_train_config(Task::kGraphRegression);
  EXPECT_EQ(g.alpha, 0.0);
  EXPECT_EQ(g.tau, 0.15);
  EXPECT_EQ(g.patience, 20u);
}

TEST(Config, ParseAndRoundTrip) {
  std::istringstream in("# run\nlearning_rate = 0.02\ntask = kg-completion\nseed=7\n\n");
  const TrainConfig c = parse_train_config(in, "cfg");
  EXPECT_EQ(c.task, Task::kKgCompletion);
  EXPECT_EQ(c.learning_rate, 0.02);
  EXPECT_EQ(c.optimizer, OptimizerKind::kAdamax);
  EXPECT_EQ(c.seed, 7u);
  std::istringstream again(format_train_config(c));
  const TrainConfig d = parse_train_config(again, "formatted");
  EXPECT_EQ(format_train_config(c), format_train_config(d));
}

TEST(Config, RejectsBadInput) {
  const auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_train_config(in, "cfg");
  };
  try {
    parse("seed = 1\nwarmup = 3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("seed = 1\nseed = 2\n"), ParseError);
  EXPECT_THROW(parse("seed 1\n"), ParseError);
  EXPECT_THROW(parse("seed = -1\n"), ParseError);
  EXPECT_THROW(parse("learning_rate = -0.1\n"), ConfigError);
  EXPECT_THROW(parse("tau = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("refresh_interval = 0\n"), ConfigError);
  EXPECT_THROW(parse("optimizer = rmsprop\n"), ParseError);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  TrainConfig c = small(Task::kNodeClassification);
  c.learning_rate = 0.0;
  const DatasetBundle data = small_nodes(1);
  DetModel m(model_config_for(c, data));
  const auto before = m.parameters().snapshot();
  train(c, data, m);
  EXPECT_EQ(m.parameters().snapshot(), before);
}

TEST(Train, OneEpochOneBatchOneStep) {
  TrainConfig c = small(Task::kNodeClassification);
  c.epochs = 1;
  const DatasetBundle data = small_nodes(2);
  DetModel m(model_config_for(c, data));
  const TrainResult r = train(c, data, m);
  EXPECT_EQ(r.steps.size(), 1u);
  EXPECT_EQ(r.epochs_run, 1u);
}

TEST(Train, LossDecomposition) {
  for (Task task : {Task::kNodeClassification, Task::kKgCompletion}) {
    TrainConfig c = small(task);
    c.alpha = 0.7;
    c.batch_size = 8;
    const DatasetBundle data = task == Task::kKgCompletion ? small_kg(3) : small_nodes(3);
    DetModel m(model_config_for(c, data));
    const TrainResult r = train(c, data, m);
    ASSERT_FALSE(r.steps.empty());
    for (const StepRecord& s : r.steps) EXPECT_NEAR(s.total, s.main + 0.7 * s.sn, 1e-12);
  }
}

TEST(Train, Reproducible) {
  for (Task task : {Task::kNodeClassification, Task::kGraphRegression, Task::kKgCompletion}) {
    TrainConfig c = small(task);
    c.batch_size = 8;
    c.dropout = 0.1;
    const DatasetBundle data = task == Task::kKgCompletion     ? small_kg(4)
                               : task == Task::kGraphRegression ? small_graphs(4)
                                                                : small_nodes(4);
    DetModel a(model_config_for(c, data)), b(model_config_for(c, data));
    const TrainResult ra = train(c, data, a), rb = train(c, data, b);
    std::ostringstream ca, cb;
    ra.report.write_csv(ca);
    rb.report.write_csv(cb);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(a.parameters().snapshot(), b.parameters().snapshot());
  }
}

TEST(Train, EarlyStoppingKeepsBestSnapshot) {
  TrainConfig c = small(Task::kNodeClassification);
  c.epochs = 12;
  c.patience = 3;
  c.learning_rate = 0.05;
  const DatasetBundle data = small_nodes(5);
  DetModel m(model_config_for(c, data));
  double best_seen = -1.0;
  TrainHooks hooks;
  hooks.after_epoch = [&](std::size_t, const MetricMap& v) {
    best_seen = std::max(best_seen, v.at("accuracy"));
  };
  const TrainResult r = train(c, data, m, hooks);
  EXPECT_EQ(r.best_valid, best_seen);
  const auto& nb = std::get<NodeBundle>(data);
  const auto idx = evaluation_index(m, nb.graph, c);
  EXPECT_EQ(evaluate(c.task, m, data, Split::kValid, &idx).at("accuracy"), r.best_valid);
  EXPECT_LE(r.best_epoch, r.epochs_run);
}

// One 10-node graph and its target, fitted until the loss vanishes.
TEST(Train, OverfitsTinyRegression) {
  GraphSetBundle set;
  std::vector<Edge> edges;
  for (NodeId v = 0; v < 10; ++v) edges.push_back({v, static_cast<NodeId>((v + 1) % 10)});
  edges.push_back({0, 5});
  set.train.push_back({Graph(10, edges), 0.7});
  set.valid = set.train;
  set.test = set.train;
  const DatasetBundle data = set;
  TrainConfig c = small(Task::kGraphRegression);
  c.epochs = 500;
  c.patience = 1000;
  c.learning_rate = 0.001;
  DetModel m(model_config_for(c, data));
  const TrainResult r = train(c, data, m);
  ASSERT_EQ(r.steps.size(), 500u);
  // An L1 loss under a flat rate keeps jittering, so judge the returned model.
  EXPECT_LT(evaluate(c.task, m, data, Split::kTrain).at("mae"), 1e-3);
  EXPECT_GT(r.steps.front().main, 0.1);
}

TEST(Train, TaskDatasetMismatch) {
  TrainConfig c = small(Task::kGraphRegression);
  const DatasetBundle data = small_nodes(1);
  EXPECT_THROW(model_config_for(c, data), ConfigError);
}

}  // namespace
}  // namespace det

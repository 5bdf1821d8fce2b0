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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "det/errors.h"
#include "det/io.h"
#include "det/model.h"
#include "det/semantic_index.h"
#include "det/training.h"

namespace det {
namespace {

Graph random_graph(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (rng.uniform() < p) edges.push_back({u, v});
    }
  }
  return Graph(n, std::move(edges));
}

ad::Tensor random_embeddings(std::size_t n, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * h);
  for (double& x : v) x = rng.normal();
  return ad::Tensor::from(n, h, std::move(v));
}

struct ScorerFixture {
  ParameterStore store;
  Rng rng;
  SemanticScorer scorer;
  explicit ScorerFixture(std::size_t h, std::size_t heads = 2,
                         SemanticOperator op = SemanticOperator::kDifference)
      : rng(5), scorer(store, "s", h, heads, op, rng) {}
};

double direct_score(const SemanticScorer& s, const ad::Tensor& x, NodeId v, NodeId u) {
  const std::size_t h = x.cols();
  double total = 0.0;
  for (std::size_t a = 0; a < s.heads(); ++a) {
    double z = s.bias().at(0, a);
    for (std::size_t c = 0; c < h; ++c) z += s.weight().at(a, c) * (x.at(v, c) - x.at(u, c));
    total += 1.0 / (1.0 + std::exp(-z));
  }
  return total / static_cast<double>(s.heads());
}

TEST(Index, InvariantsHold) {
  const Graph g = random_graph(40, 0.1, 1);
  ScorerFixture f(6);
  const ad::Tensor x = random_embeddings(40, 6, 2);
  const auto idx = refresh_index(f.scorer, g, x, {5, 10, 3, 0, 1});
  EXPECT_EQ(idx.k, 5u);
  for (NodeId v = 0; v < 40; ++v) {
    const auto n = idx.neighbors(v);
    EXPECT_LE(n.size(), 5u);
    std::set<NodeId> seen;
    for (std::size_t i = 0; i < n.size(); ++i) {
      EXPECT_NE(n[i].node, v);
      EXPECT_FALSE(g.adjacent(v, n[i].node));
      EXPECT_TRUE(seen.insert(n[i].node).second);
      EXPECT_GT(n[i].score, 0.0);
      EXPECT_LT(n[i].score, 1.0);
      if (i > 0) EXPECT_GE(n[i - 1].score, n[i].score);
    }
  }
}

TEST(Index, LargeKHoldsWholePool) {
  const Graph g = random_graph(20, 0.2, 3);
  ScorerFixture f(4);
  const ad::Tensor x = random_embeddings(20, 4, 4);
  const auto idx = refresh_index(f.scorer, g, x, {100, 1024, 0, 0, 1});
  for (NodeId v = 0; v < 20; ++v) {
    EXPECT_EQ(idx.neighbors(v).size(), distant_pool(g, v).size());
  }
}

TEST(Index, ExhaustiveOracle) {
  const Graph g = random_graph(50, 0.08, 5);
  ScorerFixture f(6);
  const ad::Tensor x = random_embeddings(50, 6, 6);
  const auto idx = refresh_index(f.scorer, g, x, {7, 50, 9, 0, 1});
  for (NodeId v = 0; v < 50; ++v) {
    std::vector<std::pair<double, NodeId>> all;
    for (NodeId u = 0; u < 50; ++u) {
      if (u == v || g.adjacent(u, v)) continue;
      all.push_back({-direct_score(f.scorer, x, v, u), u});
    }
    std::sort(all.begin(), all.end());
    const auto got = idx.neighbors(v);
    ASSERT_EQ(got.size(), std::min<std::size_t>(7, all.size()));
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].node, all[i].second);
      EXPECT_NEAR(got[i].score, -all[i].first, 1e-12);
    }
  }
}

TEST(Index, DeterministicAndThreadIndependent) {
  const Graph g = random_graph(60, 0.05, 7);
  ScorerFixture f(4);
  const ad::Tensor x = random_embeddings(60, 4, 8);
  const auto a = refresh_index(f.scorer, g, x, {4, 8, 2, 3, 1});
  const auto b = refresh_index(f.scorer, g, x, {4, 8, 2, 3, 1});
  const auto c = refresh_index(f.scorer, g, x, {4, 8, 2, 3, 3});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  const auto d = refresh_index(f.scorer, g, x, {4, 8, 2, 4, 1});
  EXPECT_NE(a, d);
  EXPECT_EQ(a.epoch_stamp, 3);
  std::ostringstream sa, sb;
  write_index(sa, a);
  write_index(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Index, EmptyPoolGivesEmptyList) {
  const Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
  ScorerFixture f(2);
  const auto idx = refresh_index(f.scorer, g, random_embeddings(3, 2, 1), {2, 10, 0, 0, 1});
  for (NodeId v = 0; v < 3; ++v) EXPECT_TRUE(idx.neighbors(v).empty());
  EXPECT_THROW(refresh_index(f.scorer, g, random_embeddings(3, 2, 1), {0, 10, 0, 0, 1}),
               ContractError);
}

TEST(Index, WriteFormat) {
  SemanticNeighborIndex idx;
  idx.k = 2;
  idx.entries = {{{2, 0.75}, {1, 0.5}}, {}, {{0, 0.125}}};
  std::ostringstream out;
  write_index(out, idx);
  EXPECT_EQ(out.str(), "0\t2\t0.750000\n0\t1\t0.500000\n2\t0\t0.125000\n");
}

// One head on a 1-d embedding: f_s(c, x) = sigmoid(c - x).
struct Calibrated {
  ParameterStore store;
  Rng rng{1};
  SemanticScorer scorer{store, "s", 1, 1, SemanticOperator::kDifference, rng};
  Calibrated(double w, double b) {
    ad::Tensor ws = scorer.weight(), bs = scorer.bias();
    ws.mutable_values()[0] = w;
    bs.mutable_values()[0] = b;
  }
};

TEST(Fetching, IndifferentScorerGivesZero) {
  Calibrated c(0.0, 0.0);
  const ad::Tensor loss = fetching_loss(c.scorer, ad::Tensor::row({0.3}),
                                        ad::Tensor::from(2, 1, {1.0, -4.0}),
                                        ad::Tensor::from(3, 1, {2.0, 0.0, 9.0}));
  EXPECT_NEAR(loss.item(), 0.0, 1e-9);
}

TEST(Fetching, CalibratedCase) {
  Calibrated c(1.0, 0.0);
  const double z = std::log(9.0);
  const ad::Tensor loss = fetching_loss(c.scorer, ad::Tensor::row({0.0}), ad::Tensor::row({-z}),
                                        ad::Tensor::row({z}));
  EXPECT_NEAR(loss.item(), std::log(0.1) - std::log(0.9), 1e-12);
  EXPECT_NEAR(loss.item(), -2.1972, 1e-4);
}

TEST(Fetching, ClampBound) {
  Calibrated c(1e6, 0.0);
  const double bound = 2.0 * std::fabs(std::log(1e-7));
  const ad::Tensor worst = fetching_loss(c.scorer, ad::Tensor::row({0.0}), ad::Tensor::row({5.0}),
                                         ad::Tensor::row({-5.0}));
  EXPECT_LE(std::fabs(worst.item()), bound + 1e-9);
  const ad::Tensor best = fetching_loss(c.scorer, ad::Tensor::row({0.0}), ad::Tensor::row({-5.0}),
                                        ad::Tensor::row({5.0}));
  EXPECT_LE(std::fabs(best.item()), bound + 1e-9);
}

TEST(Fetching, EmptySetsContributeZero) {
  Calibrated c(1.0, 0.0);
  const ad::Tensor loss =
      fetching_loss(c.scorer, ad::Tensor::row({0.0}), ad::Tensor::row({1.0}), ad::Tensor{});
  EXPECT_EQ(loss.item(), 0.0);
}

TEST(Fetching, MultiHeadAveragesScores) {
  ScorerFixture f(3, 3);
  const ad::Tensor center = random_embeddings(1, 3, 1), others = random_embeddings(4, 3, 2);
  const ad::Tensor s = fetching_scores(f.scorer, center, others);
  const ad::Tensor all = ad::concat_rows({center, others});
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(s.at(r, 0), direct_score(f.scorer, all, 0, static_cast<NodeId>(r + 1)), 1e-12);
  }
}

ModelConfig cluster_model(const NodeBundle& b, std::uint64_t seed) {
  ModelConfig c;
  c.mode = ModelMode::kEgoNode;
  c.layers = 1;
  c.hidden = 16;
  c.heads = 2;
  c.ffn_hidden = 32;
  c.feature_dim = b.graph.features()->cols;
  c.class_count = b.graph.labels()->class_count;
  c.seed = seed;
  return c;
}

double separation(const DetModel& m, const Graph& g, std::uint64_t seed) {
  ad::NoGradScope ng;
  std::vector<NodeId> all(g.node_count());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  const ad::Tensor x = m.node_tokens(g, all);
  Rng rng(seed);
  double pos = 0.0, neg = 0.0;
  std::size_t np = 0, nn = 0;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    const ad::Tensor c = ad::select_row(x, v);
    for (NodeId u : g.neighbors(v)) {
      pos += fetching_scores(m.first_scorer(), c, ad::select_row(x, u)).item();
      ++np;
    }
    for (NodeId u : sample_distant_negatives(g, v, 4, rng).members) {
      neg += fetching_scores(m.first_scorer(), c, ad::select_row(x, u)).item();
      ++nn;
    }
  }
  return pos / static_cast<double>(np) - neg / static_cast<double>(nn);
}

TEST(Fetching, TrainingSeparatesNeighbors) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NodeBundle b = generate_planted_cluster({}, seed);
    DetModel m(cluster_model(b, seed));
    const double before = separation(m, b.graph, 99);
    Optimizer opt({OptimizerKind::kAdam, 0.005}, m.parameters());
    std::vector<NodeId> batch(b.graph.node_count());
    for (NodeId v = 0; v < batch.size(); ++v) batch[v] = v;
    for (std::size_t step = 0; step < 200; ++step) {
      Rng rng(Rng::derive(seed, step, 3));
      m.parameters().zero_grad();
      ad::Tape tape;
      ad::TapeScope scope(tape);
      tape.backward(batch_fetching_loss(m, b.graph, batch, std::nullopt, rng));
      opt.step(m.parameters());
    }
    improved += separation(m, b.graph, 99) > before;
  }
  EXPECT_GE(improved, 4);
}

TEST(Fetching, BatchMultiplicityWeights) {
  const NodeBundle b = generate_planted_cluster({}, 1);
  DetModel m(cluster_model(b, 1));
  const std::vector<NodeId> once = {3, 3, 7};
  Rng r1(4), r2(4);
  const double a = batch_fetching_loss(m, b.graph, once, 2, r1).item();
  EXPECT_TRUE(std::isfinite(a));
  const std::vector<NodeId> empty;
  EXPECT_THROW(batch_fetching_loss(m, b.graph, empty, 2, r2), ContractError);
}

}  // namespace
}  // namespace det

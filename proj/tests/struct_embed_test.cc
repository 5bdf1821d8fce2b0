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

#include <vector>

#include <gtest/gtest.h>

#include "det/errors.h"
#include "det/graph.h"
#include "det/struct_embed.h"

namespace det {
namespace {

bool rows_equal(const ad::Tensor& a, const ad::Tensor& table, std::size_t row) {
  for (std::size_t c = 0; c < a.cols(); ++c) {
    if (a.at(0, c) != table.at(row, c)) return false;
  }
  return true;
}

ad::Tensor random_row(std::size_t h, Rng& rng) {
  std::vector<double> v(h);
  for (double& x : v) x = rng.normal();
  return ad::Tensor::row(std::move(v));
}

TEST(Centrality, Lookup) {
  ParameterStore store;
  Rng rng(1);
  CentralityTable t(store, "c", 4, 6, rng);
  EXPECT_EQ(t.table().rows(), 6u);
  EXPECT_TRUE(rows_equal(centrality_embedding(t, 0), t.table(), 0));
  EXPECT_TRUE(rows_equal(centrality_embedding(t, 3), t.table(), 3));
  EXPECT_TRUE(rows_equal(centrality_embedding(t, 4), t.table(), 4));
  EXPECT_TRUE(rows_equal(centrality_embedding(t, 5), t.table(), 5));
  EXPECT_TRUE(rows_equal(centrality_embedding(t, 900), t.table(), 5));
  EXPECT_THROW(centrality_embedding(t, -1), ContractError);
}

TEST(Centrality, EqualDegreeEqualEmbedding) {
  ParameterStore store;
  Rng rng(2);
  CentralityTable t(store, "c", 8, 4, rng);
  const Graph g(4, {{0, 1}, {2, 3}});
  const ad::Tensor a = centrality_embedding(t, static_cast<std::int64_t>(degree(g, 0)));
  const ad::Tensor b = centrality_embedding(t, static_cast<std::int64_t>(degree(g, 3)));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(a.at(0, c), b.at(0, c));
}

TEST(Spd, Lookup) {
  ParameterStore store;
  Rng rng(3);
  SpdTable t(store, "d", 3, 4, rng);
  EXPECT_EQ(t.table().rows(), 5u);
  EXPECT_TRUE(rows_equal(spd_embedding(t, 0), t.table(), 0));
  EXPECT_TRUE(rows_equal(spd_embedding(t, 7), t.table(), 3));
  EXPECT_TRUE(rows_equal(spd_embedding(t, kUnreachable), t.table(), 4));
  EXPECT_EQ(t.unreachable_row(), 4u);
}

TEST(Spd, EgoGraphNeighborsUseRowOne) {
  ParameterStore store;
  Rng rng(4);
  SpdTable t(store, "d", 4, 4, rng);
  const Graph g(6, {{0, 1}, {0, 2}, {0, 3}, {3, 4}, {4, 5}});
  const EgoGraph ego = ego_graph(g, 0);
  const auto dist = bfs_distances(g, 0);
  for (std::size_t i = 1; i < ego.nodes.size(); ++i) {
    EXPECT_EQ(t.bucket(dist[ego.nodes[i]]), 1u);
  }
  EXPECT_EQ(t.bucket(dist[5]), 3u);
}

TEST(Atom, ShapeAndVocabulary) {
  ParameterStore store;
  Rng rng(5);
  AtomTransformer at(store, "a", 8, 2, 16, 1, 3, rng);
  const ad::Tensor x = random_row(8, rng), y = random_row(8, rng);
  for (TypeId r = 0; r < 3; ++r) {
    const ad::Tensor e = edge_type_encoding(at, x, r, y);
    EXPECT_EQ(e.rows(), 1u);
    EXPECT_EQ(e.cols(), 8u);
  }
  EXPECT_THROW(edge_type_encoding(at, x, 3, y), VocabularyError);
}

TEST(Atom, OrderMatters) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterStore store;
    Rng rng(100 + seed);
    AtomTransformer at(store, "a", 8, 2, 16, 1, 2, rng);
    const ad::Tensor x = random_row(8, rng), y = random_row(8, rng);
    const ad::Tensor a = edge_type_encoding(at, x, 1, y);
    const ad::Tensor b = edge_type_encoding(at, y, 1, x);
    double diff = 0.0;
    for (std::size_t c = 0; c < 8; ++c) diff = std::max(diff, std::fabs(a.at(0, c) - b.at(0, c)));
    EXPECT_GT(diff, 1e-9);
  }
}

TEST(Atom, ZeroLayersPassesVirtualToken) {
  ParameterStore store;
  Rng rng(6);
  AtomTransformer at(store, "a", 4, 1, 8, 0, 2, rng);
  const ad::Tensor e = edge_type_encoding(at, random_row(4, rng), 0, random_row(4, rng));
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(e.at(0, c), at.virtual_token().at(0, c) + at.slot_embeddings().at(0, c));
  }
}

TEST(Atom, BatchMatchesSingle) {
  ParameterStore store;
  Rng rng(7);
  AtomTransformer at(store, "a", 8, 2, 16, 2, 4, rng);
  std::vector<ad::Tensor> xs, ys;
  std::vector<TypeId> rels = {0, 3, 1, 1, 2};
  for (std::size_t i = 0; i < rels.size(); ++i) {
    xs.push_back(random_row(8, rng));
    ys.push_back(random_row(8, rng));
  }
  const ad::Tensor batch = at.encode_batch(ad::concat_rows(xs), rels, ad::concat_rows(ys));
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const ad::Tensor one = at.encode(xs[i], rels[i], ys[i]);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(batch.at(i, c), one.at(0, c), 1e-12);
  }
}

// Only rows that were looked up receive gradient, so a step leaves the rest intact.
TEST(Tables, GradientReachesOnlyUsedRows) {
  ParameterStore store;
  Rng rng(8);
  CentralityTable cent(store, "c", 5, 4, rng);
  SpdTable spd(store, "d", 3, 4, rng);
  AtomTransformer at(store, "a", 4, 1, 8, 1, 3, rng);
  const auto before = store.snapshot();
  const ad::Tensor x = random_row(4, rng), y = random_row(4, rng);
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const ad::Tensor w = random_row(4, rng);
    const ad::Tensor loss = ad::sum(ad::mul(
        ad::add(ad::add(ad::add(centrality_embedding(cent, 2), centrality_embedding(cent, 40)),
                        spd_embedding(spd, 1)),
                edge_type_encoding(at, x, 2, y)),
        w));
    tape.backward(loss);
  }
  for (const auto& p : store.entries()) {
    ad::Tensor t = p.tensor;
    for (std::size_t i = 0; i < t.size(); ++i) t.mutable_values()[i] -= 0.1 * t.grad()[i];
  }
  const auto after = store.snapshot();
  const auto changed = [&](std::size_t param, std::size_t row, std::size_t cols) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      any |= before[param][row * cols + c] != after[param][row * cols + c];
    }
    return any;
  };
  // parameter order: centrality, spd, then the atom relation table
  for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(changed(0, r, 4), r == 2 || r == 6) << r;
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(changed(1, r, 4), r == 1) << r;
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(changed(2, r, 4), r == 2) << r;
}

}  // namespace
}  // namespace det

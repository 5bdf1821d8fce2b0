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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "det/autodiff.h"
#include "det/encoders.h"
#include "det/errors.h"
#include "det/parameters.h"
#include "det/rng.h"
#include "oracles.h"

namespace det {
namespace {

using oracle::Mat;
using oracle::to_mat;

ad::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return ad::Tensor::from(r, c, std::move(v));
}

void randomize(ParameterStore& store, Rng& rng) {
  for (const auto& p : store.entries()) {
    ad::Tensor t = p.tensor;
    for (double& x : t.mutable_values()) x = 0.5 * rng.normal();
  }
}

oracle::Tail tail_of(const BlockTail& t) {
  return {to_mat(t.out_weight()),    to_mat(t.out_bias()),      to_mat(t.norm1_gain()),
          to_mat(t.norm1_shift()),   to_mat(t.ffn_in_weight()), to_mat(t.ffn_in_bias()),
          to_mat(t.ffn_out_weight()), to_mat(t.ffn_out_bias()), to_mat(t.norm2_gain()),
          to_mat(t.norm2_shift())};
}

TEST(Attention, SingleRow) {
  Rng rng(1);
  const ad::Tensor q = random_tensor(1, 4, rng), k = random_tensor(1, 4, rng),
                   v = random_tensor(1, 4, rng);
  const AttentionResult r = scaled_dot_attention(q, k, v);
  EXPECT_EQ(r.scores.item(), 1.0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(r.out.at(0, c), v.at(0, c));
}

TEST(Attention, ZeroQueryGivesColumnMean) {
  Rng rng(2);
  const ad::Tensor k = random_tensor(5, 3, rng), v = random_tensor(5, 3, rng);
  const AttentionResult r = scaled_dot_attention(ad::Tensor::zeros(5, 3), k, v);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(r.scores.at(i, j), 0.2, 1e-15);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t j = 0; j < 5; ++j) m += v.at(j, c) / 5.0;
      EXPECT_NEAR(r.out.at(i, c), m, 1e-14);
    }
  }
}

TEST(Attention, MatchesDenseLoops) {
  Rng rng(3);
  const ad::Tensor q = random_tensor(5, 4, rng), k = random_tensor(5, 4, rng),
                   v = random_tensor(5, 4, rng), b = random_tensor(5, 5, rng);
  const AttentionResult r = scaled_dot_attention(q, k, v, b);
  const Mat Q = to_mat(q), K = to_mat(k), V = to_mat(v), B = to_mat(b);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> z(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < 4; ++c) d += Q[i][c] * K[j][c];
      z[j] = d / 2.0 + B[i][j];
      EXPECT_NEAR(r.logits.at(i, j), z[j], 1e-12);
    }
    const auto p = oracle::softmax_row(z, std::vector<bool>(5, false));
    for (std::size_t c = 0; c < 4; ++c) {
      double o = 0.0;
      for (std::size_t j = 0; j < 5; ++j) o += p[j] * V[j][c];
      EXPECT_NEAR(r.out.at(i, c), o, 1e-10);
    }
  }
}

TEST(Attention, BiasShapeMismatch) {
  const ad::Tensor x = ad::Tensor::zeros(3, 2);
  EXPECT_THROW(scaled_dot_attention(x, x, x, ad::Tensor::zeros(2, 2)), ContractError);
}

struct StructuralFixture {
  ParameterStore store;
  Rng rng;
  StructuralLayer layer;
  StructuralFixture(std::size_t h, std::size_t heads, std::uint64_t seed)
      : rng(seed), layer(store, "st", h, heads, 2 * h, rng) {
    randomize(store, rng);
  }
  oracle::AttentionOut oracle(const ad::Tensor& x, const RelativePositions* pos, const Mat* bias,
                              const ad::AttentionMask* mask = nullptr) const {
    return oracle::structural_block(to_mat(x), to_mat(layer.query_weight()),
                                    to_mat(layer.key_weight()), to_mat(layer.value_weight()),
                                    layer.heads(), tail_of(layer.tail()),
                                    pos ? pos->buckets : std::vector<std::size_t>{},
                                    pos ? to_mat(pos->table) : Mat{}, bias, mask);
  }
};

RelativePositions ego_positions(std::size_t n, std::size_t h, Rng& rng) {
  RelativePositions p;
  p.buckets.assign(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) p.buckets[i * n + i] = 0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 1; j < n; ++j) {
      if (i != j) p.buckets[i * n + j] = 1 + rng.uniform_index(2);
    }
  }
  p.table = random_tensor(4, h, rng, 0.5);
  return p;
}

TEST(Structural, ZeroBiasIsExactIdentity) {
  StructuralFixture f(8, 2, 4);
  const ad::Tensor x = random_tensor(5, 8, f.rng);
  const RelativePositions pos = ego_positions(5, 8, f.rng);
  const ad::Tensor a = structural_encode(f.layer, x, &pos);
  const ad::Tensor b = structural_encode(f.layer, x, &pos, ad::Tensor::zeros(5, 5));
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(a.at(0, c), b.at(0, c));
}

TEST(Structural, SingleRowIsFeedForwardPath) {
  StructuralFixture f(6, 1, 5);
  const ad::Tensor x = random_tensor(1, 6, f.rng);
  const ad::Tensor out = structural_encode(f.layer, x, nullptr);
  const Mat v = oracle::mm(to_mat(x), to_mat(f.layer.value_weight()));
  const Mat want = oracle::apply_tail(tail_of(f.layer.tail()), to_mat(x), v);
  EXPECT_LT(oracle::max_abs_diff(want, out), 1e-12);
}

TEST(Structural, SixNodeEgoMatchesOracle) {
  StructuralFixture f(8, 2, 6);
  const ad::Tensor x = random_tensor(6, 8, f.rng);
  const RelativePositions pos = ego_positions(6, 8, f.rng);
  const ad::Tensor bias = random_tensor(6, 6, f.rng);
  const Mat bias_m = to_mat(bias);
  const LayerOutput got = f.layer.forward(x, &pos, bias);
  const auto want = f.oracle(x, &pos, &bias_m);
  EXPECT_LT(oracle::max_abs_diff(want.out, got.out), 1e-10);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_LT(oracle::max_abs_diff(want.scores[a], got.scores[a]), 1e-10);
    EXPECT_LT(oracle::max_abs_diff(want.logits[a], got.logits[a]), 1e-10);
  }
}

TEST(Structural, MaskedOracle) {
  StructuralFixture f(4, 1, 7);
  const ad::Tensor x = random_tensor(4, 4, f.rng);
  ad::AttentionMask mask(16, 0);
  mask[1] = mask[7] = mask[14] = 1;
  const LayerOutput got = f.layer.forward(x, nullptr, std::nullopt, &mask);
  const auto want = f.oracle(x, nullptr, nullptr, &mask);
  EXPECT_LT(oracle::max_abs_diff(want.out, got.out), 1e-10);
  EXPECT_EQ(got.scores[0].at(0, 1), 0.0);
  EXPECT_EQ(got.scores[0].at(1, 3), 0.0);
  EXPECT_EQ(got.scores[0].at(3, 2), 0.0);
}

TEST(Structural, BiasShapeMismatch) {
  StructuralFixture f(4, 1, 8);
  const ad::Tensor x = random_tensor(3, 4, f.rng);
  EXPECT_THROW(structural_encode(f.layer, x, nullptr, ad::Tensor::zeros(4, 4)), ContractError);
}

TEST(Structural, HiddenMustDivideHeads) {
  ParameterStore store;
  Rng rng(1);
  EXPECT_THROW(StructuralLayer(store, "x", 6, 4, 8, rng), ContractError);
}

TEST(Structural, PermutingNeighborsKeepsCenter) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    StructuralFixture f(8, 2, 100 + seed);
    const std::size_t n = 6;
    const ad::Tensor x = random_tensor(n, 8, f.rng);
    const RelativePositions pos = ego_positions(n, 8, f.rng);
    const ad::Tensor bias = random_tensor(n, n, f.rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 1; --i) std::swap(perm[i], perm[1 + f.rng.uniform_index(i)]);
    std::vector<double> xp(n * 8), bp(n * n);
    RelativePositions pp{std::vector<std::size_t>(n * n), pos.table};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 8; ++c) xp[i * 8 + c] = x.at(perm[i], c);
      for (std::size_t j = 0; j < n; ++j) {
        bp[i * n + j] = bias.at(perm[i], perm[j]);
        pp.buckets[i * n + j] = pos.buckets[perm[i] * n + perm[j]];
      }
    }
    const ad::Tensor a = structural_encode(f.layer, x, &pos, bias);
    const ad::Tensor b = structural_encode(f.layer, ad::Tensor::from(n, 8, xp), &pp,
                                           ad::Tensor::from(n, n, bp));
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a.at(0, c), b.at(0, c), 1e-10);
  }
}

struct SemanticFixture {
  ParameterStore store;
  Rng rng;
  SemanticLayer layer;
  SemanticFixture(std::size_t h, std::size_t heads, SemanticOperator op, std::uint64_t seed)
      : rng(seed), layer(store, "se", h, heads, 2 * h, op, rng) {
    randomize(store, rng);
  }
  oracle::AttentionOut oracle(const ad::Tensor& x, const Mat* bias) const {
    return oracle::semantic_block(to_mat(x), to_mat(layer.scorer().weight()),
                                  to_mat(layer.scorer().bias()),
                                  layer.scorer().op() == SemanticOperator::kWeightedL1,
                                  to_mat(layer.value_weight()), tail_of(layer.tail()), bias);
  }
};

TEST(Semantic, LogitExamples) {
  ParameterStore store;
  Rng rng(9);
  SemanticScorer s(store, "s", 2, 1, SemanticOperator::kDifference, rng);
  ad::Tensor w = s.weight(), b = s.bias();
  w.mutable_values()[0] = 1.0;
  w.mutable_values()[1] = 0.0;
  b.mutable_values()[0] = 0.0;
  const ad::Tensor z = semantic_logit(s, ad::Tensor::row({2, 5}), ad::Tensor::row({1, 5}));
  EXPECT_DOUBLE_EQ(z.item(), 1.0);
  EXPECT_NEAR(semantic_score(s, ad::Tensor::row({2, 5}), ad::Tensor::row({1, 5})).item(),
              0.7310586, 1e-7);
  b.mutable_values()[0] = -0.4;
  const ad::Tensor same = ad::Tensor::row({0.3, -1.2});
  EXPECT_EQ(semantic_logit(s, same, same).item(), -0.4);
  EXPECT_DOUBLE_EQ(semantic_score(s, same, same).item(), 1.0 / (1.0 + std::exp(0.4)));
}

TEST(Semantic, AntisymmetryIdentities) {
  for (const SemanticOperator op : {SemanticOperator::kDifference}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ParameterStore store;
      Rng rng(seed);
      SemanticScorer s(store, "s", 8, 3, op, rng);
      ad::Tensor b = s.bias();
      const ad::Tensor x = random_tensor(1, 8, rng), y = random_tensor(1, 8, rng);
      const ad::Tensor zxy = semantic_logit(s, x, y), zyx = semantic_logit(s, y, x);
      for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(zxy.at(0, a), -zyx.at(0, a));
      const ad::Tensor fxy = semantic_score(s, x, y), fyx = semantic_score(s, y, x);
      for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(fxy.at(0, a) + fyx.at(0, a), 1.0, 1e-12);
      for (double& v : b.mutable_values()) v = rng.normal();
      const ad::Tensor bxy = semantic_logit(s, x, y), byx = semantic_logit(s, y, x);
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_NEAR(bxy.at(0, a), -byx.at(0, a) + 2.0 * b.at(0, a), 1e-12);
      }
    }
  }
}

TEST(Semantic, WeightedL1IsSymmetric) {
  ParameterStore store;
  Rng rng(3);
  SemanticScorer s(store, "s", 5, 2, SemanticOperator::kWeightedL1, rng);
  const ad::Tensor x = random_tensor(1, 5, rng), y = random_tensor(1, 5, rng);
  const ad::Tensor a = semantic_logit(s, x, y), b = semantic_logit(s, y, x);
  for (std::size_t h = 0; h < 2; ++h) EXPECT_EQ(a.at(0, h), b.at(0, h));
}

TEST(Semantic, PairwiseMatchesPointwise) {
  for (const SemanticOperator op : {SemanticOperator::kDifference, SemanticOperator::kWeightedL1}) {
    ParameterStore store;
    Rng rng(12);
    SemanticScorer s(store, "s", 6, 2, op, rng);
    randomize(store, rng);
    const ad::Tensor x = random_tensor(4, 6, rng);
    for (std::size_t a = 0; a < 2; ++a) {
      const ad::Tensor p = s.pairwise(x, a);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          const ad::Tensor z = semantic_logit(s, ad::select_row(x, i), ad::select_row(x, j));
          EXPECT_NEAR(p.at(i, j), z.at(0, a), 1e-12);
        }
      }
      const ad::Tensor against = s.logits_against(ad::select_row(x, 0), x);
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(against.at(j, a), p.at(0, j), 1e-12);
    }
    std::vector<std::span<const double>> others;
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < 4; ++j) rows.push_back(x.row_values(j));
    for (const auto& r : rows) others.push_back(r);
    const auto means = s.mean_scores(rows[0], others);
    const ad::Tensor f = ad::sigmoid(s.logits_against(ad::select_row(x, 0), x));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(means[j], (f.at(j, 0) + f.at(j, 1)) / 2, 1e-12);
  }
}

TEST(Semantic, IdenticalInputsGiveUniformAttention) {
  SemanticFixture f(4, 1, SemanticOperator::kDifference, 13);
  ad::Tensor b = f.layer.scorer().bias();
  b.mutable_values()[0] = 0.0;
  const ad::Tensor row = random_tensor(1, 4, f.rng);
  const ad::Tensor x = ad::concat_rows({row, row, row, row});
  const LayerOutput out = f.layer.forward(x, std::nullopt);
  for (double v : out.scores[0].values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Semantic, ZeroBiasIsExactIdentity) {
  SemanticFixture f(6, 2, SemanticOperator::kDifference, 14);
  const ad::Tensor x = random_tensor(4, 6, f.rng);
  const ad::Tensor a = semantic_encode(f.layer, x);
  const ad::Tensor b = semantic_encode(f.layer, x, ad::Tensor::zeros(4, 4));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(a.at(0, c), b.at(0, c));
}

TEST(Semantic, CenterOnlyIsFeedForwardPath) {
  SemanticFixture f(4, 1, SemanticOperator::kDifference, 15);
  const ad::Tensor x = random_tensor(1, 4, f.rng);
  const Mat v = oracle::mm(to_mat(x), to_mat(f.layer.value_weight()));
  const Mat want = oracle::apply_tail(tail_of(f.layer.tail()), to_mat(x), v);
  EXPECT_LT(oracle::max_abs_diff(want, semantic_encode(f.layer, x)), 1e-12);
}

TEST(Semantic, MatchesOracle) {
  for (const SemanticOperator op : {SemanticOperator::kDifference, SemanticOperator::kWeightedL1}) {
    for (std::size_t heads : {1u, 2u}) {
      SemanticFixture f(8, heads, op, 16 + heads);
      const ad::Tensor x = random_tensor(4, 8, f.rng);
      const ad::Tensor bias = random_tensor(4, 4, f.rng);
      const Mat bm = to_mat(bias);
      const LayerOutput got = f.layer.forward(x, bias);
      const auto want = f.oracle(x, &bm);
      EXPECT_LT(oracle::max_abs_diff(want.out, got.out), 1e-10);
      for (std::size_t a = 0; a < heads; ++a) {
        EXPECT_LT(oracle::max_abs_diff(want.scores[a], got.scores[a]), 1e-10);
      }
    }
  }
}

TEST(Exchange, ZeroLambdaIsZero) {
  Rng rng(20);
  const ad::Tensor l = random_tensor(3, 3, rng);
  const std::vector<NodeId> ids = {4, 7, 9};
  const ad::Tensor b = bias_exchange(l, ids, ids, 0.0);
  for (double v : b.values()) EXPECT_EQ(v, 0.0);
}

TEST(Exchange, IdenticalListsCopyDetached) {
  Rng rng(21);
  ad::Tensor l = random_tensor(3, 3, rng);
  l.set_requires_grad(true);
  const std::vector<NodeId> ids = {4, 7, 9};
  const ad::Tensor b = bias_exchange(l, ids, ids, 1.0);
  EXPECT_FALSE(b.requires_grad());
  EXPECT_FALSE(b.same_as(l));
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(b.values()[k], l.values()[k]);
}

TEST(Exchange, PartialOverlapAlignment) {
  Rng rng(22);
  const ad::Tensor l = random_tensor(4, 4, rng);
  const std::vector<NodeId> src = {1, 2, 3, 4};
  const std::vector<NodeId> dst = {3, 8, 1};
  const ad::Tensor b = bias_exchange(l, src, dst, 2.0);
  std::size_t nonzero = 0;
  for (double v : b.values()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 4u);
  EXPECT_EQ(b.at(0, 0), 2.0 * l.at(2, 2));
  EXPECT_EQ(b.at(0, 2), 2.0 * l.at(2, 0));
  EXPECT_EQ(b.at(2, 0), 2.0 * l.at(0, 2));
  EXPECT_EQ(b.at(2, 2), 2.0 * l.at(0, 0));
  const std::vector<NodeId> disjoint = {10, 11};
  const ad::Tensor none = bias_exchange(l, src, disjoint, 1.0);
  for (double v : none.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(bias_exchange(l, dst, src, 1.0), ContractError);
}

TEST(Exchange, RowsStillNormalizeUnderLargeBias) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    StructuralFixture st(4, 2, 200 + trial);
    SemanticFixture se(4, 1, SemanticOperator::kDifference, 300 + trial);
    const ad::Tensor x = random_tensor(5, 4, rng);
    const ad::Tensor big = random_tensor(5, 5, rng, 30.0);
    for (const auto& s : st.layer.forward(x, nullptr, big).scores) {
      for (std::size_t i = 0; i < 5; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < 5; ++j) t += s.at(i, j);
        EXPECT_NEAR(t, 1.0, 1e-12);
      }
    }
    for (const auto& s : se.layer.forward(x, big).scores) {
      for (std::size_t i = 0; i < 5; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < 5; ++j) t += s.at(i, j);
        EXPECT_NEAR(t, 1.0, 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace det

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

// The two attention encoders and the logit exchange between them.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "det/autodiff.h"
#include "det/graph.h"
#include "det/parameters.h"
#include "det/rng.h"

namespace det {

struct AttentionResult {
  ad::Tensor out;     // n x h
  ad::Tensor scores;  // n x n, rows sum to one
  ad::Tensor logits;  // n x n, pre-softmax (bias included)
};

// logits = q k^T / sqrt(h) + bias; scores = row_softmax(logits, mask); out = scores v.
AttentionResult scaled_dot_attention(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                                     const std::optional<ad::Tensor>& bias = std::nullopt,
                                     const ad::AttentionMask* mask = nullptr);

// Distance bucket of every ordered pair of context rows plus the embedding of
// each bucket. The bucket embedding is added to the key and value inputs of
// the attended row, relative to the querying row.
struct RelativePositions {
  std::vector<std::size_t> buckets;  // n x n
  ad::Tensor table;                  // bucket_count x h
};

struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;
};

struct LayerOutput {
  ad::Tensor out;                   // n x h
  std::vector<ad::Tensor> scores;   // per head, n x n
  std::vector<ad::Tensor> logits;   // per head, n x n
};

// Output projection, residual + layer norm, feed-forward, residual + layer
// norm. Shared by every attention layer.
class BlockTail {
 public:
  BlockTail(ParameterStore& store, const std::string& prefix, std::size_t hidden,
            std::size_t ffn_hidden, Rng& rng);

  ad::Tensor apply(const ad::Tensor& inputs, const ad::Tensor& attended,
                   const DropoutContext& dropout) const;

  const ad::Tensor& out_weight() const { return wo_; }
  const ad::Tensor& out_bias() const { return bo_; }
  const ad::Tensor& norm1_gain() const { return ln1_g_; }
  const ad::Tensor& norm1_shift() const { return ln1_b_; }
  const ad::Tensor& ffn_in_weight() const { return w1_; }
  const ad::Tensor& ffn_in_bias() const { return b1_; }
  const ad::Tensor& ffn_out_weight() const { return w2_; }
  const ad::Tensor& ffn_out_bias() const { return b2_; }
  const ad::Tensor& norm2_gain() const { return ln2_g_; }
  const ad::Tensor& norm2_shift() const { return ln2_b_; }

 private:
  ad::Tensor wo_, bo_, ln1_g_, ln1_b_, w1_, b1_, w2_, b2_, ln2_g_, ln2_b_;
};

// Multi-head dot-product self-attention block over a node context.
class StructuralLayer {
 public:
  StructuralLayer(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                  std::size_t heads, std::size_t ffn_hidden, Rng& rng);

  LayerOutput forward(const ad::Tensor& inputs, const RelativePositions* positions,
                      const std::optional<ad::Tensor>& bias,
                      const ad::AttentionMask* mask = nullptr,
                      const DropoutContext& dropout = {}) const;

  // Head-averaged pre-softmax logits without any exchanged bias; detached.
  ad::Tensor raw_logits(const ad::Tensor& inputs, const RelativePositions* positions,
                        const ad::AttentionMask* mask = nullptr) const;

  std::size_t hidden() const { return hidden_; }
  std::size_t heads() const { return heads_; }
  const ad::Tensor& query_weight() const { return wq_; }
  const ad::Tensor& key_weight() const { return wk_; }
  const ad::Tensor& value_weight() const { return wv_; }
  const BlockTail& tail() const { return tail_; }

 private:
  std::size_t hidden_;
  std::size_t heads_;
  ad::Tensor wq_, wk_, wv_;
  BlockTail tail_;
};

// How the scorer compares two embeddings before the linear read-out.
enum class SemanticOperator {
  kDifference,  // W_s (x_i - x_j) + b_s
  kWeightedL1,  // W_s |x_i - x_j| + b_s
};

// Learnable similarity f_s(x_i, x_j) = sigmoid(W_s (x_i (-) x_j) + b_s), one
// row of W_s per head.
class SemanticScorer {
 public:
  SemanticScorer(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                 std::size_t heads, SemanticOperator op, Rng& rng);

  std::size_t heads() const { return heads_; }
  SemanticOperator op() const { return op_; }
  const ad::Tensor& weight() const { return ws_; }  // heads x h
  const ad::Tensor& bias() const { return bs_; }    // 1 x heads

  // n x n logits of one head over all context pairs.
  ad::Tensor pairwise(const ad::Tensor& x, std::size_t head) const;
  // m x heads logits z(center, others_r).
  ad::Tensor logits_against(const ad::Tensor& center, const ad::Tensor& others) const;
  // Untracked head-averaged f_s(center, others_r) for ranking.
  std::vector<double> mean_scores(std::span<const double> center,
                                  const std::vector<std::span<const double>>& others) const;

 private:
  std::size_t hidden_;
  std::size_t heads_;
  SemanticOperator op_;
  ad::Tensor ws_, bs_;
};

// Pre-activation z = W_s (x_i (-) x_j) + b_s, shape 1 x heads.
ad::Tensor semantic_logit(const SemanticScorer& scorer, const ad::Tensor& x_i,
                          const ad::Tensor& x_j);
// f_s = sigmoid(z).
ad::Tensor semantic_score(const SemanticScorer& scorer, const ad::Tensor& x_i,
                          const ad::Tensor& x_j);

// Attention whose logits come from the semantic scorer instead of q k^T.
class SemanticLayer {
 public:
  SemanticLayer(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                std::size_t heads, std::size_t ffn_hidden, SemanticOperator op, Rng& rng);

  LayerOutput forward(const ad::Tensor& inputs, const std::optional<ad::Tensor>& bias,
                      const ad::AttentionMask* mask = nullptr,
                      const DropoutContext& dropout = {}) const;
  ad::Tensor raw_logits(const ad::Tensor& inputs, const ad::AttentionMask* mask = nullptr) const;

  const SemanticScorer& scorer() const { return scorer_; }
  const ad::Tensor& value_weight() const { return wv_; }
  const BlockTail& tail() const { return tail_; }
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t hidden_;
  SemanticScorer scorer_;
  ad::Tensor wv_;
  BlockTail tail_;
};

// Center row of one structural block over an ego context (center first).
ad::Tensor structural_encode(const StructuralLayer& layer, const ad::Tensor& inputs,
                             const RelativePositions* positions,
                             const std::optional<ad::Tensor>& semantic_bias = std::nullopt);
// Center row of one semantic block over [center, semantic neighbors...].
ad::Tensor semantic_encode(const SemanticLayer& layer, const ad::Tensor& inputs,
                           const std::optional<ad::Tensor>& structural_bias = std::nullopt);

// Re-indexes `logits` (rows/cols labelled by source_nodes) onto target_nodes,
// scaled by lambda; pairs absent from the source are zero. Detached.
ad::Tensor bias_exchange(const ad::Tensor& logits, std::span<const NodeId> source_nodes,
                         std::span<const NodeId> target_nodes, double lambda);

}  // namespace det

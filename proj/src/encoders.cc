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

#include "det/encoders.h"

#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

AttentionResult scaled_dot_attention(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                                     const std::optional<ad::Tensor>& bias,
                                     const ad::AttentionMask* mask) {
  if (q.shape() != k.shape() || k.rows() != v.rows()) {
    throw ShapeError(fmt::format("attention: q {} k {} v {}", q.shape().str(), k.shape().str(),
                                 v.shape().str()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  ad::Tensor logits = ad::scalar_mul(ad::matmul_nt(q, k), scale);
  if (bias) {
    if (bias->shape() != logits.shape()) {
      throw ContractError(fmt::format("attention bias {} for {} logits", bias->shape().str(),
                                      logits.shape().str()));
    }
    logits = ad::add(logits, *bias);
  }
  ad::Tensor scores = ad::row_softmax(logits, std::nullopt, mask);
  return {ad::matmul(scores, v), scores, logits};
}

// ---------------------------------------------------------------------------

BlockTail::BlockTail(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                     std::size_t ffn_hidden, Rng& rng) {
  wo_ = store.add(prefix + ".out.w", hidden, hidden, Init::kXavier, rng);
  bo_ = store.add(prefix + ".out.b", 1, hidden, Init::kZeros, rng);
  ln1_g_ = store.add(prefix + ".norm1.g", 1, hidden, Init::kOnes, rng);
  ln1_b_ = store.add(prefix + ".norm1.b", 1, hidden, Init::kZeros, rng);
  w1_ = store.add(prefix + ".ffn1.w", hidden, ffn_hidden, Init::kXavier, rng);
  b1_ = store.add(prefix + ".ffn1.b", 1, ffn_hidden, Init::kZeros, rng);
  w2_ = store.add(prefix + ".ffn2.w", ffn_hidden, hidden, Init::kXavier, rng);
  b2_ = store.add(prefix + ".ffn2.b", 1, hidden, Init::kZeros, rng);
  ln2_g_ = store.add(prefix + ".norm2.g", 1, hidden, Init::kOnes, rng);
  ln2_b_ = store.add(prefix + ".norm2.b", 1, hidden, Init::kZeros, rng);
}

ad::Tensor BlockTail::apply(const ad::Tensor& inputs, const ad::Tensor& attended,
                            const DropoutContext& dropout) const {
  ad::Tensor projected = ad::affine(attended, wo_, bo_);
  if (dropout.rng != nullptr) projected = ad::dropout(projected, dropout.rate, *dropout.rng);
  ad::Tensor x = ad::layer_norm(ad::add(inputs, projected), ln1_g_, ln1_b_);
  ad::Tensor ff = ad::affine(ad::relu(ad::affine(x, w1_, b1_)), w2_, b2_);
  if (dropout.rng != nullptr) ff = ad::dropout(ff, dropout.rate, *dropout.rng);
  return ad::layer_norm(ad::add(x, ff), ln2_g_, ln2_b_);
}

// ---------------------------------------------------------------------------

StructuralLayer::StructuralLayer(ParameterStore& store, const std::string& prefix,
                                 std::size_t hidden, std::size_t heads, std::size_t ffn_hidden,
                                 Rng& rng)
    : hidden_(hidden),
      heads_(heads),
      wq_(store.add(prefix + ".q.w", hidden, hidden, Init::kXavier, rng)),
      wk_(store.add(prefix + ".k.w", hidden, hidden, Init::kXavier, rng)),
      wv_(store.add(prefix + ".v.w", hidden, hidden, Init::kXavier, rng)),
      tail_(store, prefix, hidden, ffn_hidden, rng) {
  if (heads == 0 || hidden % heads != 0) {
    throw ContractError(fmt::format("hidden size {} not divisible by {} heads", hidden, heads));
  }
}

LayerOutput StructuralLayer::forward(const ad::Tensor& inputs, const RelativePositions* positions,
                                     const std::optional<ad::Tensor>& bias,
                                     const ad::AttentionMask* mask,
                                     const DropoutContext& dropout) const {
  const std::size_t n = inputs.rows();
  if (inputs.cols() != hidden_) {
    throw ShapeError(fmt::format("structural layer: input {} for hidden {}", inputs.shape().str(),
                                 hidden_));
  }
  if (bias && (bias->rows() != n || bias->cols() != n)) {
    throw ContractError(
        fmt::format("structural layer: bias {} for a context of {}", bias->shape().str(), n));
  }
  if (positions != nullptr && positions->buckets.size() != n * n) {
    throw ContractError("structural layer: relative positions do not match the context");
  }
  const ad::Tensor q = ad::matmul(inputs, wq_);
  const ad::Tensor k = ad::matmul(inputs, wk_);
  const ad::Tensor v = ad::matmul(inputs, wv_);
  ad::Tensor pos_k, pos_v;
  if (positions != nullptr) {
    pos_k = ad::matmul(positions->table, wk_);
    pos_v = ad::matmul(positions->table, wv_);
  }
  const std::size_t dh = hidden_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  LayerOutput result;
  std::vector<ad::Tensor> head_out;
  for (std::size_t a = 0; a < heads_; ++a) {
    auto cols = [&](const ad::Tensor& t) {
      return heads_ == 1 ? t : ad::slice_cols(t, a * dh, dh);
    };
    const ad::Tensor qa = cols(q);
    std::optional<ad::Tensor> total_bias = bias;
    if (positions != nullptr) {
      ad::Tensor rel = ad::scalar_mul(
          ad::gather_pairs(ad::matmul_nt(qa, cols(pos_k)), positions->buckets), scale);
      total_bias = total_bias ? ad::add(rel, *total_bias) : rel;
    }
    AttentionResult att = scaled_dot_attention(qa, cols(k), cols(v), total_bias, mask);
    ad::Tensor out = att.out;
    if (positions != nullptr) {
      out = ad::add(out, ad::matmul(ad::bucket_sum(att.scores, positions->buckets,
                                                   positions->table.rows()),
                                    cols(pos_v)));
    }
    head_out.push_back(out);
    result.scores.push_back(att.scores);
    result.logits.push_back(att.logits);
  }
  const ad::Tensor attended = heads_ == 1 ? head_out.front() : ad::concat_cols(head_out);
  result.out = tail_.apply(inputs, attended, dropout);
  return result;
}

namespace {

ad::Tensor head_average(const std::vector<ad::Tensor>& logits) {
  const std::size_t n = logits.front().size();
  std::vector<double> out(n, 0.0);
  for (const ad::Tensor& l : logits) {
    for (std::size_t i = 0; i < n; ++i) out[i] += l.values()[i];
  }
  if (logits.size() > 1) {
    for (double& v : out) v /= static_cast<double>(logits.size());
  }
  return ad::Tensor::from(logits.front().rows(), logits.front().cols(), std::move(out));
}

}  // namespace

ad::Tensor StructuralLayer::raw_logits(const ad::Tensor& inputs, const RelativePositions* positions,
                                       const ad::AttentionMask* mask) const {
  ad::NoGradScope no_grad;
  return head_average(forward(inputs, positions, std::nullopt, mask).logits);
}

// ---------------------------------------------------------------------------

SemanticScorer::SemanticScorer(ParameterStore& store, const std::string& prefix,
                               std::size_t hidden, std::size_t heads, SemanticOperator op,
                               Rng& rng)
    : hidden_(hidden),
      heads_(heads),
      op_(op),
      ws_(store.add(prefix + ".scorer.w", heads, hidden, Init::kXavier, rng)),
      bs_(store.add(prefix + ".scorer.b", 1, heads, Init::kZeros, rng)) {
  if (heads == 0) throw ContractError("semantic scorer needs at least one head");
}

ad::Tensor SemanticScorer::pairwise(const ad::Tensor& x, std::size_t head) const {
  const ad::Tensor w = heads_ == 1 ? ws_ : ad::slice_rows(ws_, head, 1);
  const ad::Tensor b = heads_ == 1 ? bs_ : ad::slice_cols(bs_, head, 1);
  return op_ == SemanticOperator::kDifference ? ad::pairwise_difference_logits(x, w, b)
                                              : ad::pairwise_l1_logits(x, w, b);
}

ad::Tensor SemanticScorer::logits_against(const ad::Tensor& center,
                                          const ad::Tensor& others) const {
  if (center.rows() != 1 || center.cols() != hidden_ || others.cols() != hidden_) {
    throw ShapeError(fmt::format("semantic scorer: center {} others {} for hidden {}",
                                 center.shape().str(), others.shape().str(), hidden_));
  }
  // center - others == -(others - center) exactly in IEEE arithmetic.
  ad::Tensor diff = ad::scalar_mul(ad::sub(others, center), -1.0);
  if (op_ == SemanticOperator::kWeightedL1) diff = ad::abs(diff);
  return ad::add(ad::matmul_nt(diff, ws_), bs_);
}

std::vector<double> SemanticScorer::mean_scores(
    std::span<const double> center, const std::vector<std::span<const double>>& others) const {
  std::vector<double> out(others.size(), 0.0);
  const auto w = ws_.values();
  const auto b = bs_.values();
  for (std::size_t r = 0; r < others.size(); ++r) {
    double total = 0.0;
    for (std::size_t a = 0; a < heads_; ++a) {
      double z = 0.0;
      for (std::size_t c = 0; c < hidden_; ++c) {
        const double d = center[c] - others[r][c];
        z += (op_ == SemanticOperator::kWeightedL1 ? std::fabs(d) : d) * w[a * hidden_ + c];
      }
      z += b[a];
      total += z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    out[r] = total / static_cast<double>(heads_);
  }
  return out;
}

ad::Tensor semantic_logit(const SemanticScorer& scorer, const ad::Tensor& x_i,
                          const ad::Tensor& x_j) {
  if (x_i.shape() != x_j.shape() || x_i.rows() != 1) {
    throw ShapeError(fmt::format("semantic_logit: {} vs {}", x_i.shape().str(), x_j.shape().str()));
  }
  ad::Tensor diff = ad::sub(x_i, x_j);
  if (scorer.op() == SemanticOperator::kWeightedL1) diff = ad::abs(diff);
  return ad::add(ad::matmul_nt(diff, scorer.weight()), scorer.bias());
}

ad::Tensor semantic_score(const SemanticScorer& scorer, const ad::Tensor& x_i,
                          const ad::Tensor& x_j) {
  return ad::sigmoid(semantic_logit(scorer, x_i, x_j));
}

// ---------------------------------------------------------------------------

SemanticLayer::SemanticLayer(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                             std::size_t heads, std::size_t ffn_hidden, SemanticOperator op,
                             Rng& rng)
    : hidden_(hidden),
      scorer_(store, prefix, hidden, heads, op, rng),
      wv_(store.add(prefix + ".v.w", hidden, hidden, Init::kXavier, rng)),
      tail_(store, prefix, hidden, ffn_hidden, rng) {
  if (hidden % heads != 0) {
    throw ContractError(fmt::format("hidden size {} not divisible by {} heads", hidden, heads));
  }
}

LayerOutput SemanticLayer::forward(const ad::Tensor& inputs, const std::optional<ad::Tensor>& bias,
                                   const ad::AttentionMask* mask,
                                   const DropoutContext& dropout) const {
  const std::size_t n = inputs.rows();
  if (inputs.cols() != hidden_) {
    throw ShapeError(fmt::format("semantic layer: input {} for hidden {}", inputs.shape().str(),
                                 hidden_));
  }
  if (bias && (bias->rows() != n || bias->cols() != n)) {
    throw ContractError(
        fmt::format("semantic layer: bias {} for a context of {}", bias->shape().str(), n));
  }
  const std::size_t heads = scorer_.heads();
  const std::size_t dh = hidden_ / heads;
  const ad::Tensor v = ad::matmul(inputs, wv_);
  LayerOutput result;
  std::vector<ad::Tensor> head_out;
  for (std::size_t a = 0; a < heads; ++a) {
    ad::Tensor logits = scorer_.pairwise(inputs, a);
    if (bias) logits = ad::add(logits, *bias);
    ad::Tensor scores = ad::row_softmax(logits, std::nullopt, mask);
    head_out.push_back(ad::matmul(scores, heads == 1 ? v : ad::slice_cols(v, a * dh, dh)));
    result.scores.push_back(scores);
    result.logits.push_back(logits);
  }
  const ad::Tensor attended = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
  result.out = tail_.apply(inputs, attended, dropout);
  return result;
}

ad::Tensor SemanticLayer::raw_logits(const ad::Tensor& inputs, const ad::AttentionMask*) const {
  ad::NoGradScope no_grad;
  std::vector<ad::Tensor> logits;
  for (std::size_t a = 0; a < scorer_.heads(); ++a) logits.push_back(scorer_.pairwise(inputs, a));
  return head_average(logits);
}

// ---------------------------------------------------------------------------

ad::Tensor structural_encode(const StructuralLayer& layer, const ad::Tensor& inputs,
                             const RelativePositions* positions,
                             const std::optional<ad::Tensor>& semantic_bias) {
  return ad::select_row(layer.forward(inputs, positions, semantic_bias).out, 0);
}

ad::Tensor semantic_encode(const SemanticLayer& layer, const ad::Tensor& inputs,
                           const std::optional<ad::Tensor>& structural_bias) {
  return ad::select_row(layer.forward(inputs, structural_bias).out, 0);
}

ad::Tensor bias_exchange(const ad::Tensor& logits, std::span<const NodeId> source_nodes,
                         std::span<const NodeId> target_nodes, double lambda) {
  const std::size_t a = source_nodes.size();
  if (logits.rows() != a || logits.cols() != a) {
    throw ContractError(fmt::format("bias_exchange: logits {} for {} source nodes",
                                    logits.shape().str(), a));
  }
  std::unordered_map<NodeId, std::size_t> position;
  for (std::size_t i = 0; i < a; ++i) position.emplace(source_nodes[i], i);
  const std::size_t b = target_nodes.size();
  std::vector<double> out(b * b, 0.0);
  if (lambda != 0.0) {
    std::vector<std::ptrdiff_t> map(b, -1);
    for (std::size_t p = 0; p < b; ++p) {
      auto it = position.find(target_nodes[p]);
      if (it != position.end()) map[p] = static_cast<std::ptrdiff_t>(it->second);
    }
    for (std::size_t p = 0; p < b; ++p) {
      if (map[p] < 0) continue;
      for (std::size_t q = 0; q < b; ++q) {
        if (map[q] < 0) continue;
        out[p * b + q] = lambda * logits.at(static_cast<std::size_t>(map[p]),
                                            static_cast<std::size_t>(map[q]));
      }
    }
  }
  return ad::Tensor::from(b, b, std::move(out));
}

}  // namespace det

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

#include "det/struct_embed.h"

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

CentralityTable::CentralityTable(ParameterStore& store, const std::string& prefix,
                                 std::size_t max_degree, std::size_t hidden, Rng& rng)
    : max_degree_(max_degree),
      table_(store.add(prefix + ".centrality", max_degree + 2, hidden, Init::kNormal, rng)) {}

std::size_t CentralityTable::bucket(std::int64_t degree) const {
  if (degree < 0) throw ContractError(fmt::format("centrality: negative degree {}", degree));
  const auto d = static_cast<std::size_t>(degree);
  return d > max_degree_ ? max_degree_ + 1 : d;
}

ad::Tensor CentralityTable::embedding(std::int64_t degree) const {
  const std::size_t id = bucket(degree);
  return ad::embedding_lookup(table_, std::span<const std::size_t>(&id, 1));
}

ad::Tensor CentralityTable::lookup(std::span<const std::size_t> degrees) const {
  std::vector<std::size_t> ids(degrees.size());
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    ids[i] = degrees[i] > max_degree_ ? max_degree_ + 1 : degrees[i];
  }
  return ad::embedding_lookup(table_, ids);
}

SpdTable::SpdTable(ParameterStore& store, const std::string& prefix, std::size_t max_distance,
                   std::size_t hidden, Rng& rng)
    : max_distance_(max_distance),
      table_(store.add(prefix + ".spd", max_distance + 2, hidden, Init::kNormal, rng)) {}

ad::Tensor SpdTable::embedding(HopCount d) const {
  const std::size_t id = bucket(d);
  return ad::embedding_lookup(table_, std::span<const std::size_t>(&id, 1));
}

AtomTransformer::AtomTransformer(ParameterStore& store, const std::string& prefix,
                                 std::size_t hidden, std::size_t heads, std::size_t ffn_hidden,
                                 std::size_t layers, std::size_t relation_count, Rng& rng)
    : hidden_(hidden),
      relation_table_(store.add(prefix + ".relations", relation_count, hidden, Init::kNormal, rng,
                                0.1)),
      virtual_token_(store.add(prefix + ".virtual", 1, hidden, Init::kNormal, rng, 0.1)),
      slots_(store.add(prefix + ".slots", 4, hidden, Init::kNormal, rng, 0.1)) {
  for (std::size_t l = 0; l < layers; ++l) {
    layers_.push_back(std::make_unique<StructuralLayer>(
        store, fmt::format("{}.layer{}", prefix, l), hidden, heads, ffn_hidden, rng));
  }
}

ad::Tensor AtomTransformer::encode(const ad::Tensor& x_i, TypeId relation,
                                   const ad::Tensor& x_j) const {
  return encode_batch(x_i, std::span<const TypeId>(&relation, 1), x_j);
}

ad::Tensor AtomTransformer::encode_batch(const ad::Tensor& sources,
                                         std::span<const TypeId> relations,
                                         const ad::Tensor& targets) const {
  const std::size_t m = relations.size();
  if (sources.rows() != m || targets.rows() != m || sources.cols() != hidden_ ||
      targets.cols() != hidden_) {
    throw ShapeError(fmt::format("atom transformer: sources {} targets {} for {} relations",
                                 sources.shape().str(), targets.shape().str(), m));
  }
  std::vector<std::size_t> rel_ids(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (relations[r] >= relation_table_.rows()) {
      throw VocabularyError(fmt::format("relation id {} outside vocabulary of {}", relations[r],
                                        relation_table_.rows()));
    }
    rel_ids[r] = relations[r];
  }
  auto slot = [&](std::size_t s) { return ad::slice_rows(slots_, s, 1); };
  const std::vector<std::size_t> zeros(m, 0);
  ad::Tensor tokens = ad::concat_rows({
      ad::embedding_lookup(ad::add(virtual_token_, slot(0)), zeros),
      ad::add(sources, slot(1)),
      ad::add(ad::embedding_lookup(relation_table_, rel_ids), slot(2)),
      ad::add(targets, slot(3)),
  });
  if (layers_.empty()) return ad::slice_rows(tokens, 0, m);
  // Block layout: row p belongs to sequence p % m.
  ad::AttentionMask mask;
  const ad::AttentionMask* mask_ptr = nullptr;
  if (m > 1) {
    const std::size_t t = 4 * m;
    mask.assign(t * t, 0);
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t q = 0; q < t; ++q) mask[p * t + q] = (p % m) != (q % m);
    }
    mask_ptr = &mask;
  }
  for (const auto& layer : layers_) {
    tokens = layer->forward(tokens, nullptr, std::nullopt, mask_ptr).out;
  }
  return ad::slice_rows(tokens, 0, m);
}

ad::Tensor centrality_embedding(const CentralityTable& table, std::int64_t degree) {
  return table.embedding(degree);
}

ad::Tensor spd_embedding(const SpdTable& table, HopCount d) { return table.embedding(d); }

ad::Tensor edge_type_encoding(const AtomTransformer& at, const ad::Tensor& x_i, TypeId relation,
                              const ad::Tensor& x_j) {
  return at.encode(x_i, relation, x_j);
}

}  // namespace det

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

// Learned structural position encodings: degree centrality, shortest-path
// distance, and the edge-type atom transformer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "det/autodiff.h"
#include "det/encoders.h"
#include "det/graph.h"
#include "det/parameters.h"

namespace det {

// Rows 0..max_degree, then one overflow row shared by all larger degrees.
class CentralityTable {
 public:
  CentralityTable(ParameterStore& store, const std::string& prefix, std::size_t max_degree,
                  std::size_t hidden, Rng& rng);

  std::size_t bucket(std::int64_t degree) const;
  ad::Tensor embedding(std::int64_t degree) const;
  ad::Tensor lookup(std::span<const std::size_t> degrees) const;
  const ad::Tensor& table() const { return table_; }
  std::size_t max_degree() const { return max_degree_; }

 private:
  std::size_t max_degree_;
  ad::Tensor table_;
};

// Rows 0..max_distance (larger distances clip to max_distance), then one row
// for unreachable pairs.
class SpdTable {
 public:
  SpdTable(ParameterStore& store, const std::string& prefix, std::size_t max_distance,
           std::size_t hidden, Rng& rng);

  std::size_t bucket(HopCount d) const { return distance_bucket(d, max_distance_); }
  std::size_t unreachable_row() const { return max_distance_ + 1; }
  ad::Tensor embedding(HopCount d) const;
  const ad::Tensor& table() const { return table_; }
  std::size_t max_distance() const { return max_distance_; }

 private:
  std::size_t max_distance_;
  ad::Tensor table_;
};

// Small transformer over the 4-token sequence [c_A, x_i, r_ij, x_j]; the
// output at the c_A slot is the edge-aware encoding of x_j seen from x_i.
class AtomTransformer {
 public:
  AtomTransformer(ParameterStore& store, const std::string& prefix, std::size_t hidden,
                  std::size_t heads, std::size_t ffn_hidden, std::size_t layers,
                  std::size_t relation_count, Rng& rng);

  ad::Tensor encode(const ad::Tensor& x_i, TypeId relation, const ad::Tensor& x_j) const;
  // Row r of the result encodes (sources_r, relations[r], targets_r). All
  // sequences run in one masked pass.
  ad::Tensor encode_batch(const ad::Tensor& sources, std::span<const TypeId> relations,
                          const ad::Tensor& targets) const;

  std::size_t relation_count() const { return relation_table_.rows(); }
  const ad::Tensor& relation_table() const { return relation_table_; }
  const ad::Tensor& virtual_token() const { return virtual_token_; }
  const ad::Tensor& slot_embeddings() const { return slots_; }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  std::size_t hidden_;
  ad::Tensor relation_table_;
  ad::Tensor virtual_token_;
  ad::Tensor slots_;
  std::vector<std::unique_ptr<StructuralLayer>> layers_;
};

ad::Tensor centrality_embedding(const CentralityTable& table, std::int64_t degree);
ad::Tensor spd_embedding(const SpdTable& table, HopCount d);
ad::Tensor edge_type_encoding(const AtomTransformer& at, const ad::Tensor& x_i, TypeId relation,
                              const ad::Tensor& x_j);

}  // namespace det

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

// The dual-encoding stack: per layer a structural block over the one-hop ego
// context and a semantic block over [center, semantic neighbors], each biased
// by the other's detached logits, combined as tau * h_st + (1 - tau) * h_se.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "det/autodiff.h"
#include "det/encoders.h"
#include "det/graph.h"
#include "det/neighbor_index.h"
#include "det/parameters.h"
#include "det/struct_embed.h"

namespace det {

enum class ModelMode { kWholeGraph, kEgoNode, kKg };

const char* to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& text);
const char* to_string(SemanticOperator op);
SemanticOperator parse_semantic_operator(const std::string& text);

struct ModelConfig {
  ModelMode mode = ModelMode::kEgoNode;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t semantic_heads = 1;
  std::size_t ffn_hidden = 64;
  std::size_t atom_layers = 1;
  std::size_t max_degree = 64;
  std::size_t max_distance = 8;
  std::size_t node_cap = 256;
  std::size_t feature_dim = 0;     // ego-node inputs
  std::size_t class_count = 0;     // ego-node head
  bool multilabel = false;
  std::size_t entity_count = 0;    // kg
  std::size_t relation_count = 0;  // atom transformer vocabulary, inverses included
  double tau = 0.15;
  double lambda = 1.0;
  bool layerwise_combination = true;
  SemanticOperator semantic_operator = SemanticOperator::kDifference;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

struct NodeQuery {
  NodeId node = 0;
  std::optional<TypeId> relation;       // kg: relation of the (node, relation, ?) query
  std::optional<NodeId> hidden_target;  // kg: drop edge (node, relation, target) from the context
};

// Attention scores captured per layer, for inspection and tests.
struct ForwardTrace {
  std::vector<LayerOutput> structural;
  std::vector<LayerOutput> semantic;
  std::vector<NodeId> structural_nodes;
  std::vector<NodeId> semantic_nodes;
  // Exchanged biases per layer (empty when lambda is 0).
  std::vector<std::optional<ad::Tensor>> structural_bias;
  std::vector<std::optional<ad::Tensor>> semantic_bias;
};

struct ForwardOptions {
  DropoutContext dropout;
  std::optional<std::int64_t> epoch;  // enables the staleness check
  std::size_t refresh_interval = 1;
  bool strict_staleness = false;
  ForwardTrace* trace = nullptr;
  // Reuse the exchanged biases recorded in an earlier trace instead of
  // recomputing them; finite-difference checks hold them fixed this way.
  const ForwardTrace* frozen_bias = nullptr;
};

struct DualOutput {
  ad::Tensor h;     // combined, 1 x hidden
  ad::Tensor h_st;  // structural branch of the last layer
  ad::Tensor h_se;  // semantic branch of the last layer
};

inline constexpr NodeId kVirtualNode = 0xFFFFFFFFu;

class DetModel {
 public:
  explicit DetModel(ModelConfig config);
  DetModel(const DetModel&) = delete;
  DetModel& operator=(const DetModel&) = delete;

  const ModelConfig& config() const { return config_; }
  void set_tau(double tau);
  void set_lambda(double lambda) { config_.lambda = lambda; }

  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  // Layer-0 tokens: raw embedding (features, entity row or shared node token)
  // plus the degree-centrality embedding.
  ad::Tensor node_tokens(const Graph& g, std::span<const NodeId> nodes) const;

  DualOutput forward_node(const Graph& g, const NodeQuery& query, const SemanticNeighborIndex& index,
                          const ForwardOptions& options = {}) const;
  // Dense dual encoding of a whole small graph plus a virtual context node;
  // returns the virtual node's rows.
  DualOutput forward_graph(const Graph& g, const ForwardOptions& options = {}) const;

  // Regression: 1 x 1. Classification: 1 x classes. Kg: 1 x entities.
  ad::Tensor head(const ad::Tensor& h) const;

  std::vector<double> score_entities(const Graph& g, NodeId head_entity, TypeId relation,
                                     const SemanticNeighborIndex& index) const;

  std::size_t layer_count() const { return structural_.size(); }
  const StructuralLayer& structural_layer(std::size_t l) const { return *structural_.at(l); }
  const SemanticLayer& semantic_layer(std::size_t l) const { return *semantic_.at(l); }
  const SemanticScorer& first_scorer() const { return semantic_.front()->scorer(); }
  const CentralityTable& centrality() const { return *centrality_; }
  const SpdTable& spd() const { return *spd_; }
  const AtomTransformer* atom() const { return atom_.get(); }

  // Relation id seen from `from` for an incidence (inverse ids for incoming
  // edges of directed graphs).
  TypeId incidence_relation(const Graph& g, const Incidence& in) const;

 private:
  struct Context {
    std::vector<NodeId> nodes;
    ad::Tensor inputs;
  };

  Context structural_context(const Graph& g, const NodeQuery& query) const;
  RelativePositions ego_positions(const Graph& g, std::span<const NodeId> nodes) const;
  ad::Tensor raw_embeddings(const Graph& g, std::span<const NodeId> nodes) const;
  ad::Tensor query_token(const Graph& g, NodeId node, TypeId relation) const;
  void check_graph(const Graph& g) const;

  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<CentralityTable> centrality_;
  std::unique_ptr<SpdTable> spd_;
  std::unique_ptr<AtomTransformer> atom_;
  std::vector<std::unique_ptr<StructuralLayer>> structural_;
  std::vector<std::unique_ptr<SemanticLayer>> semantic_;
  ad::Tensor input_w_, input_b_;          // ego-node
  ad::Tensor node_token_;                 // whole-graph
  ad::Tensor virtual_node_, virtual_distance_;
  ad::Tensor entities_, mask_token_;      // kg
  ad::Tensor head_w_, head_b_;
  ad::Tensor entity_bias_;                // kg
};

}  // namespace det

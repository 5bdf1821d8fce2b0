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

#include "det/model.h"

#include <algorithm>
#include <iostream>

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

const char* to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::kWholeGraph: return "whole-graph";
    case ModelMode::kEgoNode: return "ego-node";
    case ModelMode::kKg: return "kg";
  }
  return "?";
}

ModelMode parse_model_mode(const std::string& text) {
  if (text == "whole-graph") return ModelMode::kWholeGraph;
  if (text == "ego-node") return ModelMode::kEgoNode;
  if (text == "kg") return ModelMode::kKg;
  throw ConfigError("unknown model mode: " + text);
}

const char* to_string(SemanticOperator op) {
  return op == SemanticOperator::kDifference ? "difference" : "weighted-l1";
}

SemanticOperator parse_semantic_operator(const std::string& text) {
  if (text == "difference") return SemanticOperator::kDifference;
  if (text == "weighted-l1") return SemanticOperator::kWeightedL1;
  throw ConfigError("unknown semantic operator: " + text);
}

namespace {

ad::Tensor combine(const ad::Tensor& st, const ad::Tensor& se, double tau) {
  return ad::add(ad::scalar_mul(st, tau), ad::scalar_mul(se, 1.0 - tau));
}

ad::Tensor replace_first_row(const ad::Tensor& rows, const ad::Tensor& first) {
  if (rows.rows() == 1) return first;
  return ad::concat_rows({first, ad::slice_rows(rows, 1, rows.rows() - 1)});
}

}  // namespace

DetModel::DetModel(ModelConfig config) : config_(std::move(config)) {
  const ModelConfig& c = config_;
  if (c.layers < 1) throw ConfigError("model needs at least one layer");
  if (c.tau < 0.0 || c.tau > 1.0) throw ConfigError(fmt::format("tau {} outside [0, 1]", c.tau));
  if (c.hidden == 0 || c.hidden % c.heads != 0 || c.hidden % c.semantic_heads != 0) {
    throw ConfigError(fmt::format("hidden {} must be divisible by heads {} and semantic heads {}",
                                  c.hidden, c.heads, c.semantic_heads));
  }
  Rng rng(c.seed);
  const std::size_t h = c.hidden;
  switch (c.mode) {
    case ModelMode::kEgoNode:
      if (c.feature_dim == 0 || c.class_count == 0) {
        throw ConfigError("ego-node mode needs feature_dim and class_count");
      }
      input_w_ = store_.add("input.w", c.feature_dim, h, Init::kXavier, rng);
      input_b_ = store_.add("input.b", 1, h, Init::kZeros, rng);
      break;
    case ModelMode::kKg:
      if (c.entity_count == 0 || c.relation_count == 0) {
        throw ConfigError("kg mode needs entity_count and relation_count");
      }
      entities_ = store_.add("entities", c.entity_count, h, Init::kNormal, rng, 0.1);
      mask_token_ = store_.add("mask_token", 1, h, Init::kNormal, rng, 0.1);
      break;
    case ModelMode::kWholeGraph:
      node_token_ = store_.add("node_token", 1, h, Init::kNormal, rng, 0.1);
      virtual_node_ = store_.add("virtual_node", 1, h, Init::kNormal, rng, 0.1);
      break;
  }
  centrality_ = std::make_unique<CentralityTable>(store_, "embed", c.max_degree, h, rng);
  spd_ = std::make_unique<SpdTable>(store_, "embed", c.max_distance, h, rng);
  if (c.mode == ModelMode::kWholeGraph) {
    virtual_distance_ = store_.add("embed.spd_virtual", 1, h, Init::kNormal, rng);
  }
  if (c.relation_count > 0) {
    atom_ = std::make_unique<AtomTransformer>(store_, "atom", h, c.heads, c.ffn_hidden,
                                              c.atom_layers, c.relation_count, rng);
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    structural_.push_back(std::make_unique<StructuralLayer>(store_, fmt::format("layer{}.st", l), h,
                                                            c.heads, c.ffn_hidden, rng));
    semantic_.push_back(std::make_unique<SemanticLayer>(store_, fmt::format("layer{}.se", l), h,
                                                        c.semantic_heads, c.ffn_hidden,
                                                        c.semantic_operator, rng));
  }
  switch (c.mode) {
    case ModelMode::kWholeGraph:
      head_w_ = store_.add("head.w", h, 1, Init::kXavier, rng);
      head_b_ = store_.add("head.b", 1, 1, Init::kZeros, rng);
      break;
    case ModelMode::kEgoNode:
      head_w_ = store_.add("head.w", h, c.class_count, Init::kXavier, rng);
      head_b_ = store_.add("head.b", 1, c.class_count, Init::kZeros, rng);
      break;
    case ModelMode::kKg:
      head_w_ = store_.add("head.w", h, h, Init::kXavier, rng);
      head_b_ = store_.add("head.b", 1, h, Init::kZeros, rng);
      entity_bias_ = store_.add("head.entity_bias", 1, c.entity_count, Init::kZeros, rng);
      break;
  }
}

void DetModel::set_tau(double tau) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError(fmt::format("tau {} outside [0, 1]", tau));
  config_.tau = tau;
}

void DetModel::check_graph(const Graph& g) const {
  switch (config_.mode) {
    case ModelMode::kEgoNode:
      if (!g.features() || g.features()->cols != config_.feature_dim) {
        throw ContractError(
            fmt::format("graph features do not match feature_dim {}", config_.feature_dim));
      }
      break;
    case ModelMode::kKg:
      if (g.node_count() != config_.entity_count) {
        throw ContractError(fmt::format("graph has {} nodes, model has {} entities",
                                        g.node_count(), config_.entity_count));
      }
      break;
    case ModelMode::kWholeGraph:
      break;
  }
}

TypeId DetModel::incidence_relation(const Graph& g, const Incidence& in) const {
  if (!in.type) throw ContractError("incidence has no edge type");
  TypeId r = *in.type;
  if (g.directed() && !in.outgoing) r += static_cast<TypeId>(config_.relation_count / 2);
  if (r >= config_.relation_count) {
    throw VocabularyError(
        fmt::format("relation id {} outside vocabulary of {}", r, config_.relation_count));
  }
  return r;
}

ad::Tensor DetModel::raw_embeddings(const Graph& g, std::span<const NodeId> nodes) const {
  std::vector<std::size_t> ids(nodes.begin(), nodes.end());
  switch (config_.mode) {
    case ModelMode::kEgoNode: {
      const FeatureMatrix& f = *g.features();
      std::vector<double> rows;
      rows.reserve(nodes.size() * f.cols);
      for (NodeId v : nodes) {
        g.check_node(v);
        const auto r = f.row(v);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      return ad::affine(ad::Tensor::from(nodes.size(), f.cols, std::move(rows)), input_w_,
                        input_b_);
    }
    case ModelMode::kKg:
      return ad::embedding_lookup(entities_, ids);
    case ModelMode::kWholeGraph:
      std::fill(ids.begin(), ids.end(), 0);
      return ad::embedding_lookup(node_token_, ids);
  }
  return {};
}

ad::Tensor DetModel::node_tokens(const Graph& g, std::span<const NodeId> nodes) const {
  check_graph(g);
  std::vector<std::size_t> degrees;
  degrees.reserve(nodes.size());
  for (NodeId v : nodes) degrees.push_back(degree(g, v));
  ad::Tensor tokens = ad::add(raw_embeddings(g, nodes), centrality_->lookup(degrees));
  if (config_.mode == ModelMode::kWholeGraph && atom_ && g.typed()) {
    // Typed bonds: add the mean edge encoding over each node's incidences.
    std::vector<TypeId> relations;
    std::vector<double> average;
    std::vector<std::size_t> counts;
    for (NodeId v : nodes) {
      counts.push_back(g.incidences(v).size());
      for (const Incidence& in : g.incidences(v)) relations.push_back(incidence_relation(g, in));
    }
    if (!relations.empty()) {
      const std::vector<std::size_t> zeros(relations.size(), 0);
      const ad::Tensor raw = ad::embedding_lookup(node_token_, zeros);
      const ad::Tensor enc = atom_->encode_batch(raw, relations, raw);
      average.assign(nodes.size() * relations.size(), 0.0);
      std::size_t offset = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t e = 0; e < counts[i]; ++e) {
          average[i * relations.size() + offset + e] = 1.0 / static_cast<double>(counts[i]);
        }
        offset += counts[i];
      }
      tokens = ad::add(tokens, ad::matmul(ad::Tensor::from(nodes.size(), relations.size(),
                                                           std::move(average)),
                                          enc));
    }
  }
  return tokens;
}

ad::Tensor DetModel::query_token(const Graph& g, NodeId node, TypeId relation) const {
  if (!atom_) throw ModeError("relation queries need an atom transformer");
  const std::size_t deg = degree(g, node);
  const ad::Tensor raw = raw_embeddings(g, std::span<const NodeId>(&node, 1));
  return ad::add(atom_->encode(raw, relation, mask_token_),
                 centrality_->lookup(std::span<const std::size_t>(&deg, 1)));
}

DetModel::Context DetModel::structural_context(const Graph& g, const NodeQuery& query) const {
  const NodeId v = query.node;
  Context ctx;
  ctx.nodes.push_back(v);
  const bool typed = atom_ && g.typed();
  if (!typed) {
    const auto nbrs = g.neighbors(v);
    ctx.nodes.insert(ctx.nodes.end(), nbrs.begin(), nbrs.end());
    ctx.inputs = node_tokens(g, ctx.nodes);
    if (query.relation) {
      ctx.inputs = replace_first_row(ctx.inputs, query_token(g, v, *query.relation));
    }
    return ctx;
  }

  // Typed edges: each neighbor token is the mean edge encoding over the
  // relations linking it to the center, plus its centrality.
  std::vector<NodeId> targets;
  std::vector<TypeId> relations;
  std::vector<std::size_t> owner;
  const auto nbrs = g.neighbors(v);
  for (const Incidence& in : g.incidences(v)) {
    if (in.other == v || !std::binary_search(nbrs.begin(), nbrs.end(), in.other)) continue;
    const TypeId r = incidence_relation(g, in);
    if (query.hidden_target && query.relation && in.other == *query.hidden_target &&
        r == *query.relation) {
      continue;
    }
    if (ctx.nodes.size() == 1 || ctx.nodes.back() != in.other) ctx.nodes.push_back(in.other);
    targets.push_back(in.other);
    relations.push_back(r);
    owner.push_back(ctx.nodes.size() - 1);
  }
  ad::Tensor center = query.relation ? query_token(g, v, *query.relation)
                                     : node_tokens(g, std::span<const NodeId>(&v, 1));
  if (targets.empty()) {
    ctx.inputs = center;
    return ctx;
  }
  const std::vector<NodeId> sources(targets.size(), v);
  const ad::Tensor enc =
      atom_->encode_batch(raw_embeddings(g, sources), relations, raw_embeddings(g, targets));
  const std::size_t k = ctx.nodes.size() - 1;
  std::vector<double> average(k * targets.size(), 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t e = 0; e < owner.size(); ++e) ++counts[owner[e] - 1];
  for (std::size_t e = 0; e < owner.size(); ++e) {
    average[(owner[e] - 1) * targets.size() + e] = 1.0 / static_cast<double>(counts[owner[e] - 1]);
  }
  std::vector<std::size_t> degrees;
  for (std::size_t i = 1; i < ctx.nodes.size(); ++i) degrees.push_back(degree(g, ctx.nodes[i]));
  const ad::Tensor neighbors =
      ad::add(ad::matmul(ad::Tensor::from(k, targets.size(), std::move(average)), enc),
              centrality_->lookup(degrees));
  ctx.inputs = ad::concat_rows({center, neighbors});
  return ctx;
}

RelativePositions DetModel::ego_positions(const Graph& g, std::span<const NodeId> nodes) const {
  const std::size_t n = nodes.size();
  RelativePositions pos;
  pos.buckets.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      HopCount d = 0;
      if (i != j) d = (i == 0 || j == 0 || g.adjacent(nodes[i], nodes[j])) ? 1 : 2;
      pos.buckets[i * n + j] = spd_->bucket(d);
    }
  }
  pos.table = spd_->table();
  return pos;
}

DualOutput DetModel::forward_node(const Graph& g, const NodeQuery& query,
                                  const SemanticNeighborIndex& index,
                                  const ForwardOptions& options) const {
  if (config_.mode == ModelMode::kWholeGraph) {
    throw ModeError("forward_node needs ego-node or kg mode");
  }
  check_graph(g);
  g.check_node(query.node);
  if (index.node_count() != g.node_count()) {
    throw ContractError(fmt::format("semantic index covers {} nodes, graph has {}",
                                    index.node_count(), g.node_count()));
  }
  if (options.epoch) {
    const std::int64_t window = static_cast<std::int64_t>(options.refresh_interval);
    if (index.epoch_stamp + window <= *options.epoch || index.epoch_stamp > *options.epoch) {
      const std::string msg = fmt::format("semantic index from epoch {} is stale at epoch {}",
                                          index.epoch_stamp, *options.epoch);
      if (options.strict_staleness) throw StalenessError(msg);
      std::cerr << "warning: " << msg << "\n";
    }
  }

  Context ctx = structural_context(g, query);
  const RelativePositions positions = ego_positions(g, ctx.nodes);

  std::vector<NodeId> sem_nodes{query.node};
  for (const SemanticNeighbor& s : index.neighbors(query.node)) sem_nodes.push_back(s.node);
  const ad::Tensor center = ad::select_row(ctx.inputs, 0);
  ad::Tensor x_sem = center;
  if (sem_nodes.size() > 1) {
    x_sem = ad::concat_rows(
        {center, node_tokens(g, std::span<const NodeId>(sem_nodes).subspan(1))});
  }
  ad::Tensor x_st = ctx.inputs;

  if (options.trace != nullptr) {
    options.trace->structural_nodes = ctx.nodes;
    options.trace->semantic_nodes = sem_nodes;
  }
  DualOutput out;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    std::optional<ad::Tensor> bias_st, bias_se;
    if (options.frozen_bias != nullptr) {
      bias_st = options.frozen_bias->structural_bias.at(l);
      bias_se = options.frozen_bias->semantic_bias.at(l);
    } else if (config_.lambda != 0.0) {
      const ad::Tensor raw_st = structural_[l]->raw_logits(x_st, &positions);
      const ad::Tensor raw_se = semantic_[l]->raw_logits(x_sem);
      bias_st = bias_exchange(raw_se, sem_nodes, ctx.nodes, config_.lambda);
      bias_se = bias_exchange(raw_st, ctx.nodes, sem_nodes, config_.lambda);
    }
    LayerOutput st = structural_[l]->forward(x_st, &positions, bias_st, nullptr, options.dropout);
    LayerOutput se = semantic_[l]->forward(x_sem, bias_se, nullptr, options.dropout);
    out.h_st = ad::select_row(st.out, 0);
    out.h_se = ad::select_row(se.out, 0);
    out.h = combine(out.h_st, out.h_se, config_.tau);
    if (config_.layerwise_combination) {
      x_st = replace_first_row(st.out, out.h);
      x_sem = replace_first_row(se.out, out.h);
    } else {
      x_st = st.out;
      x_sem = se.out;
    }
    if (options.trace != nullptr) {
      options.trace->structural_bias.push_back(bias_st);
      options.trace->semantic_bias.push_back(bias_se);
      options.trace->structural.push_back(std::move(st));
      options.trace->semantic.push_back(std::move(se));
    }
  }
  return out;
}

DualOutput DetModel::forward_graph(const Graph& g, const ForwardOptions& options) const {
  if (config_.mode != ModelMode::kWholeGraph) throw ModeError("forward_graph needs whole-graph mode");
  const std::size_t n = g.node_count();
  if (n > config_.node_cap) {
    throw ModeError(fmt::format(
        "graph of {} nodes exceeds the dense cap of {}; use ego-node mode for large graphs", n,
        config_.node_cap));
  }
  std::vector<NodeId> nodes{kVirtualNode};
  std::vector<NodeId> ids(n);
  for (NodeId v = 0; v < n; ++v) ids[v] = v;
  nodes.insert(nodes.end(), ids.begin(), ids.end());

  ad::Tensor tokens = n == 0 ? virtual_node_
                             : ad::concat_rows({virtual_node_, node_tokens(g, ids)});
  const std::size_t t = n + 1;
  const std::size_t virtual_bucket = config_.max_distance + 2;
  RelativePositions positions;
  positions.buckets.assign(t * t, virtual_bucket);
  positions.buckets[0] = 0;
  for (NodeId u = 0; u < n; ++u) {
    const std::vector<HopCount> dist = bfs_distances(g, u);
    for (NodeId v = 0; v < n; ++v) positions.buckets[(u + 1) * t + v + 1] = spd_->bucket(dist[v]);
  }
  positions.table = ad::concat_rows({spd_->table(), virtual_distance_});

  if (options.trace != nullptr) {
    options.trace->structural_nodes = nodes;
    options.trace->semantic_nodes = nodes;
  }
  ad::Tensor x_st = tokens, x_se = tokens;
  DualOutput out;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    std::optional<ad::Tensor> bias_st, bias_se;
    if (options.frozen_bias != nullptr) {
      bias_st = options.frozen_bias->structural_bias.at(l);
      bias_se = options.frozen_bias->semantic_bias.at(l);
    } else if (config_.lambda != 0.0) {
      const ad::Tensor raw_st = structural_[l]->raw_logits(x_st, &positions);
      const ad::Tensor raw_se = semantic_[l]->raw_logits(x_se);
      bias_st = bias_exchange(raw_se, nodes, nodes, config_.lambda);
      bias_se = bias_exchange(raw_st, nodes, nodes, config_.lambda);
    }
    LayerOutput st = structural_[l]->forward(x_st, &positions, bias_st, nullptr, options.dropout);
    LayerOutput se = semantic_[l]->forward(x_se, bias_se, nullptr, options.dropout);
    if (config_.layerwise_combination) {
      const ad::Tensor mixed = combine(st.out, se.out, config_.tau);
      x_st = mixed;
      x_se = mixed;
      out.h = ad::select_row(mixed, 0);
    } else {
      x_st = st.out;
      x_se = se.out;
    }
    out.h_st = ad::select_row(st.out, 0);
    out.h_se = ad::select_row(se.out, 0);
    if (options.trace != nullptr) {
      options.trace->structural_bias.push_back(bias_st);
      options.trace->semantic_bias.push_back(bias_se);
      options.trace->structural.push_back(std::move(st));
      options.trace->semantic.push_back(std::move(se));
    }
  }
  if (!config_.layerwise_combination) out.h = combine(out.h_st, out.h_se, config_.tau);
  return out;
}

ad::Tensor DetModel::head(const ad::Tensor& h) const {
  switch (config_.mode) {
    case ModelMode::kWholeGraph:
    case ModelMode::kEgoNode:
      return ad::affine(h, head_w_, head_b_);
    case ModelMode::kKg:
      return ad::add(ad::matmul_nt(ad::affine(h, head_w_, head_b_), entities_), entity_bias_);
  }
  return {};
}

std::vector<double> DetModel::score_entities(const Graph& g, NodeId head_entity, TypeId relation,
                                             const SemanticNeighborIndex& index) const {
  if (config_.mode != ModelMode::kKg) throw ModeError("score_entities needs kg mode");
  if (relation >= config_.relation_count) {
    throw VocabularyError(
        fmt::format("relation id {} outside vocabulary of {}", relation, config_.relation_count));
  }
  ad::NoGradScope no_grad;
  const DualOutput out = forward_node(g, {head_entity, relation, std::nullopt}, index);
  const ad::Tensor scores = head(out.h);
  return {scores.values().begin(), scores.values().end()};
}

}  // namespace det

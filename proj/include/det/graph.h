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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "det/rng.h"

namespace det {

using NodeId = std::uint32_t;
using TypeId = std::uint32_t;

// Hop counts; kUnreachable marks disconnected pairs.
using HopCount = std::int32_t;
inline constexpr HopCount kUnreachable = -1;

struct Edge {
  NodeId source = 0;
  NodeId target = 0;
  std::optional<TypeId> type;

  bool operator==(const Edge&) const = default;
};

enum class DegreeMode { kInOut, kOut, kIn };

struct GraphOptions {
  bool directed = false;
  bool allow_self_loops = false;
  // Directed graphs only: neighborhoods and distances ignore direction.
  bool symmetric_neighborhood = true;
  DegreeMode degree_mode = DegreeMode::kInOut;
};

// Row-major n x f node feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  bool operator==(const FeatureMatrix&) const = default;
};

// Either one class per node or a node x class bit matrix.
struct NodeLabels {
  std::size_t class_count = 0;
  bool multilabel = false;
  std::vector<std::int32_t> single;  // -1 = unlabeled
  std::vector<std::uint8_t> multi;   // n x class_count

  bool operator==(const NodeLabels&) const = default;
};

// One incident edge as seen from a node.
struct Incidence {
  NodeId other = 0;
  std::optional<TypeId> type;
  bool outgoing = true;
};

struct NeighborSet {
  NodeId center = 0;
  std::vector<NodeId> members;  // ascending, unique, excludes center

  bool contains(NodeId v) const;
  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }
};

struct EgoGraph {
  std::vector<NodeId> nodes;  // center first, then ascending neighbors
  std::vector<Edge> edges;    // every graph edge between listed nodes
};

// Immutable after construction; safe to query concurrently.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t node_count, std::vector<Edge> edges, GraphOptions options = {});

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const GraphOptions& options() const { return options_; }
  bool directed() const { return options_.directed; }
  bool typed() const { return typed_; }

  // Sorted neighbors under the configured (default symmetric) view.
  std::span<const NodeId> neighbors(NodeId v) const;
  std::span<const Incidence> incidences(NodeId v) const;
  bool adjacent(NodeId u, NodeId v) const;
  void check_node(NodeId v) const;

  const std::optional<FeatureMatrix>& features() const { return features_; }
  const std::optional<NodeLabels>& labels() const { return labels_; }
  void set_features(FeatureMatrix features);
  void set_labels(NodeLabels labels);

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  GraphOptions options_;
  bool typed_ = false;
  std::vector<std::size_t> neighbor_offsets_;
  std::vector<NodeId> neighbor_ids_;
  std::vector<std::size_t> incidence_offsets_;
  std::vector<Incidence> incidence_list_;
  std::optional<FeatureMatrix> features_;
  std::optional<NodeLabels> labels_;
};

NeighborSet one_hop_neighbors(const Graph& g, NodeId v);
EgoGraph ego_graph(const Graph& g, NodeId v);

// Breadth-first hop counts from `source` to every node.
std::vector<HopCount> bfs_distances(const Graph& g, NodeId source);
HopCount shortest_path_distance(const Graph& g, NodeId u, NodeId v);
// Embedding bucket: min(d, max_distance), or max_distance + 1 when unreachable.
std::size_t distance_bucket(HopCount d, std::size_t max_distance);

std::size_t degree(const Graph& g, NodeId v);

// Uniform sample without replacement from V \ ({v} u N(v)); returns the whole
// pool when it holds fewer than `count` nodes. Throws SamplingError when empty.
NeighborSet sample_distant_negatives(const Graph& g, NodeId v, std::size_t count, Rng& rng);
// The candidate pool itself, ascending.
std::vector<NodeId> distant_pool(const Graph& g, NodeId v);

// Mean over all nodes of the exact k-hop shell size, for k = 1..max_hop.
std::vector<double> hop_statistics(const Graph& g, std::size_t max_hop);

}  // namespace det

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

#include "det/graph.h"

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

bool NeighborSet::contains(NodeId v) const {
  return std::binary_search(members.begin(), members.end(), v);
}

Graph::Graph(std::size_t node_count, std::vector<Edge> edges, GraphOptions options)
    : node_count_(node_count), edges_(std::move(edges)), options_(options) {
  typed_ = !edges_.empty() && edges_.front().type.has_value();
  std::set<std::tuple<NodeId, NodeId, std::int64_t>> seen;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.source >= node_count_ || e.target >= node_count_) {
      throw InvalidNodeError(fmt::format("edge {}: ({}, {}) references a node >= {}", i, e.source,
                                         e.target, node_count_));
    }
    if (e.type.has_value() != typed_) {
      throw IntegrityError(fmt::format("edge {}: edge types must be given for all edges or none", i));
    }
    if (e.source == e.target && !options_.allow_self_loops) {
      throw IntegrityError(fmt::format("edge {}: self-loop on node {}", i, e.source));
    }
    NodeId a = e.source, b = e.target;
    if (!options_.directed && a > b) std::swap(a, b);
    const std::int64_t type = e.type ? static_cast<std::int64_t>(*e.type) : -1;
    if (!seen.emplace(a, b, type).second) {
      throw IntegrityError(fmt::format("edge {}: duplicate edge ({}, {})", i, e.source, e.target));
    }
  }

  std::vector<std::vector<Incidence>> inc(node_count_);
  for (const Edge& e : edges_) {
    inc[e.source].push_back({e.target, e.type, true});
    if (e.source != e.target) inc[e.target].push_back({e.source, e.type, false});
  }
  incidence_offsets_.assign(node_count_ + 1, 0);
  neighbor_offsets_.assign(node_count_ + 1, 0);
  const bool use_both = !options_.directed || options_.symmetric_neighborhood;
  for (std::size_t v = 0; v < node_count_; ++v) {
    auto& list = inc[v];
    std::stable_sort(list.begin(), list.end(),
                     [](const Incidence& x, const Incidence& y) { return x.other < y.other; });
    incidence_list_.insert(incidence_list_.end(), list.begin(), list.end());
    incidence_offsets_[v + 1] = incidence_list_.size();
    std::vector<NodeId> nbrs;
    for (const Incidence& in : list) {
      if (in.other == v) continue;
      if (!use_both && !in.outgoing) continue;
      if (nbrs.empty() || nbrs.back() != in.other) nbrs.push_back(in.other);
    }
    neighbor_ids_.insert(neighbor_ids_.end(), nbrs.begin(), nbrs.end());
    neighbor_offsets_[v + 1] = neighbor_ids_.size();
  }
}

void Graph::check_node(NodeId v) const {
  if (v >= node_count_) {
    throw InvalidNodeError(fmt::format("node {} out of range (n = {})", v, node_count_));
  }
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  check_node(v);
  return {neighbor_ids_.data() + neighbor_offsets_[v], neighbor_offsets_[v + 1] - neighbor_offsets_[v]};
}

std::span<const Incidence> Graph::incidences(NodeId v) const {
  check_node(v);
  return {incidence_list_.data() + incidence_offsets_[v],
          incidence_offsets_[v + 1] - incidence_offsets_[v]};
}

bool Graph::adjacent(NodeId u, NodeId v) const {
  const auto n = neighbors(u);
  return std::binary_search(n.begin(), n.end(), v);
}

void Graph::set_features(FeatureMatrix features) {
  if (features.rows != node_count_) {
    throw IntegrityError(
        fmt::format("feature rows {} != node count {}", features.rows, node_count_));
  }
  features_ = std::move(features);
}

void Graph::set_labels(NodeLabels labels) {
  const std::size_t expected = labels.multilabel ? node_count_ * labels.class_count : node_count_;
  const std::size_t got = labels.multilabel ? labels.multi.size() : labels.single.size();
  if (got != expected) {
    throw IntegrityError(fmt::format("label storage {} != expected {}", got, expected));
  }
  labels_ = std::move(labels);
}

NeighborSet one_hop_neighbors(const Graph& g, NodeId v) {
  const auto n = g.neighbors(v);
  return {v, {n.begin(), n.end()}};
}

EgoGraph ego_graph(const Graph& g, NodeId v) {
  EgoGraph ego;
  ego.nodes.push_back(v);
  const auto n = g.neighbors(v);
  ego.nodes.insert(ego.nodes.end(), n.begin(), n.end());
  auto listed = [&](NodeId u) {
    return u == v || std::binary_search(n.begin(), n.end(), u);
  };
  for (const Edge& e : g.edges()) {
    if (listed(e.source) && listed(e.target)) ego.edges.push_back(e);
  }
  return ego;
}

std::vector<HopCount> bfs_distances(const Graph& g, NodeId source) {
  g.check_node(source);
  std::vector<HopCount> dist(g.node_count(), kUnreachable);
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (NodeId w : g.neighbors(u)) {
      if (dist[w] == kUnreachable) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

HopCount shortest_path_distance(const Graph& g, NodeId u, NodeId v) {
  g.check_node(v);
  if (u == v) {
    g.check_node(u);
    return 0;
  }
  return bfs_distances(g, u)[v];
}

std::size_t distance_bucket(HopCount d, std::size_t max_distance) {
  if (d == kUnreachable) return max_distance + 1;
  return std::min(static_cast<std::size_t>(d), max_distance);
}

std::size_t degree(const Graph& g, NodeId v) {
  std::size_t count = 0;
  for (const Incidence& in : g.incidences(v)) {
    if (!g.directed()) {
      ++count;
      continue;
    }
    switch (g.options().degree_mode) {
      case DegreeMode::kInOut: ++count; break;
      case DegreeMode::kOut: count += in.outgoing ? 1 : 0; break;
      case DegreeMode::kIn: count += in.outgoing ? 0 : 1; break;
    }
  }
  return count;
}

std::vector<NodeId> distant_pool(const Graph& g, NodeId v) {
  const auto n = g.neighbors(v);
  std::vector<NodeId> pool;
  pool.reserve(g.node_count() - n.size());
  auto it = n.begin();
  for (NodeId u = 0; u < g.node_count(); ++u) {
    while (it != n.end() && *it < u) ++it;
    if (u == v || (it != n.end() && *it == u)) continue;
    pool.push_back(u);
  }
  return pool;
}

NeighborSet sample_distant_negatives(const Graph& g, NodeId v, std::size_t count, Rng& rng) {
  if (count == 0) throw ContractError("sample_distant_negatives: count must be positive");
  std::vector<NodeId> pool = distant_pool(g, v);
  if (pool.empty()) {
    throw SamplingError(fmt::format("node {}: every node is within one hop", v));
  }
  NeighborSet out{v, {}};
  if (pool.size() <= count) {
    out.members = std::move(pool);
    return out;
  }
  // partial Fisher-Yates
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  out.members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.members.begin(), out.members.end());
  return out;
}

std::vector<double> hop_statistics(const Graph& g, std::size_t max_hop) {
  if (max_hop < 1) throw ContractError("hop_statistics: max_hop must be at least 1");
  std::vector<double> totals(max_hop, 0.0);
  if (g.node_count() == 0) return totals;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    for (HopCount d : bfs_distances(g, v)) {
      if (d >= 1 && static_cast<std::size_t>(d) <= max_hop) totals[d - 1] += 1.0;
    }
  }
  for (double& t : totals) t /= static_cast<double>(g.node_count());
  return totals;
}

}  // namespace det

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

// In-memory dataset bundles for the three task families.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "det/graph.h"

namespace det {

// Graph with features and labels plus node splits.
struct NodeBundle {
  Graph graph;
  std::vector<NodeId> train, valid, test;
  std::optional<std::vector<std::size_t>> clusters;  // ground-truth semantic groups
};

struct Triple {
  NodeId head = 0;
  TypeId relation = 0;
  NodeId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

// Triples over string vocabularies. `graph` holds the training triples as
// directed typed edges; inverse relations are relation + relation_count().
struct KgBundle {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Triple> train, valid, test;
  Graph graph;

  std::size_t entity_count() const { return entities.size(); }
  std::size_t relation_count() const { return relations.size(); }
};

struct GraphSample {
  Graph graph;
  double target = 0.0;
};

struct GraphSetBundle {
  std::vector<GraphSample> train, valid, test;
  std::size_t relation_count = 0;  // 0 for untyped graphs
};

using DatasetBundle = std::variant<NodeBundle, KgBundle, GraphSetBundle>;

// Builds the training graph of a kg bundle from its train triples.
Graph kg_training_graph(std::size_t entity_count, const std::vector<Triple>& train);

}  // namespace det

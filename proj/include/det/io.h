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

// Text formats for graphs, features, labels, splits, triples and graph sets,
// plus the synthetic dataset generators.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "det/dataset.h"
#include "det/graph.h"

namespace det {

// "u<TAB>v[<TAB>type]" per line, '#' comments. Node count defaults to the
// largest id + 1.
Graph load_edge_list(const std::string& path, std::optional<std::size_t> node_count = std::nullopt,
                     GraphOptions options = {});
// One node per line, space-separated reals.
FeatureMatrix load_features(const std::string& path);
// "node<TAB>label"; a node listed more than once makes the labels multi-label.
NodeLabels load_labels(const std::string& path, std::size_t node_count);
// One id per line.
std::vector<NodeId> load_split(const std::string& path, std::size_t limit);
// "head<TAB>relation<TAB>tail" per line, raw strings.
struct RawTriple {
  std::string head, relation, tail;
};
std::vector<RawTriple> read_triples(const std::string& path);
// Directory with train.tsv, valid.tsv, test.tsv and optional entities.txt /
// relations.txt vocabularies.
KgBundle load_triples(const std::string& dir);
// Blocks separated by blank lines: "N <target>" then edge lines.
std::vector<GraphSample> read_graph_file(const std::string& path);
// Directory with train.graphs, valid.graphs, test.graphs.
GraphSetBundle load_graph_set(const std::string& dir);
// Directory with edges.tsv, features.txt, labels.tsv, train.txt, valid.txt,
// test.txt and optional clusters.tsv.
NodeBundle load_node_bundle(const std::string& dir);
// Dispatches on the files present.
DatasetBundle load_bundle(const std::string& dir);

void write_bundle(const DatasetBundle& bundle, const std::string& dir);

struct PlantedClusterParams {
  std::size_t nodes = 200;
  std::size_t clusters = 4;
  std::size_t feature_dim = 16;
  std::size_t intra_degree = 4;  // same-cluster edges per node
  double cross_noise = 0.0;      // fraction of edges drawn across clusters
  double feature_noise = 1.0;    // std of per-node noise around the centroid
};

struct BlockCitationParams {
  std::size_t nodes = 300;
  std::size_t classes = 3;
  std::size_t feature_dim = 16;
  double average_degree = 6.0;
  double homophily = 0.5;       // chance an edge stays inside the class
  double feature_signal = 1.0;  // class one-hot scale
  double feature_noise = 1.0;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
};

struct ToyKgParams {
  std::size_t groups = 10;
  std::size_t group_size = 10;
  double holdout = 0.1;  // fraction of triples split between valid and test
};

struct ToyGraphsParams {
  std::size_t graphs = 240;
  std::size_t min_nodes = 6;
  std::size_t max_nodes = 14;
  double edge_probability = 0.2;
};

// Share of nodes that lie on a triangle; the toy-graphs regression target.
double toy_graph_target(const Graph& g);

NodeBundle generate_planted_cluster(const PlantedClusterParams& params, std::uint64_t seed);
NodeBundle generate_block_citation(const BlockCitationParams& params, std::uint64_t seed);
KgBundle generate_toy_kg(const ToyKgParams& params, std::uint64_t seed);
GraphSetBundle generate_toy_graphs(const ToyGraphsParams& params, std::uint64_t seed);
// kind: planted-cluster, block-citation, toy-kg or toy-graphs, default params.
DatasetBundle generate_synthetic(const std::string& kind, std::uint64_t seed);

}  // namespace det

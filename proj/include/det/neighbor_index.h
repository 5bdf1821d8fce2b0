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
#include <span>
#include <vector>

#include "det/graph.h"

namespace det {

struct SemanticNeighbor {
  NodeId node = 0;
  double score = 0.0;  // head-averaged f_s in (0, 1)

  bool operator==(const SemanticNeighbor&) const = default;
};

// Per node: at most k distant nodes ranked by descending f_s. Read-only
// between refreshes.
struct SemanticNeighborIndex {
  std::size_t k = 0;
  std::int64_t epoch_stamp = -1;
  std::vector<std::vector<SemanticNeighbor>> entries;

  std::size_t node_count() const { return entries.size(); }
  std::span<const SemanticNeighbor> neighbors(NodeId v) const { return entries.at(v); }
  std::vector<NodeId> neighbor_ids(NodeId v) const;
  bool operator==(const SemanticNeighborIndex&) const = default;
};

inline std::vector<NodeId> SemanticNeighborIndex::neighbor_ids(NodeId v) const {
  std::vector<NodeId> ids;
  for (const auto& e : entries.at(v)) ids.push_back(e.node);
  return ids;
}

}  // namespace det

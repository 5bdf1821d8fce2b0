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

// Fetching loss and the periodically refreshed semantic neighbor index.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "det/autodiff.h"
#include "det/encoders.h"
#include "det/graph.h"
#include "det/model.h"
#include "det/neighbor_index.h"
#include "det/rng.h"

namespace det {

struct RefreshOptions {
  std::size_t k = 16;
  std::size_t candidate_count = 1024;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::size_t threads = 1;
};

// Scores candidates of every node against `embeddings` (n x h) with the
// head-averaged f_s of `scorer`. Candidates are drawn per node from a stream
// derived from (seed, epoch, node), so the result does not depend on threads.
SemanticNeighborIndex refresh_index(const SemanticScorer& scorer, const Graph& g,
                                    const ad::Tensor& embeddings, const RefreshOptions& options);
// Same, with the first-layer scorer over the model's layer-0 tokens.
SemanticNeighborIndex refresh_index(const DetModel& model, const Graph& g,
                                    const RefreshOptions& options);

// Head-averaged f_s of the center against each row of `others`, m x 1.
ad::Tensor fetching_scores(const SemanticScorer& scorer, const ad::Tensor& x_center,
                           const ad::Tensor& others);

// -mean ln f_s(positives) + mean ln f_s(negatives), log-clamped. Empty sets
// give a zero loss and a warning.
ad::Tensor fetching_loss(const SemanticScorer& scorer, const ad::Tensor& x_center,
                         const ad::Tensor& positives, const ad::Tensor& negatives);

// Mean fetching loss over the batch on layer-0 tokens. Negatives are drawn
// once per distinct node; the default count is |N(v)| capped at 16.
ad::Tensor batch_fetching_loss(const DetModel& model, const Graph& g,
                               std::span<const NodeId> batch,
                               std::optional<std::size_t> negatives_per_node, Rng& rng);

// Lines "node<TAB>neighbor<TAB>score".
void write_index(std::ostream& out, const SemanticNeighborIndex& index);

}  // namespace det

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

#include "det/semantic_index.h"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <map>
#include <thread>

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

namespace {

std::vector<SemanticNeighbor> rank_node(const SemanticScorer& scorer, const Graph& g,
                                        const ad::Tensor& embeddings, NodeId v,
                                        const RefreshOptions& options) {
  std::vector<NodeId> pool = distant_pool(g, v);
  if (pool.size() > options.candidate_count) {
    Rng rng(Rng::derive(options.seed, static_cast<std::uint64_t>(options.epoch), v));
    for (std::size_t i = 0; i < options.candidate_count; ++i) {
      const std::size_t j = i + rng.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(options.candidate_count);
  }
  const std::size_t h = embeddings.cols();
  const auto values = embeddings.values();
  std::vector<std::span<const double>> others;
  others.reserve(pool.size());
  for (NodeId u : pool) others.push_back(values.subspan(u * h, h));
  const std::vector<double> scores = scorer.mean_scores(values.subspan(v * h, h), others);

  std::vector<SemanticNeighbor> ranked(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) ranked[i] = {pool[i], scores[i]};
  const auto better = [](const SemanticNeighbor& a, const SemanticNeighbor& b) {
    return a.score != b.score ? a.score > b.score : a.node < b.node;
  };
  const std::size_t keep = std::min(options.k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), better);
  ranked.resize(keep);
  return ranked;
}

}  // namespace

SemanticNeighborIndex refresh_index(const SemanticScorer& scorer, const Graph& g,
                                    const ad::Tensor& embeddings, const RefreshOptions& options) {
  if (options.k == 0) throw ContractError("refresh_index: k must be at least 1");
  if (embeddings.rows() != g.node_count()) {
    throw ShapeError(fmt::format("refresh_index: {} embeddings for {} nodes", embeddings.rows(),
                                 g.node_count()));
  }
  SemanticNeighborIndex index;
  index.k = options.k;
  index.epoch_stamp = options.epoch;
  index.entries.resize(g.node_count());
  const std::size_t n = g.node_count();
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, n));
  const auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      index.entries[v] = rank_node(scorer, g, embeddings, static_cast<NodeId>(v), options);
    }
  };
  if (workers == 1) {
    run(0, n);
    return index;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(run, begin, end);
  }
  for (auto& t : pool) t.join();
  return index;
}

SemanticNeighborIndex refresh_index(const DetModel& model, const Graph& g,
                                    const RefreshOptions& options) {
  ad::NoGradScope no_grad;
  std::vector<NodeId> all(g.node_count());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  const ad::Tensor tokens = model.node_tokens(g, all);
  return refresh_index(model.first_scorer(), g, tokens, options);
}

ad::Tensor fetching_scores(const SemanticScorer& scorer, const ad::Tensor& x_center,
                           const ad::Tensor& others) {
  const ad::Tensor f = ad::sigmoid(scorer.logits_against(x_center, others));
  if (scorer.heads() == 1) return f;
  return ad::matmul(f, ad::Tensor::full(scorer.heads(), 1,
                                        1.0 / static_cast<double>(scorer.heads())));
}

ad::Tensor fetching_loss(const SemanticScorer& scorer, const ad::Tensor& x_center,
                         const ad::Tensor& positives, const ad::Tensor& negatives) {
  if (!positives.defined() || !negatives.defined() || positives.rows() == 0 ||
      negatives.rows() == 0) {
    std::cerr << "warning: fetching loss needs positives and negatives; contributing 0\n";
    return ad::Tensor::scalar(0.0);
  }
  const ad::Tensor pos = ad::mean(ad::clamped_log(fetching_scores(scorer, x_center, positives)));
  const ad::Tensor neg = ad::mean(ad::clamped_log(fetching_scores(scorer, x_center, negatives)));
  return ad::sub(neg, pos);
}

ad::Tensor batch_fetching_loss(const DetModel& model, const Graph& g,
                               std::span<const NodeId> batch,
                               std::optional<std::size_t> negatives_per_node, Rng& rng) {
  if (batch.empty()) throw ContractError("batch_fetching_loss: empty batch");
  std::vector<NodeId> order;
  std::map<NodeId, std::size_t> multiplicity;
  for (NodeId v : batch) {
    g.check_node(v);
    if (multiplicity[v]++ == 0) order.push_back(v);
  }

  struct Plan {
    NodeId node;
    std::vector<NodeId> negatives;
  };
  std::vector<Plan> plans;
  std::map<NodeId, std::size_t> row_of;
  std::vector<NodeId> rows;
  const auto need = [&](NodeId u) {
    if (row_of.emplace(u, rows.size()).second) rows.push_back(u);
  };
  std::size_t skipped = 0;
  for (NodeId v : order) {
    const auto nbrs = g.neighbors(v);
    Plan plan{v, {}};
    if (!nbrs.empty()) {
      const std::size_t count = negatives_per_node.value_or(std::min<std::size_t>(nbrs.size(), 16));
      if (count > 0) {
        try {
          plan.negatives = sample_distant_negatives(g, v, count, rng).members;
        } catch (const SamplingError&) {
        }
      }
    }
    if (nbrs.empty() || plan.negatives.empty()) {
      ++skipped;
      continue;
    }
    need(v);
    for (NodeId u : nbrs) need(u);
    for (NodeId u : plan.negatives) need(u);
    plans.push_back(std::move(plan));
  }
  static std::atomic<bool> warned{false};
  if (skipped > 0 && !warned.exchange(true)) {
    std::cerr << fmt::format(
        "warning: {} batch nodes lack positives or negatives; they contribute 0 "
        "(reported once)\n",
        skipped);
  }
  if (plans.empty()) return ad::Tensor::scalar(0.0);

  const ad::Tensor tokens = model.node_tokens(g, rows);
  const auto gather = [&](std::span<const NodeId> ids) {
    std::vector<std::size_t> idx;
    idx.reserve(ids.size());
    for (NodeId u : ids) idx.push_back(row_of.at(u));
    return ad::embedding_lookup(tokens, idx);
  };
  const SemanticScorer& scorer = model.first_scorer();
  std::vector<ad::Tensor> terms;
  for (const Plan& plan : plans) {
    const NodeId self[1] = {plan.node};
    const ad::Tensor loss = fetching_loss(scorer, gather(self), gather(g.neighbors(plan.node)),
                                          gather(plan.negatives));
    const double weight = static_cast<double>(multiplicity[plan.node]);
    terms.push_back(weight == 1.0 ? loss : ad::scalar_mul(loss, weight));
  }
  return ad::scalar_mul(ad::sum(ad::concat_rows(terms)), 1.0 / static_cast<double>(batch.size()));
}

void write_index(std::ostream& out, const SemanticNeighborIndex& index) {
  for (std::size_t v = 0; v < index.entries.size(); ++v) {
    for (const SemanticNeighbor& s : index.entries[v]) {
      out << fmt::format("{}\t{}\t{:.6f}\n", v, s.node, s.score);
    }
  }
}

}  // namespace det

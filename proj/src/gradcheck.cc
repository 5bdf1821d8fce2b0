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

#include "det/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "det/graph.h"
#include "det/model.h"
#include "det/rng.h"
#include "det/semantic_index.h"

namespace det {

double finite_difference_error(const std::function<ad::Tensor()>& loss,
                               const std::vector<ad::Tensor>& inputs, double step, double floor) {
  std::vector<ad::Tensor> params = inputs;
  for (auto& p : params) p.zero_grad();
  {
    ad::Tape tape;
    ad::Tensor value;
    {
      ad::TapeScope scope(tape);
      value = loss();
    }
    tape.backward(value);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  ad::NoGradScope no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = loss().item();
      values[j] = saved - step;
      const double down = loss().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][j];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

namespace {

ad::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(lo, hi);
  return ad::Tensor::from(r, c, std::move(v), true);
}

ad::Tensor constant_like(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return ad::Tensor::from(r, c, std::move(v));
}

// Weighted sum so that every output entry matters.
ad::Tensor probe(const ad::Tensor& out, const ad::Tensor& weights) {
  return ad::sum(ad::mul(out, weights));
}

Graph small_graph(std::size_t n, Rng& rng, bool typed) {
  std::vector<Edge> edges;
  const auto type = [&]() -> std::optional<TypeId> {
    if (!typed) return std::nullopt;
    return static_cast<TypeId>(rng.uniform_index(2));
  };
  for (NodeId v = 0; v < n; ++v) edges.push_back({v, static_cast<NodeId>((v + 1) % n), type()});
  edges.push_back({0, static_cast<NodeId>(n / 2), type()});
  edges.push_back({1, static_cast<NodeId>(n / 2 + 2), type()});
  GraphOptions options;
  options.directed = typed;
  return Graph(n, std::move(edges), options);
}

std::vector<ad::Tensor> all_parameters(const DetModel& model) {
  std::vector<ad::Tensor> out;
  for (const auto& p : model.parameters().entries()) out.push_back(p.tensor);
  return out;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck(std::uint64_t seed, double tolerance) {
  const bool strict = ad::strict_numerics();
  ad::set_strict_numerics(true);
  Rng rng(seed);
  std::vector<GradcheckCase> cases;
  const auto check = [&](const std::string& name, const std::vector<ad::Tensor>& inputs,
                         const std::function<ad::Tensor()>& fn) {
    const double err = finite_difference_error(fn, inputs);
    cases.push_back({name, err, err < tolerance});
  };

  {
    auto a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
    auto w = constant_like(3, 2, rng);
    check("matmul", {a, b}, [=] { return probe(ad::matmul(a, b), w); });
  }
  {
    auto a = random_tensor(3, 4, rng), b = random_tensor(5, 4, rng);
    auto w = constant_like(3, 5, rng);
    check("matmul_nt", {a, b}, [=] { return probe(ad::matmul_nt(a, b), w); });
  }
  {
    auto a = random_tensor(3, 4, rng);
    auto w = constant_like(4, 3, rng);
    check("transpose", {a}, [=] { return probe(ad::transpose(a), w); });
  }
  {
    auto a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng), r = random_tensor(1, 4, rng);
    auto w = constant_like(3, 4, rng);
    check("add", {a, b, r}, [=] { return probe(ad::add(ad::add(a, b), r), w); });
    check("sub", {a, b, r}, [=] { return probe(ad::sub(ad::sub(a, b), r), w); });
    check("mul", {a, b, r}, [=] { return probe(ad::mul(ad::mul(a, b), r), w); });
    check("scalar_mul", {a}, [=] { return probe(ad::scalar_mul(a, -1.7), w); });
    check("add_scalar", {a}, [=] { return probe(ad::mul(ad::add_scalar(a, 0.3), a), w); });
    check("sigmoid", {a}, [=] { return probe(ad::sigmoid(a), w); });
    check("relu", {a}, [=] { return probe(ad::relu(a), w); });
    check("abs", {a}, [=] { return probe(ad::abs(a), w); });
    check("clamp", {a}, [=] { return probe(ad::clamp(a, -0.5, 0.5), w); });
    check("sum", {a}, [=] { return ad::sum(ad::mul(a, a)); });
    check("mean", {a}, [=] { return ad::mean(ad::mul(a, a)); });
    auto w1 = constant_like(1, 4, rng);
    check("mean_rows", {a}, [=] { return probe(ad::mean_rows(ad::mul(a, a)), w1); });
    auto bias = random_tensor(3, 4, rng);
    check("row_softmax", {a, bias}, [=] { return probe(ad::row_softmax(a, bias), w); });
    const ad::AttentionMask mask = {0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0};
    check("row_softmax_masked", {a}, [=] { return probe(ad::row_softmax(a, std::nullopt, &mask), w); });
    check("row_log_softmax", {a}, [=] { return probe(ad::row_log_softmax(a), w); });
    auto w6 = constant_like(6, 4, rng);
    check("concat_rows", {a, b}, [=] { return probe(ad::concat_rows({a, b}), w6); });
    auto w8 = constant_like(3, 8, rng);
    check("concat_cols", {a, b}, [=] { return probe(ad::concat_cols({a, b}), w8); });
    auto w24 = constant_like(2, 4, rng);
    check("slice_rows", {a}, [=] { return probe(ad::slice_rows(a, 1, 2), w24); });
    auto w32 = constant_like(3, 2, rng);
    check("slice_cols", {a}, [=] { return probe(ad::slice_cols(a, 1, 2), w32); });
    check("select_row", {a}, [=] { return probe(ad::select_row(a, 2), w1); });
    const std::vector<std::size_t> idx = {3, 0, 2};
    auto w31 = constant_like(3, 1, rng);
    check("pick", {a}, [=] { return probe(ad::pick(a, idx), w31); });
    auto g = random_tensor(1, 4, rng), s = random_tensor(1, 4, rng);
    check("layer_norm", {a, g, s}, [=] { return probe(ad::layer_norm(a, g, s), w); });
    const std::vector<std::size_t> ids = {2, 0, 2};
    check("embedding_lookup", {a}, [=] { return probe(ad::embedding_lookup(a, ids), w); });
    auto wm = random_tensor(4, 2, rng), bm = random_tensor(1, 2, rng);
    check("affine", {a, wm, bm}, [=] { return probe(ad::affine(a, wm, bm), w32); });
    auto ws = random_tensor(1, 4, rng), bs = random_tensor(1, 1, rng);
    auto w33 = constant_like(3, 3, rng);
    check("pairwise_difference_logits", {a, ws, bs},
          [=] { return probe(ad::pairwise_difference_logits(a, ws, bs), w33); });
    check("pairwise_l1_logits", {a, ws, bs},
          [=] { return probe(ad::pairwise_l1_logits(a, ws, bs), w33); });
    const std::vector<std::size_t> pairs = {0, 1, 3, 2, 0, 1, 3, 3, 2};
    auto m = random_tensor(3, 4, rng);
    check("gather_pairs", {m}, [=] { return probe(ad::gather_pairs(m, pairs), w33); });
    auto sq = random_tensor(3, 3, rng);
    check("bucket_sum", {sq}, [=] { return probe(ad::bucket_sum(sq, pairs, 4), w); });
    check("dropout", {a}, [=] {
      Rng drop(seed);
      return probe(ad::dropout(a, 0.3, drop), w);
    });
  }
  {
    auto p = random_tensor(2, 3, rng, 0.2, 2.0);
    auto w = constant_like(2, 3, rng);
    check("natural_log", {p}, [=] { return probe(ad::natural_log(p), w); });
    auto q = random_tensor(2, 3, rng, 0.05, 0.95);
    check("clamped_log", {q}, [=] { return probe(ad::clamped_log(q), w); });
  }

  ModelConfig base;
  base.layers = 2;
  base.hidden = 8;
  base.heads = 2;
  base.ffn_hidden = 12;
  base.max_degree = 6;
  base.max_distance = 3;
  base.seed = seed;

  for (const SemanticOperator op : {SemanticOperator::kDifference, SemanticOperator::kWeightedL1}) {
    Graph g = small_graph(10, rng, false);
    FeatureMatrix f{10, 5, {}};
    for (std::size_t i = 0; i < 50; ++i) f.values.push_back(rng.uniform(-1.0, 1.0));
    g.set_features(f);
    ModelConfig mc = base;
    mc.mode = ModelMode::kEgoNode;
    mc.feature_dim = 5;
    mc.class_count = 3;
    mc.tau = 0.4;
    mc.semantic_operator = op;
    auto model = std::make_shared<DetModel>(mc);
    const auto index = std::make_shared<SemanticNeighborIndex>(
        refresh_index(*model, g, {3, 100, seed, 0, 1}));
    auto graph = std::make_shared<Graph>(std::move(g));
    const std::vector<NodeId> nodes = {0, 3, 5, 8};
    auto traces = std::make_shared<std::vector<ForwardTrace>>(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      ForwardOptions record;
      record.trace = &(*traces)[i];
      model->forward_node(*graph, {nodes[i]}, *index, record);
    }
    check(std::string("dual ego-node loss (") + to_string(op) + ")", all_parameters(*model), [=] {
      std::vector<ad::Tensor> rows;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        ForwardOptions frozen;
        frozen.frozen_bias = &(*traces)[i];
        rows.push_back(model->head(model->forward_node(*graph, {nodes[i]}, *index, frozen).h));
      }
      const std::vector<std::size_t> labels = {0, 2, 1, 2};
      const ad::Tensor main =
          ad::scalar_mul(ad::mean(ad::pick(ad::row_log_softmax(ad::concat_rows(rows)), labels)), -1.0);
      Rng neg(seed + 1);
      return ad::add(main, batch_fetching_loss(*model, *graph, nodes, std::nullopt, neg));
    });
  }
  {
    Graph g = small_graph(10, rng, true);
    ModelConfig mc = base;
    mc.mode = ModelMode::kKg;
    mc.entity_count = 10;
    mc.relation_count = 4;
    mc.tau = 0.6;
    auto model = std::make_shared<DetModel>(mc);
    auto graph = std::make_shared<Graph>(std::move(g));
    const auto index = std::make_shared<SemanticNeighborIndex>(
        refresh_index(*model, *graph, {3, 100, seed, 0, 1}));
    const Edge target = graph->edges().front();
    const NodeQuery q{target.source, *target.type, target.target};
    auto trace = std::make_shared<ForwardTrace>();
    ForwardOptions record;
    record.trace = trace.get();
    model->forward_node(*graph, q, *index, record);
    check("dual kg loss", all_parameters(*model), [=] {
      ForwardOptions frozen;
      frozen.frozen_bias = trace.get();
      const ad::Tensor scores = model->head(model->forward_node(*graph, q, *index, frozen).h);
      const std::vector<std::size_t> t = {target.target};
      return ad::scalar_mul(ad::sum(ad::pick(ad::row_log_softmax(scores), t)), -1.0);
    });
  }
  {
    Graph g = small_graph(10, rng, false);
    ModelConfig mc = base;
    mc.mode = ModelMode::kWholeGraph;
    mc.tau = 0.3;
    auto model = std::make_shared<DetModel>(mc);
    auto graph = std::make_shared<Graph>(std::move(g));
    auto trace = std::make_shared<ForwardTrace>();
    ForwardOptions record;
    record.trace = trace.get();
    model->forward_graph(*graph, record);
    check("dual whole-graph loss", all_parameters(*model), [=] {
      ForwardOptions frozen;
      frozen.frozen_bias = trace.get();
      const ad::Tensor pred = model->head(model->forward_graph(*graph, frozen).h);
      return ad::mul(ad::add_scalar(pred, -0.7), ad::add_scalar(pred, -0.7));
    });
  }
  ad::set_strict_numerics(strict);
  return cases;
}

}  // namespace det

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

#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "det/checkpoint.h"
#include "det/errors.h"
#include "det/io.h"
#include "det/training.h"

namespace det {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("det_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::size_t parse_error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(Loaders, EdgeListErrorsCarryLineNumbers) {
  TempDir d;
  write(d / "a.tsv", "# header\n0\t1\n1\t1\n");
  EXPECT_EQ(parse_error_line([&] { load_edge_list((d / "a.tsv").string()); }), 3u);
  write(d / "b.tsv", "0\t1\n1\t2\n0\t1\n");
  EXPECT_EQ(parse_error_line([&] { load_edge_list((d / "b.tsv").string()); }), 3u);
  write(d / "c.tsv", "0\t1\t0\n1\t2\n");
  EXPECT_EQ(parse_error_line([&] { load_edge_list((d / "c.tsv").string()); }), 2u);
  write(d / "d.tsv", "0\tx\n");
  EXPECT_EQ(parse_error_line([&] { load_edge_list((d / "d.tsv").string()); }), 1u);
}

TEST(Loaders, EdgeListBasics) {
  TempDir d;
  write(d / "g.tsv", "0\t1\n# c\n\n1\t2\n");
  const Graph g = load_edge_list((d / "g.tsv").string());
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_THROW(load_edge_list((d / "g.tsv").string(), 2), IntegrityError);
  EXPECT_THROW(load_edge_list((d / "missing.tsv").string()), IntegrityError);
}

TEST(Loaders, FeaturesAndLabels) {
  TempDir d;
  write(d / "f.txt", "1 2\n3 4\n5\n");
  EXPECT_EQ(parse_error_line([&] { load_features((d / "f.txt").string()); }), 3u);
  write(d / "f.txt", "1 2\n3 4\n");
  const FeatureMatrix f = load_features((d / "f.txt").string());
  EXPECT_EQ(f.rows, 2u);
  EXPECT_EQ(f.values[3], 4.0);

  write(d / "l.tsv", "0\t1\n1\t0\n1\t2\n");
  const NodeLabels multi = load_labels((d / "l.tsv").string(), 3);
  EXPECT_TRUE(multi.multilabel);
  EXPECT_EQ(multi.class_count, 3u);
  write(d / "l.tsv", "0\t1\n5\t0\n");
  EXPECT_EQ(parse_error_line([&] { load_labels((d / "l.tsv").string(), 3); }), 2u);
}

TEST(Loaders, TriplesAndGraphSets) {
  TempDir d;
  write(d / "t.tsv", "a\tr\tb\nbad line\n");
  EXPECT_EQ(parse_error_line([&] { read_triples((d / "t.tsv").string()); }), 2u);
  write(d / "g.graphs", "3 0.5\n0\t1\n\nX\n");
  EXPECT_EQ(parse_error_line([&] { read_graph_file((d / "g.graphs").string()); }), 4u);
  write(d / "g.graphs", "3 0.5\n0\t1\n1\t2\n\n2 1.0\n0\t1\n");
  const auto gs = read_graph_file((d / "g.graphs").string());
  ASSERT_EQ(gs.size(), 2u);
  EXPECT_EQ(gs[0].graph.edge_count(), 2u);
  EXPECT_EQ(gs[1].target, 1.0);
}

TEST(Bundles, RoundTripEveryKind) {
  for (const char* kind : {"planted-cluster", "block-citation", "toy-kg", "toy-graphs"}) {
    TempDir d;
    const DatasetBundle a = generate_synthetic(kind, 4);
    write_bundle(a, d.str());
    const DatasetBundle b = load_bundle(d.str());
    ASSERT_EQ(a.index(), b.index()) << kind;
    if (const auto* na = std::get_if<NodeBundle>(&a)) {
      const auto& nb = std::get<NodeBundle>(b);
      EXPECT_EQ(na->graph.edges(), nb.graph.edges());
      EXPECT_EQ(*na->graph.labels(), *nb.graph.labels());
      EXPECT_EQ(na->train, nb.train);
      EXPECT_EQ(na->clusters, nb.clusters);
      const auto& fa = *na->graph.features();
      const auto& fb = *nb.graph.features();
      ASSERT_EQ(fa.values.size(), fb.values.size());
      for (std::size_t i = 0; i < fa.values.size(); ++i) EXPECT_DOUBLE_EQ(fa.values[i], fb.values[i]);
    } else if (const auto* ka = std::get_if<KgBundle>(&a)) {
      const auto& kb = std::get<KgBundle>(b);
      EXPECT_EQ(ka->entities, kb.entities);
      EXPECT_EQ(ka->train, kb.train);
      EXPECT_EQ(ka->test, kb.test);
    } else {
      const auto& ga = std::get<GraphSetBundle>(a);
      const auto& gb = std::get<GraphSetBundle>(b);
      ASSERT_EQ(ga.train.size(), gb.train.size());
      for (std::size_t i = 0; i < ga.train.size(); ++i) {
        EXPECT_EQ(ga.train[i].graph.edges(), gb.train[i].graph.edges());
        EXPECT_DOUBLE_EQ(ga.train[i].target, gb.train[i].target);
      }
    }
  }
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = generate_toy_kg({}, 9), b = generate_toy_kg({}, 9), c = generate_toy_kg({}, 10);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.train, c.train);
  const auto p = generate_block_citation({}, 2), q = generate_block_citation({}, 2);
  EXPECT_EQ(p.graph.edges(), q.graph.edges());
  EXPECT_EQ(*p.graph.features(), *q.graph.features());
}

TEST(Synth, ToyGraphTargetIsTriangleShare) {
  // triangle 0-1-2 plus pendant 3
  const Graph g(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(toy_graph_target(g), 0.75);
  EXPECT_DOUBLE_EQ(toy_graph_target(Graph(3, {{0, 1}, {1, 2}})), 0.0);
}

TEST(Checkpoint, RoundTripRestoresParameters) {
  TempDir d;
  const DatasetBundle data = generate_synthetic("block-citation", 1);
  TrainConfig c = default_train_config(Task::kNodeClassification);
  c.hidden = 8;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.layers = 1;
  DetModel a(model_config_for(c, data));
  const std::string path = (d / "m.det").string();
  write_checkpoint(path, a, {"node-classification", "somewhere", 7, 99});
  const Checkpoint ck = read_checkpoint(path);
  EXPECT_EQ(ck.model, a.config());
  EXPECT_EQ(ck.extras.k, 7u);
  EXPECT_EQ(ck.extras.candidate_count, 99u);

  DetModel b(model_config_for(c, data));
  for (const auto& p : b.parameters().entries()) {
    ad::Tensor t = p.tensor;
    for (double& v : t.mutable_values()) v = 0.0;
  }
  load_parameters(ck, b);
  const auto& ea = a.parameters().entries();
  const auto& eb = b.parameters().entries();
  ASSERT_EQ(ea.size(), eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const auto va = ea[i].tensor.values(), vb = eb[i].tensor.values();
    for (std::size_t j = 0; j < va.size(); ++j) {
      EXPECT_EQ(static_cast<double>(static_cast<float>(va[j])), vb[j]) << ea[i].name;
    }
  }
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  TempDir d;
  const DatasetBundle data = generate_synthetic("block-citation", 1);
  TrainConfig c = default_train_config(Task::kNodeClassification);
  c.hidden = 8;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.layers = 1;
  DetModel a(model_config_for(c, data));
  const std::string path = (d / "m.det").string();
  write_checkpoint(path, a, {"node-classification", "x", 4, 8});
  c.hidden = 16;
  DetModel wider(model_config_for(c, data));
  EXPECT_THROW(load_parameters(read_checkpoint(path), wider), IntegrityError);
  c.hidden = 8;
  c.seed = 5;
  DetModel reseeded(model_config_for(c, data));
  EXPECT_THROW(load_parameters(read_checkpoint(path), reseeded), IntegrityError);

  write(d / "bad.det", "NOPE");
  EXPECT_THROW(read_checkpoint((d / "bad.det").string()), IntegrityError);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 3);
  EXPECT_THROW(read_checkpoint(path), IntegrityError);
}

}  // namespace
}  // namespace det

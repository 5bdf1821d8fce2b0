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

#include "det/io.h"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "det/errors.h"
#include "det/rng.h"

namespace det {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IntegrityError("cannot write " + path);
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_number(const std::string& text, const std::string& path, std::size_t line,
               const char* what) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(path, line, fmt::format("bad {} '{}'", what, text));
  }
  return value;
}

bool skippable(const std::string& line) { return line.empty() || line.front() == '#'; }

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<Edge> parse_edges(std::istream& in, const std::string& path, std::size_t& line_no,
                              std::size_t count_hint, bool stop_at_blank,
                              std::size_t* max_id) {
  std::vector<Edge> edges;
  std::set<std::tuple<NodeId, NodeId, std::optional<TypeId>>> seen;
  std::optional<bool> typed;
  std::string line;
  while (count_hint-- > 0 && std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() && stop_at_blank) break;
    if (skippable(line)) {
      ++count_hint;
      continue;
    }
    const auto parts = split(line, '\t');
    if (parts.size() != 2 && parts.size() != 3) {
      throw ParseError(path, line_no, "expected u<TAB>v[<TAB>type]");
    }
    Edge e;
    e.source = parse_number<NodeId>(parts[0], path, line_no, "node id");
    e.target = parse_number<NodeId>(parts[1], path, line_no, "node id");
    if (parts.size() == 3) e.type = parse_number<TypeId>(parts[2], path, line_no, "edge type");
    if (typed && *typed != e.type.has_value()) {
      throw ParseError(path, line_no, "edge types must be given on every line or none");
    }
    typed = e.type.has_value();
    if (e.source == e.target) throw ParseError(path, line_no, "self-loop");
    const auto key = std::make_tuple(std::min(e.source, e.target), std::max(e.source, e.target),
                                     e.type);
    if (!seen.insert(key).second) throw ParseError(path, line_no, "duplicate edge");
    if (max_id != nullptr) *max_id = std::max<std::size_t>({*max_id, e.source + 1u, e.target + 1u});
    edges.push_back(e);
  }
  return edges;
}

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

void write_edges(std::ostream& out, const std::vector<Edge>& edges) {
  for (const Edge& e : edges) {
    out << e.source << '\t' << e.target;
    if (e.type) out << '\t' << *e.type;
    out << '\n';
  }
}

}  // namespace

Graph kg_training_graph(std::size_t entity_count, const std::vector<Triple>& train) {
  std::vector<Edge> edges;
  edges.reserve(train.size());
  for (const Triple& t : train) edges.push_back({t.head, t.tail, t.relation});
  GraphOptions options;
  options.directed = true;
  options.allow_self_loops = true;
  return Graph(entity_count, std::move(edges), options);
}

Graph load_edge_list(const std::string& path, std::optional<std::size_t> node_count,
                     GraphOptions options) {
  std::ifstream in = open_input(path);
  std::size_t line_no = 0;
  std::size_t max_id = 0;
  std::vector<Edge> edges =
      parse_edges(in, path, line_no, static_cast<std::size_t>(-1), false, &max_id);
  const std::size_t n = node_count.value_or(max_id);
  if (max_id > n) {
    throw IntegrityError(fmt::format("{}: node id {} outside {} nodes", path, max_id - 1, n));
  }
  return Graph(n, std::move(edges), options);
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream in = open_input(path);
  FeatureMatrix f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto parts = split(line, ' ');
    if (f.rows == 0) f.cols = parts.size();
    if (parts.size() != f.cols) {
      throw ParseError(path, line_no, fmt::format("expected {} values, got {}", f.cols,
                                                  parts.size()));
    }
    for (const auto& p : parts) f.values.push_back(parse_number<double>(p, path, line_no, "real"));
    ++f.rows;
  }
  return f;
}

NodeLabels load_labels(const std::string& path, std::size_t node_count) {
  std::ifstream in = open_input(path);
  std::vector<std::pair<NodeId, std::int32_t>> pairs;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> seen(node_count, 0);
  bool multilabel = false;
  std::int32_t max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto parts = split(line, '\t');
    if (parts.size() != 2) throw ParseError(path, line_no, "expected node<TAB>label");
    const NodeId v = parse_number<NodeId>(parts[0], path, line_no, "node id");
    const std::int32_t label = parse_number<std::int32_t>(parts[1], path, line_no, "label");
    if (v >= node_count) throw ParseError(path, line_no, fmt::format("node {} out of range", v));
    if (label < 0) throw ParseError(path, line_no, "negative label");
    for (const auto& [u, l] : pairs) {
      if (u == v && l == label) throw ParseError(path, line_no, "duplicate label");
    }
    if (seen[v]++ > 0) multilabel = true;
    max_label = std::max(max_label, label);
    pairs.emplace_back(v, label);
  }
  NodeLabels labels;
  labels.class_count = static_cast<std::size_t>(max_label + 1);
  labels.multilabel = multilabel;
  if (multilabel) {
    labels.multi.assign(node_count * labels.class_count, 0);
    for (const auto& [v, l] : pairs) labels.multi[v * labels.class_count + l] = 1;
  } else {
    labels.single.assign(node_count, -1);
    for (const auto& [v, l] : pairs) labels.single[v] = l;
  }
  return labels;
}

std::vector<NodeId> load_split(const std::string& path, std::size_t limit) {
  std::ifstream in = open_input(path);
  std::vector<NodeId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const NodeId v = parse_number<NodeId>(line, path, line_no, "id");
    if (v >= limit) throw IntegrityError(fmt::format("{}:{}: id {} out of range", path, line_no, v));
    ids.push_back(v);
  }
  return ids;
}

std::vector<RawTriple> read_triples(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<RawTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto parts = split(line, '\t');
    if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
      throw ParseError(path, line_no, "expected head<TAB>relation<TAB>tail");
    }
    out.push_back({parts[0], parts[1], parts[2]});
  }
  return out;
}

namespace {

std::vector<std::string> read_vocab(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (!seen.insert(line).second) throw ParseError(path, line_no, "duplicate vocabulary entry");
    out.push_back(line);
  }
  return out;
}

class Vocab {
 public:
  Vocab(std::vector<std::string> fixed, bool frozen) {
    for (auto& w : fixed) id(w, "");
    frozen_ = frozen;
  }
  std::uint32_t id(const std::string& word, const std::string& where) {
    const auto it = ids_.find(word);
    if (it != ids_.end()) return it->second;
    if (frozen_) throw IntegrityError(fmt::format("{}: '{}' not in vocabulary", where, word));
    ids_.emplace(word, static_cast<std::uint32_t>(words_.size()));
    words_.push_back(word);
    return static_cast<std::uint32_t>(words_.size() - 1);
  }
  std::vector<std::string> words() const { return words_; }

 private:
  bool frozen_ = false;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> words_;
};

}  // namespace

KgBundle load_triples(const std::string& dir) {
  const fs::path root(dir);
  const bool has_entities = fs::exists(root / "entities.txt");
  const bool has_relations = fs::exists(root / "relations.txt");
  Vocab entities(has_entities ? read_vocab((root / "entities.txt").string())
                              : std::vector<std::string>{},
                 has_entities);
  Vocab relations(has_relations ? read_vocab((root / "relations.txt").string())
                                : std::vector<std::string>{},
                  has_relations);
  KgBundle kg;
  std::set<Triple> seen;
  for (const char* split_name : {"train", "valid", "test"}) {
    const std::string path = (root / (std::string(split_name) + ".tsv")).string();
    std::vector<Triple>& target = split_name[1] == 'r' ? kg.train
                                  : split_name[1] == 'a' ? kg.valid
                                                         : kg.test;
    std::size_t line = 0;
    for (const RawTriple& raw : read_triples(path)) {
      ++line;
      const std::string where = fmt::format("{} triple {}", path, line);
      const Triple t{entities.id(raw.head, where), relations.id(raw.relation, where),
                     entities.id(raw.tail, where)};
      if (!seen.insert(t).second) {
        throw IntegrityError(fmt::format("{}: duplicate triple", where));
      }
      target.push_back(t);
    }
  }
  kg.entities = entities.words();
  kg.relations = relations.words();
  kg.graph = kg_training_graph(kg.entities.size(), kg.train);
  return kg;
}

std::vector<GraphSample> read_graph_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<GraphSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto header = split(line, ' ');
    if (header.size() != 2) throw ParseError(path, line_no, "expected 'N <target>' header");
    const std::size_t n = parse_number<std::size_t>(header[0], path, line_no, "node count");
    const double target = parse_number<double>(header[1], path, line_no, "target");
    if (n == 0) throw ParseError(path, line_no, "graph needs at least one node");
    const std::size_t start = line_no;
    std::size_t max_id = 0;
    std::vector<Edge> edges = parse_edges(in, path, line_no, static_cast<std::size_t>(-1), true,
                                          &max_id);
    if (max_id > n) {
      throw IntegrityError(fmt::format("{}:{}: edge endpoint outside {} nodes", path, start, n));
    }
    out.push_back({Graph(n, std::move(edges)), target});
  }
  return out;
}

GraphSetBundle load_graph_set(const std::string& dir) {
  const fs::path root(dir);
  GraphSetBundle set;
  set.train = read_graph_file((root / "train.graphs").string());
  set.valid = read_graph_file((root / "valid.graphs").string());
  set.test = read_graph_file((root / "test.graphs").string());
  for (const auto* part : {&set.train, &set.valid, &set.test}) {
    for (const GraphSample& s : *part) {
      for (const Edge& e : s.graph.edges()) {
        if (e.type) set.relation_count = std::max<std::size_t>(set.relation_count, *e.type + 1u);
      }
    }
  }
  return set;
}

NodeBundle load_node_bundle(const std::string& dir) {
  const fs::path root(dir);
  FeatureMatrix features = load_features((root / "features.txt").string());
  const std::size_t n = features.rows;
  NodeBundle b;
  b.graph = load_edge_list((root / "edges.tsv").string(), n);
  b.graph.set_features(std::move(features));
  b.graph.set_labels(load_labels((root / "labels.tsv").string(), n));
  b.train = load_split((root / "train.txt").string(), n);
  b.valid = load_split((root / "valid.txt").string(), n);
  b.test = load_split((root / "test.txt").string(), n);
  std::vector<int> owner(n, -1);
  int split_id = 0;
  for (const auto* part : {&b.train, &b.valid, &b.test}) {
    for (NodeId v : *part) {
      if (owner[v] != -1) throw IntegrityError(fmt::format("node {} appears in two splits", v));
      owner[v] = split_id;
      const NodeLabels& labels = *b.graph.labels();
      if (!labels.multilabel && labels.single[v] < 0) {
        throw IntegrityError(fmt::format("split node {} has no label", v));
      }
    }
    ++split_id;
  }
  const fs::path clusters = root / "clusters.tsv";
  if (fs::exists(clusters)) {
    std::ifstream in = open_input(clusters.string());
    std::vector<std::size_t> groups(n, 0);
    std::vector<bool> set(n, false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (skippable(line)) continue;
      const auto parts = split(line, '\t');
      if (parts.size() != 2) throw ParseError(clusters.string(), line_no, "expected node<TAB>cluster");
      const NodeId v = parse_number<NodeId>(parts[0], clusters.string(), line_no, "node id");
      if (v >= n) throw ParseError(clusters.string(), line_no, "node out of range");
      groups[v] = parse_number<std::size_t>(parts[1], clusters.string(), line_no, "cluster");
      set[v] = true;
    }
    if (std::find(set.begin(), set.end(), false) != set.end()) {
      throw IntegrityError(clusters.string() + ": every node needs a cluster");
    }
    b.clusters = std::move(groups);
  }
  return b;
}

DatasetBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (fs::exists(root / "train.tsv")) return load_triples(dir);
  if (fs::exists(root / "train.graphs")) return load_graph_set(dir);
  if (fs::exists(root / "edges.tsv")) return load_node_bundle(dir);
  throw IntegrityError("no dataset bundle found in " + dir);
}

void write_bundle(const DatasetBundle& bundle, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  if (const auto* nb = std::get_if<NodeBundle>(&bundle)) {
    const Graph& g = nb->graph;
    if (!g.features() || !g.labels()) throw ContractError("node bundle needs features and labels");
    {
      auto out = open_output((root / "edges.tsv").string());
      write_edges(out, g.edges());
    }
    {
      auto out = open_output((root / "features.txt").string());
      const FeatureMatrix& f = *g.features();
      for (std::size_t r = 0; r < f.rows; ++r) {
        for (std::size_t c = 0; c < f.cols; ++c) {
          if (c > 0) out << ' ';
          out << format_real(f.values[r * f.cols + c]);
        }
        out << '\n';
      }
    }
    {
      auto out = open_output((root / "labels.tsv").string());
      const NodeLabels& l = *g.labels();
      for (std::size_t v = 0; v < g.node_count(); ++v) {
        if (l.multilabel) {
          for (std::size_t c = 0; c < l.class_count; ++c) {
            if (l.multi[v * l.class_count + c]) out << v << '\t' << c << '\n';
          }
        } else if (l.single[v] >= 0) {
          out << v << '\t' << l.single[v] << '\n';
        }
      }
    }
    const std::pair<const char*, const std::vector<NodeId>*> splits[] = {
        {"train.txt", &nb->train}, {"valid.txt", &nb->valid}, {"test.txt", &nb->test}};
    for (const auto& [name, ids] : splits) {
      auto out = open_output((root / name).string());
      for (NodeId v : *ids) out << v << '\n';
    }
    if (nb->clusters) {
      auto out = open_output((root / "clusters.tsv").string());
      for (std::size_t v = 0; v < nb->clusters->size(); ++v) {
        out << v << '\t' << (*nb->clusters)[v] << '\n';
      }
    }
  } else if (const auto* kg = std::get_if<KgBundle>(&bundle)) {
    {
      auto out = open_output((root / "entities.txt").string());
      for (const auto& e : kg->entities) out << e << '\n';
    }
    {
      auto out = open_output((root / "relations.txt").string());
      for (const auto& r : kg->relations) out << r << '\n';
    }
    const std::pair<const char*, const std::vector<Triple>*> splits[] = {
        {"train.tsv", &kg->train}, {"valid.tsv", &kg->valid}, {"test.tsv", &kg->test}};
    for (const auto& [name, triples] : splits) {
      auto out = open_output((root / name).string());
      for (const Triple& t : *triples) {
        out << kg->entities.at(t.head) << '\t' << kg->relations.at(t.relation) << '\t'
            << kg->entities.at(t.tail) << '\n';
      }
    }
  } else {
    const auto& set = std::get<GraphSetBundle>(bundle);
    const std::pair<const char*, const std::vector<GraphSample>*> splits[] = {
        {"train.graphs", &set.train}, {"valid.graphs", &set.valid}, {"test.graphs", &set.test}};
    for (const auto& [name, samples] : splits) {
      auto out = open_output((root / name).string());
      for (std::size_t i = 0; i < samples->size(); ++i) {
        const GraphSample& s = (*samples)[i];
        if (i > 0) out << '\n';
        out << s.graph.node_count() << ' ' << format_real(s.target) << '\n';
        write_edges(out, s.graph.edges());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generators.

namespace {

void split_nodes(std::size_t n, double train_fraction, double valid_fraction, Rng& rng,
                 NodeBundle& b) {
  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(n));
  b.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  b.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  b.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
  for (auto* part : {&b.train, &b.valid, &b.test}) std::sort(part->begin(), part->end());
}

void add_edge(std::set<std::pair<NodeId, NodeId>>& edges, NodeId u, NodeId v) {
  if (u != v) edges.insert({std::min(u, v), std::max(u, v)});
}

std::vector<Edge> to_edges(const std::set<std::pair<NodeId, NodeId>>& pairs) {
  std::vector<Edge> edges;
  for (const auto& [u, v] : pairs) edges.push_back({u, v, std::nullopt});
  return edges;
}

}  // namespace

NodeBundle generate_planted_cluster(const PlantedClusterParams& p, std::uint64_t seed) {
  if (p.clusters == 0 || p.nodes < 2 * p.clusters) {
    throw ConfigError("planted-cluster needs at least two nodes per cluster");
  }
  if (p.cross_noise < 0.0 || p.cross_noise > 1.0) throw ConfigError("cross_noise outside [0, 1]");
  Rng rng(seed);
  const std::size_t n = p.nodes;
  std::vector<std::size_t> cluster(n);
  for (std::size_t v = 0; v < n; ++v) cluster[v] = v % p.clusters;
  for (std::size_t i = n; i > 1; --i) std::swap(cluster[i - 1], cluster[rng.uniform_index(i)]);
  std::vector<std::vector<NodeId>> members(p.clusters);
  for (NodeId v = 0; v < n; ++v) members[cluster[v]].push_back(v);

  std::vector<double> centroids(p.clusters * p.feature_dim);
  for (double& c : centroids) c = rng.normal();
  FeatureMatrix f{n, p.feature_dim, std::vector<double>(n * p.feature_dim)};
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < p.feature_dim; ++c) {
      f.values[v * p.feature_dim + c] =
          centroids[cluster[v] * p.feature_dim + c] + p.feature_noise * rng.normal();
    }
  }

  std::set<std::pair<NodeId, NodeId>> pairs;
  const std::size_t per_node = std::max<std::size_t>(1, p.intra_degree / 2);
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t e = 0; e < per_node; ++e) {
      if (p.clusters > 1 && rng.uniform() < p.cross_noise) {
        NodeId u = v;
        while (cluster[u] == cluster[v]) u = static_cast<NodeId>(rng.uniform_index(n));
        add_edge(pairs, v, u);
      } else {
        const auto& same = members[cluster[v]];
        add_edge(pairs, v, same[rng.uniform_index(same.size())]);
      }
    }
  }
  NodeBundle b;
  b.graph = Graph(n, to_edges(pairs));
  b.graph.set_features(std::move(f));
  NodeLabels labels{p.clusters, false, std::vector<std::int32_t>(n), {}};
  for (std::size_t v = 0; v < n; ++v) labels.single[v] = static_cast<std::int32_t>(cluster[v]);
  b.graph.set_labels(std::move(labels));
  split_nodes(n, 0.6, 0.2, rng, b);
  b.clusters = cluster;
  return b;
}

NodeBundle generate_block_citation(const BlockCitationParams& p, std::uint64_t seed) {
  if (p.classes < 2 || p.nodes < 2 * p.classes) throw ConfigError("block-citation needs two nodes per class");
  if (p.feature_dim < p.classes) throw ConfigError("block-citation needs feature_dim >= classes");
  if (p.homophily < 0.0 || p.homophily > 1.0) throw ConfigError("homophily outside [0, 1]");
  if (p.train_fraction <= 0.0 || p.valid_fraction <= 0.0 ||
      p.train_fraction + p.valid_fraction >= 1.0) {
    throw ConfigError("block-citation split fractions must be positive and sum below 1");
  }
  Rng rng(seed);
  const std::size_t n = p.nodes;
  std::vector<std::size_t> label(n);
  for (std::size_t v = 0; v < n; ++v) label[v] = v % p.classes;
  for (std::size_t i = n; i > 1; --i) std::swap(label[i - 1], label[rng.uniform_index(i)]);
  std::vector<std::vector<NodeId>> members(p.classes);
  for (NodeId v = 0; v < n; ++v) members[label[v]].push_back(v);

  FeatureMatrix f{n, p.feature_dim, std::vector<double>(n * p.feature_dim)};
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < p.feature_dim; ++c) {
      const double signal = c == label[v] ? p.feature_signal : 0.0;
      f.values[v * p.feature_dim + c] =
          signal + (p.feature_noise > 0.0 ? p.feature_noise * rng.normal() : 0.0);
    }
  }
  std::set<std::pair<NodeId, NodeId>> pairs;
  const auto target_edges = static_cast<std::size_t>(p.average_degree * static_cast<double>(n) / 2.0);
  std::size_t attempts = 0;
  while (pairs.size() < target_edges && attempts++ < 100 * target_edges + 100) {
    const auto v = static_cast<NodeId>(rng.uniform_index(n));
    NodeId u;
    if (rng.uniform() < p.homophily) {
      const auto& same = members[label[v]];
      u = same[rng.uniform_index(same.size())];
    } else {
      std::size_t other = rng.uniform_index(p.classes - 1);
      if (other >= label[v]) ++other;
      const auto& diff = members[other];
      u = diff[rng.uniform_index(diff.size())];
    }
    add_edge(pairs, v, u);
  }
  NodeBundle b;
  b.graph = Graph(n, to_edges(pairs));
  b.graph.set_features(std::move(f));
  NodeLabels labels{p.classes, false, std::vector<std::int32_t>(n), {}};
  for (std::size_t v = 0; v < n; ++v) labels.single[v] = static_cast<std::int32_t>(label[v]);
  b.graph.set_labels(std::move(labels));
  split_nodes(n, p.train_fraction, p.valid_fraction, rng, b);
  return b;
}

KgBundle generate_toy_kg(const ToyKgParams& p, std::uint64_t seed) {
  if (p.group_size < 3 || p.groups == 0) throw ConfigError("toy-kg needs groups of at least 3");
  if (p.holdout < 0.0 || p.holdout >= 1.0) throw ConfigError("holdout outside [0, 1)");
  Rng rng(seed);
  KgBundle kg;
  for (std::size_t g = 0; g < p.groups; ++g) {
    for (std::size_t i = 0; i < p.group_size; ++i) kg.entities.push_back(fmt::format("e{}_{}", g, i));
  }
  kg.relations = {"next", "prev", "skip"};
  std::vector<Triple> all;
  for (std::size_t g = 0; g < p.groups; ++g) {
    const auto id = [&](std::size_t i) {
      return static_cast<NodeId>(g * p.group_size + i % p.group_size);
    };
    for (std::size_t i = 0; i < p.group_size; ++i) {
      all.push_back({id(i), 0, id(i + 1)});
      all.push_back({id(i + 1), 1, id(i)});
      all.push_back({id(i), 2, id(i + 2)});
    }
  }
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.uniform_index(i)]);
  const auto held = static_cast<std::size_t>(p.holdout * static_cast<double>(all.size()));
  kg.valid.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(held / 2));
  kg.test.assign(all.begin() + static_cast<std::ptrdiff_t>(held / 2),
                 all.begin() + static_cast<std::ptrdiff_t>(held));
  kg.train.assign(all.begin() + static_cast<std::ptrdiff_t>(held), all.end());
  for (auto* part : {&kg.train, &kg.valid, &kg.test}) std::sort(part->begin(), part->end());
  kg.graph = kg_training_graph(kg.entities.size(), kg.train);
  return kg;
}

double toy_graph_target(const Graph& g) {
  // Share of nodes lying on a triangle.
  std::size_t on_triangle = 0;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    const auto nbrs = g.neighbors(v);
    bool found = false;
    for (std::size_t a = 0; a < nbrs.size() && !found; ++a) {
      for (std::size_t b = a + 1; b < nbrs.size() && !found; ++b) {
        found = g.adjacent(nbrs[a], nbrs[b]);
      }
    }
    on_triangle += found ? 1 : 0;
  }
  return static_cast<double>(on_triangle) / static_cast<double>(g.node_count());
}

GraphSetBundle generate_toy_graphs(const ToyGraphsParams& p, std::uint64_t seed) {
  if (p.graphs < 3 || p.min_nodes < 2 || p.max_nodes < p.min_nodes) {
    throw ConfigError("toy-graphs needs >= 3 graphs and 2 <= min_nodes <= max_nodes");
  }
  Rng rng(seed);
  std::vector<GraphSample> samples;
  for (std::size_t i = 0; i < p.graphs; ++i) {
    const std::size_t n = p.min_nodes + rng.uniform_index(p.max_nodes - p.min_nodes + 1);
    std::set<std::pair<NodeId, NodeId>> pairs;
    // random spanning path keeps every graph connected
    for (NodeId v = 1; v < n; ++v) add_edge(pairs, v, static_cast<NodeId>(rng.uniform_index(v)));
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v = u + 1; v < n; ++v) {
        if (rng.uniform() < p.edge_probability) add_edge(pairs, u, v);
      }
    }
    Graph g(n, to_edges(pairs));
    const double target = toy_graph_target(g);
    samples.push_back({std::move(g), target});
  }
  GraphSetBundle set;
  const std::size_t n_valid = samples.size() / 5;
  const std::size_t n_test = samples.size() / 5;
  const std::size_t n_train = samples.size() - n_valid - n_test;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& part = i < n_train ? set.train : i < n_train + n_valid ? set.valid : set.test;
    part.push_back(std::move(samples[i]));
  }
  return set;
}

DatasetBundle generate_synthetic(const std::string& kind, std::uint64_t seed) {
  if (kind == "planted-cluster") return generate_planted_cluster({}, seed);
  if (kind == "block-citation") return generate_block_citation({}, seed);
  if (kind == "toy-kg") return generate_toy_kg({}, seed);
  if (kind == "toy-graphs") return generate_toy_graphs({}, seed);
  throw ConfigError("unknown synthetic kind: " + kind);
}

}  // namespace det

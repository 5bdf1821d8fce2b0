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

#include "det/checkpoint.h"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "det/errors.h"

namespace det {

namespace {

constexpr char kMagic[4] = {'D', 'E', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw IntegrityError(path + ": truncated checkpoint");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::string get_bytes(std::istream& in, std::size_t n, const std::string& path) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IntegrityError(path + ": truncated checkpoint");
  }
  return s;
}

template <typename T>
T manifest_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw IntegrityError(fmt::format("checkpoint manifest: bad value '{}' for {}", text, key));
  }
  return value;
}

}  // namespace

std::string checkpoint_manifest(const ModelConfig& m, const CheckpointExtras& x) {
  std::string s;
  const auto line = [&](const char* key, const std::string& value) {
    s += fmt::format("{}={}\n", key, value);
  };
  line("mode", to_string(m.mode));
  line("layers", std::to_string(m.layers));
  line("hidden", std::to_string(m.hidden));
  line("heads", std::to_string(m.heads));
  line("semantic_heads", std::to_string(m.semantic_heads));
  line("ffn_hidden", std::to_string(m.ffn_hidden));
  line("atom_layers", std::to_string(m.atom_layers));
  line("max_degree", std::to_string(m.max_degree));
  line("max_distance", std::to_string(m.max_distance));
  line("node_cap", std::to_string(m.node_cap));
  line("feature_dim", std::to_string(m.feature_dim));
  line("class_count", std::to_string(m.class_count));
  line("multilabel", m.multilabel ? "1" : "0");
  line("entity_count", std::to_string(m.entity_count));
  line("relation_count", std::to_string(m.relation_count));
  line("tau", fmt::format("{:.17g}", m.tau));
  line("lambda", fmt::format("{:.17g}", m.lambda));
  line("layerwise_combination", m.layerwise_combination ? "1" : "0");
  line("semantic_operator", to_string(m.semantic_operator));
  line("seed", std::to_string(m.seed));
  line("task", x.task);
  line("data", x.data);
  line("k", std::to_string(x.k));
  line("candidate_count", std::to_string(x.candidate_count));
  return s;
}

void write_checkpoint(const std::string& path, const DetModel& model,
                      const CheckpointExtras& extras) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write " + path);
  out.write(kMagic, 4);
  const std::string manifest = checkpoint_manifest(model.config(), extras);
  put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  const auto& entries = model.parameters().entries();
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const NamedParameter& p : entries) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.tensor.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.tensor.cols()));
    for (double v : p.tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IntegrityError("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path);
  if (get_bytes(in, 4, path) != std::string(kMagic, 4)) {
    throw IntegrityError(path + ": not a DET1 checkpoint");
  }
  const std::string manifest = get_bytes(in, get_u32(in, path), path);
  Checkpoint ck;
  ModelConfig& m = ck.model;
  std::istringstream lines(manifest);
  std::string line;
  std::size_t seen = 0;
  while (std::getline(lines, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IntegrityError(path + ": bad manifest line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto size = [&] { return manifest_number<std::size_t>(key, value); };
    ++seen;
    if (key == "mode") m.mode = parse_model_mode(value);
    else if (key == "layers") m.layers = size();
    else if (key == "hidden") m.hidden = size();
    else if (key == "heads") m.heads = size();
    else if (key == "semantic_heads") m.semantic_heads = size();
    else if (key == "ffn_hidden") m.ffn_hidden = size();
    else if (key == "atom_layers") m.atom_layers = size();
    else if (key == "max_degree") m.max_degree = size();
    else if (key == "max_distance") m.max_distance = size();
    else if (key == "node_cap") m.node_cap = size();
    else if (key == "feature_dim") m.feature_dim = size();
    else if (key == "class_count") m.class_count = size();
    else if (key == "multilabel") m.multilabel = size() != 0;
    else if (key == "entity_count") m.entity_count = size();
    else if (key == "relation_count") m.relation_count = size();
    else if (key == "tau") m.tau = manifest_number<double>(key, value);
    else if (key == "lambda") m.lambda = manifest_number<double>(key, value);
    else if (key == "layerwise_combination") m.layerwise_combination = size() != 0;
    else if (key == "semantic_operator") m.semantic_operator = parse_semantic_operator(value);
    else if (key == "seed") m.seed = manifest_number<std::uint64_t>(key, value);
    else if (key == "task") ck.extras.task = value;
    else if (key == "data") ck.extras.data = value;
    else if (key == "k") ck.extras.k = size();
    else if (key == "candidate_count") ck.extras.candidate_count = size();
    else throw IntegrityError(path + ": unknown manifest key " + key);
  }
  if (seen != 24) throw IntegrityError(path + ": incomplete manifest");
  const std::uint32_t count = get_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointBlob blob;
    blob.name = get_bytes(in, get_u32(in, path), path);
    blob.rows = get_u32(in, path);
    blob.cols = get_u32(in, path);
    blob.values.resize(blob.rows * blob.cols);
    for (float& v : blob.values) v = std::bit_cast<float>(get_u32(in, path));
    ck.parameters.push_back(std::move(blob));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError(path + ": trailing bytes");
  return ck;
}

void load_parameters(const Checkpoint& ck, DetModel& model) {
  if (!(ck.model == model.config())) {
    throw IntegrityError("checkpoint manifest does not match the model:\n" +
                         checkpoint_manifest(ck.model, ck.extras));
  }
  const auto& entries = model.parameters().entries();
  if (entries.size() != ck.parameters.size()) {
    throw IntegrityError(fmt::format("checkpoint has {} parameters, model has {}",
                                     ck.parameters.size(), entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const CheckpointBlob& blob = ck.parameters[i];
    ad::Tensor t = entries[i].tensor;
    if (blob.name != entries[i].name || blob.rows != t.rows() || blob.cols != t.cols()) {
      throw IntegrityError(fmt::format("checkpoint parameter {} {}x{} does not match {} {}", blob.name,
                                       blob.rows, blob.cols, entries[i].name, t.shape().str()));
    }
    auto values = t.mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) values[j] = blob.values[j];
  }
}

}  // namespace det

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

#include "det/parameters.h"

#include <algorithm>
#include <cmath>

#include "det/errors.h"

namespace det {

ad::Tensor ParameterStore::add(const std::string& name, std::size_t rows, std::size_t cols,
                               Init init, Rng& rng, double scale) {
  if (contains(name)) throw ContractError("parameter registered twice: " + name);
  std::vector<double> values(rows * cols, 0.0);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::kXavier: {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (double& v : values) v = rng.uniform(-limit, limit);
      break;
    }
    case Init::kNormal:
      for (double& v : values) v = scale * rng.normal();
      break;
  }
  entries_.push_back({name, ad::Tensor::from(rows, cols, std::move(values), true)});
  return entries_.back().tensor;
}

const ad::Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("unknown parameter: " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const NamedParameter& e) { return e.name == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ContractError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    if (values[i].size() != dst.size()) {
      throw ContractError("restore: size mismatch for " + entries_[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace det

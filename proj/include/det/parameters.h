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
#include <string>
#include <vector>

#include "det/autodiff.h"
#include "det/rng.h"

namespace det {

enum class Init { kZeros, kOnes, kXavier, kNormal };

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

// Ordered registry of every trainable matrix in a model. Registration order
// is the checkpoint order and the optimizer state order.
class ParameterStore {
 public:
  ad::Tensor add(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng,
                 double scale = 0.02);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<NamedParameter> entries_;
};

}  // namespace det

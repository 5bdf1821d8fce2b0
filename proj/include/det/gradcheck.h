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

// Central finite-difference checks of every op and of the full dual loss.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "det/autodiff.h"

namespace det {

struct GradcheckCase {
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor) over every entry
// of every input; `loss` must rebuild the graph from the current values.
double finite_difference_error(const std::function<ad::Tensor()>& loss,
                               const std::vector<ad::Tensor>& inputs, double step = 1e-5,
                               double floor = 1e-4);

std::vector<GradcheckCase> run_gradcheck(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace det

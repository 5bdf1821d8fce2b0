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

// Binary checkpoints: "DET1", a key=value manifest, then named parameter
// blobs as little-endian float32.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "det/model.h"

namespace det {

// Run settings stored next to the model shape so that eval and neighbors can
// rebuild the same index.
struct CheckpointExtras {
  std::string task;
  std::string data;
  std::size_t k = 16;
  std::size_t candidate_count = 1024;
};

struct CheckpointBlob {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig model;
  CheckpointExtras extras;
  std::vector<CheckpointBlob> parameters;
};

std::string checkpoint_manifest(const ModelConfig& model, const CheckpointExtras& extras);
void write_checkpoint(const std::string& path, const DetModel& model, const CheckpointExtras& extras);
Checkpoint read_checkpoint(const std::string& path);
// Copies the blobs into the model; rejects any manifest, name or shape mismatch.
void load_parameters(const Checkpoint& checkpoint, DetModel& model);

}  // namespace det

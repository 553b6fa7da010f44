// Copyright 2026 The kgjoint Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "kgjoint/config.hpp"
#include "kgjoint/memory.hpp"
#include "kgjoint/model.hpp"
#include "kgjoint/optim.hpp"

namespace kgjoint {

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian host order): magic "KGJCKPT\0", version,
// config text, model dims, step, then named parameter records (group,
// shape, values, both moments, step count) and an optional memory record.
struct Checkpoint {
  TrainConfig config;
  ModelDims dims;
  int64_t step = 0;
  ParameterStore params;
  std::optional<EntityMemory> memory;
};

void save_checkpoint(const std::string& path, const TrainConfig& config, const ModelDims& dims, int64_t step,
                     const ParameterStore& params, const EntityMemory* memory);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kgjoint

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

#include <string>
#include <vector>

#include "kgjoint/config.hpp"
#include "kgjoint/pretrain.hpp"

namespace kgjoint {

struct BenchTrace {
  std::vector<double> seconds;  // wall clock per training step
  std::vector<bool> refreshed;
  double mean() const;
};

struct BenchReport {
  BenchTrace with_memory;
  BenchTrace recompute;
  // recompute.mean() / with_memory.mean(); refreshes are inside the
  // with-memory steps that triggered them.
  double speedup = 0.0;
};

// Times `steps` identical training steps twice: entity inputs read from the
// memory, and entity inputs encoded from their descriptions every step.
BenchReport run_memory_bench(const TrainConfig& config, const PretrainData& data, int64_t steps);

// CSV: mode,step,seconds,refreshed followed by a summary line.
std::string format_bench(const BenchReport& report);

}  // namespace kgjoint

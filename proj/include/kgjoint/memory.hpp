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

#include <span>
#include <vector>

#include "kgjoint/graph.hpp"
#include "kgjoint/language.hpp"
#include "kgjoint/tensor.hpp"

namespace kgjoint {

struct MemorySchedule {
  size_t initial_interval = 10;
  size_t growth = 2;
  size_t growth_period = 3;
  size_t max_interval = 500;
  double momentum = 0.8;

  void validate() const;
};

// 1 - momentum, snapped to the nearest short decimal when the subtraction
// only introduced rounding noise (so 0.8 gives exactly 0.2).
double momentum_complement(double momentum);

// min(initial * growth^floor(i / period), max).
size_t refresh_interval(const MemorySchedule& schedule, size_t refresh_index);

// Lower-stack encodings of the given entities' descriptions, one row each.
// Records history when gradients are enabled.
Tensor encode_entity_rows(const LanguageModule& lm, const KnowledgeGraph& kg,
                          std::span<const EntityId> ids);

// Lower-stack description encodings for every entity, row-major (N x F).
// Descriptions are clipped to the model's max_len first.
std::vector<double> encode_entities(const LanguageModule& lm, const KnowledgeGraph& kg,
                                    size_t batch_size = 64);

// Relation description encodings (P x F) using the (1, 1) fallback span.
// Built without recording history.
Tensor build_relation_memory(const LanguageModule& lm, const KnowledgeGraph& kg);

// Cached per-entity context embeddings with a growing refresh interval and
// momentum blending.
class EntityMemory {
 public:
  EntityMemory() = default;
  EntityMemory(size_t rows, size_t width, std::vector<double> values, MemorySchedule schedule);

  static EntityMemory build(const LanguageModule& lm, const KnowledgeGraph& kg,
                            const MemorySchedule& schedule);
  // Gaussian rows; the random-memory baseline.
  static EntityMemory random(size_t rows, size_t width, double stddev, uint64_t seed,
                             const MemorySchedule& schedule);

  size_t rows() const { return rows_; }
  size_t width() const { return width_; }
  std::span<const double> values() const { return values_; }
  const MemorySchedule& schedule() const { return schedule_; }

  // Snapshot rows; constants for differentiation.
  Tensor retrieve(std::span<const EntityId> ids) const;

  size_t refresh_count() const { return refresh_count_; }
  size_t steps_since_refresh() const { return steps_since_; }
  // Optimizer steps that must elapse before the next refresh.
  size_t next_interval() const { return refresh_interval(schedule_, refresh_count_); }

  // Counts one optimizer step; refreshes from the current lower stack once
  // the interval has elapsed. Frozen memories never refresh.
  bool maybe_refresh(const LanguageModule& lm, const KnowledgeGraph& kg);
  // E <- m * E + (1 - m) * fresh, then advances the schedule.
  void blend(std::span<const double> fresh);

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // Checkpoint support.
  void restore_state(size_t refresh_count, size_t steps_since);

  bool operator==(const EntityMemory& other) const;

 private:
  size_t rows_ = 0;
  size_t width_ = 0;
  std::vector<double> values_;
  MemorySchedule schedule_;
  size_t refresh_count_ = 0;
  size_t steps_since_ = 0;
  bool frozen_ = false;
};

}  // namespace kgjoint

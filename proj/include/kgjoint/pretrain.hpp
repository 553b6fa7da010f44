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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kgjoint/config.hpp"
#include "kgjoint/corpus.hpp"
#include "kgjoint/graph.hpp"
#include "kgjoint/memory.hpp"
#include "kgjoint/model.hpp"
#include "kgjoint/synth.hpp"

namespace kgjoint {

// Pre-training graph and corpus, with the unseen graph and the held-out
// sequences carved off.
struct PretrainData {
  KnowledgeGraph kg;
  std::vector<AnnotatedSequence> train;
  std::vector<AnnotatedSequence> heldout;
  // Empty (zero entities) when no entities were withheld.
  KnowledgeGraph unseen;
  std::vector<EntityId> pretrain_ids;
  std::vector<EntityId> unseen_ids;
  size_t vocab_size = 0;

  ModelDims dims() const { return {vocab_size, kg.category_count(), kg.relation_count()}; }
};

// Withholds config.unseen_fraction of the entities (split seeded by the
// world seed) and drops every sequence that mentions one of them, then
// sets aside config.heldout_fraction of the remaining sequences.
PretrainData prepare_data(const World& world, const TrainConfig& config);

// Mean cross-entropy of the category head over entity rows.
Tensor category_loss(const Tensor& entity_rows, std::span<const CategoryId> labels, const TaskHeads& heads);
// Relation head over concat(head, tail).
Tensor relation_loss(const Tensor& head_rows, const Tensor& tail_rows,
                     std::span<const RelationId> relations, const TaskHeads& heads);
// Token head over the rows at corrupted positions.
Tensor token_loss(const Tensor& target_rows, std::span<const TokenId> originals, const TaskHeads& heads);
// g(x) = ReLU(x W1) W2.
Tensor entity_projection(const Tensor& mention_rows, const TaskHeads& heads);
// Cross-entropy of inner-product scores; candidates holds `group` rows per
// query with the gold entity first.
Tensor entity_loss(const Tensor& queries, const Tensor& candidates, size_t group);

// Gold first, then its neighbors (shuffled), then uniform random entities;
// distinct, min(count, N) in total.
std::vector<EntityId> entity_candidates(const KnowledgeGraph& kg, EntityId gold, size_t count, Rng& rng);

struct StepReport {
  int64_t step = 0;
  double total = 0.0;
  double category = 0.0;
  double relation = 0.0;
  double token = 0.0;
  double entity = 0.0;
  double lr_lm = 0.0;
  double lr_km = 0.0;
  bool refreshed = false;

  bool operator==(const StepReport&) const = default;
};

std::string metrics_header();
std::string metrics_row(const StepReport& report);

// Runs the joint pre-training loop over data it does not own.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const PretrainData& data);

  const TrainConfig& config() const { return config_; }
  int64_t global_step() const { return step_; }
  JointModel& model() { return *model_; }
  const JointModel& model() const { return *model_; }
  EntityMemory& memory() { return memory_; }
  const EntityMemory& memory() const { return memory_; }

  StepReport step();

  // Restores step counter and memory state (parameters are loaded through
  // model().load_parameters).
  void restore(int64_t step, EntityMemory memory);

  // Fraction of masked mentions in `sequences` whose gold entity outscores
  // every other candidate.
  double masked_entity_hits(std::span<const AnnotatedSequence> sequences, uint64_t seed) const;

  struct Losses {
    Tensor total, category, relation, token, entity;
  };
  // Builds the full step loss without updating anything. `phase` selects
  // 0 = both, 1 = knowledge losses only, 2 = language losses only.
  Losses compute_losses(int64_t step, int phase = 0) const;

 private:
  TrainConfig config_;
  const PretrainData* data_;
  std::unique_ptr<JointModel> model_;
  EntityMemory memory_;
  Tensor relation_memory_;
  int64_t step_ = 0;
};

}  // namespace kgjoint

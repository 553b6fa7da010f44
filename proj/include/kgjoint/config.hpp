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
#include <map>
#include <string>

#include "kgjoint/knowledge.hpp"
#include "kgjoint/language.hpp"
#include "kgjoint/memory.hpp"
#include "kgjoint/optim.hpp"
#include "kgjoint/synth.hpp"

namespace kgjoint {

struct TrainConfig {
  WorldConfig world;

  // Model.
  size_t width = 64;
  size_t lm_heads = 4;
  size_t lower_layers = 2;
  size_t upper_layers = 2;
  size_t max_len = 64;
  size_t gat_layers = 2;
  size_t gat_heads = 4;
  double lm_init_std = 0.1;
  double km_init_std = 0.1;
  RelationMode relation_mode = RelationMode::kNone;

  // Sampling.
  size_t hops = 2;
  size_t fanout = 10;
  size_t walk_length = 2;
  size_t roots = 8;
  size_t text_batch = 16;
  double token_mask_rate = 0.15;
  double mention_mask_rate = 0.15;
  size_t entity_candidates = 64;
  size_t max_relation_triplets = 64;

  // Entity memory.
  MemorySchedule memory;
  bool use_memory = true;

  // Losses.
  bool loss_category = true;
  bool loss_relation = true;
  bool loss_token = true;
  bool loss_entity = true;

  // Optimization.
  double lr_lm = 2e-3;
  double lr_km = 2e-3;
  int64_t warmup_lm = 50;
  int64_t warmup_km = 0;
  AdamWOptions adam;
  bool alternate_phases = false;

  // Pre-training run.
  int64_t steps = 500;
  uint64_t seed = 1;
  int64_t checkpoint_every = 100;
  // Entities withheld from pre-training to form the unseen graph.
  double unseen_fraction = 0.2;
  // Corpus sequences withheld for masked-entity evaluation.
  double heldout_fraction = 0.05;

  // Fine-tuning.
  int64_t finetune_steps = 150;
  double finetune_lr = 1e-3;
  int64_t eval_every = 10;
  double train_fraction = 1.0;
  size_t qa_train = 400;
  size_t qa_test = 200;
  size_t qa_hops = 1;
  size_t fewshot_way = 5;
  size_t fewshot_shot = 1;
  size_t fewshot_test_relations = 5;

  void validate() const;

  LanguageConfig language(size_t vocab_size) const;
  KnowledgeConfig knowledge() const;
  LrSchedule lm_schedule() const;
  LrSchedule km_schedule() const;

  // Flat key=value view covering every field, world.* included.
  std::map<std::string, std::string> to_map() const;
  // Applies one key; unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);

  bool operator==(const TrainConfig& other) const { return to_map() == other.to_map(); }
};

// "desk" (default) or "paper".
TrainConfig preset(const std::string& name);

// Reads key=value lines ('#' starts a comment) on top of `base`.
TrainConfig load_config(const std::string& path, TrainConfig base);
std::string render_config(const TrainConfig& config);

}  // namespace kgjoint

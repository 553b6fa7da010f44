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

#include "kgjoint/config.hpp"
#include "kgjoint/knowledge.hpp"
#include "kgjoint/language.hpp"
#include "kgjoint/optim.hpp"

namespace kgjoint {

// Label-space sizes the model is built for.
struct ModelDims {
  size_t vocab_size = 0;
  size_t categories = 0;
  size_t relations = 0;
  bool operator==(const ModelDims&) const = default;
};

struct TaskHeads {
  Tensor category_w, category_b;  // F -> categories (knowledge group)
  Tensor relation_w, relation_b;  // 2F -> relations (knowledge group)
  Tensor token_w, token_b;        // F -> vocabulary (language group)
  Tensor entity_w1, entity_w2;    // g(x) = ReLU(x W1) W2 (language group)
};

// Language module, knowledge module and pre-training heads over a single
// parameter store.
class JointModel {
 public:
  JointModel(const TrainConfig& config, const ModelDims& dims, uint64_t seed);

  JointModel(const JointModel&) = delete;
  JointModel& operator=(const JointModel&) = delete;
  JointModel(JointModel&&) = default;
  JointModel& operator=(JointModel&&) = default;

  const ModelDims& dims() const { return dims_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const LanguageModule& lm() const { return lm_; }
  const KnowledgeModule& km() const { return km_; }
  const TaskHeads& heads() const { return heads_; }

  // Overwrites every parameter (and optimizer slot) from `other`, which
  // must have identical names and shapes.
  void load_parameters(const ParameterStore& other) { store_.copy_from(other); }

 private:
  ModelDims dims_;
  ParameterStore store_;
  LanguageModule lm_;
  KnowledgeModule km_;
  TaskHeads heads_;
};

// One AdamW update per parameter using its group's rate; a group whose rate
// is zero is left untouched.
void apply_updates(ParameterStore& store, double lr_language, double lr_knowledge,
                   const AdamWOptions& options);

}  // namespace kgjoint

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
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "kgjoint/config.hpp"
#include "kgjoint/graph.hpp"
#include "kgjoint/memory.hpp"
#include "kgjoint/model.hpp"
#include "kgjoint/synth.hpp"

namespace kgjoint {

enum class MemoryInit { kRandom, kLmEncoded };
enum class WeightsInit { kFresh, kPretrained };

struct AblationConfig {
  MemoryInit memory = MemoryInit::kLmEncoded;
  WeightsInit weights = WeightsInit::kPretrained;
  // "fresh+random", "fresh+lm", "pretrained+random", "pretrained+lm".
  std::string id() const;
};

// The four memory x weights combinations.
std::vector<AblationConfig> ablation_grid();

struct EvalRow {
  std::string task;
  std::string config;
  std::string split;
  std::string metric;
  double value = 0.0;
  uint64_t seed = 0;
  bool operator==(const EvalRow&) const = default;
};
using EvalReport = std::vector<EvalRow>;

// CSV with header task,config,split,metric,value,seed.
std::string format_report(const EvalReport& report);

// Standard deviation of the random-memory baseline rows; matches the unit
// scale of the layer-normalized encoder outputs.
inline constexpr double kRandomMemoryStd = 1.0;

// A joint model attached to a target graph whose entity memory is rebuilt
// once (or drawn at random) and then frozen.
class AdaptedModel {
 public:
  // `pretrained` null means fresh weights drawn from `seed`. The graph must
  // outlive the model.
  AdaptedModel(const TrainConfig& config, const ModelDims& dims, const ParameterStore* pretrained,
               const KnowledgeGraph& kg, MemoryInit memory, uint64_t seed);

  const TrainConfig& config() const { return config_; }
  const KnowledgeGraph& graph() const { return *kg_; }
  JointModel& model() { return model_; }
  const JointModel& model() const { return model_; }
  const EntityMemory& memory() const { return memory_; }
  const Tensor& relations() const { return relations_; }

  // Knowledge-module outputs, one row per target. `full` takes every
  // neighbor instead of sampling `fanout` of them.
  Tensor entity_embeddings(std::span<const EntityId> targets, uint64_t seed, bool full) const;

  // Scalar match score from the [CLS] row (two-layer perceptron).
  Tensor pair_head(const Tensor& cls_rows) const;

  // [CLS] rows of Z_LM with each listed mention fused with its entity's
  // knowledge embedding.
  Tensor encode_text(std::span<const AnnotatedSequence> sequences, uint64_t seed) const;

  // One AdamW step on every parameter at the fine-tuning rate; when
  // `knowledge_only` the language group is left untouched.
  void update(bool knowledge_only);

 private:
  TrainConfig config_;
  const KnowledgeGraph* kg_;
  JointModel model_;
  EntityMemory memory_;
  Tensor relations_;
  Tensor pair_w1_, pair_b1_, pair_w2_, pair_b2_;
};

// Entity-level partition of the labelled entities.
struct EntitySplits {
  std::vector<EntityId> train;
  std::vector<EntityId> dev;
  std::vector<EntityId> test;
};

EntitySplits split_entities(const KnowledgeGraph& kg, double train_fraction, double dev_fraction,
                            uint64_t seed);

// The first ceil(fraction * |train|) training entities.
std::vector<EntityId> training_subset(const EntitySplits& splits, double fraction);

// Serves labels by split; test labels stay locked until seal().
class LabelGuard {
 public:
  LabelGuard(const KnowledgeGraph& kg, const EntitySplits& splits);
  // Train or dev entities only.
  CategoryId train_label(EntityId e) const;
  CategoryId test_label(EntityId e) const;
  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }

 private:
  const KnowledgeGraph* kg_;
  std::unordered_set<EntityId> open_;
  std::unordered_set<EntityId> test_;
  bool sealed_ = false;
};

struct ClassificationResult {
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  int64_t best_step = 0;
  size_t train_entities = 0;
};

// Trains the knowledge module and category head on the training subset,
// keeps the parameters with the best dev accuracy (checked at step 0 and
// every eval_every steps) and reports test accuracy with them.
ClassificationResult finetune_entity_classification(AdaptedModel& model, const EntitySplits& splits,
                                                    double fraction, uint64_t seed, LabelGuard& guard);

// Argmax accuracy of the category head over `entities`.
double classification_accuracy(const AdaptedModel& model, std::span<const EntityId> entities,
                               std::span<const CategoryId> labels);

struct QaResult {
  double hits_at_1 = 0.0;
  // 1 / mean candidate-set size over the answered questions.
  double chance = 0.0;
  double mean_candidates = 0.0;
  size_t questions = 0;
  // Questions whose candidate set was empty (not in the denominator).
  size_t skipped = 0;
  // Questions whose candidate set lost every gold answer (scored as misses).
  size_t gold_missing = 0;
};

// Candidate set of a question on the model's graph.
std::vector<EntityId> qa_candidates(const AdaptedModel& model, const Question& question);

// Inner products of the question's [CLS] row with each candidate's memory row.
std::vector<double> qa_scores(const AdaptedModel& model, const Question& question,
                              std::span<const EntityId> candidates);

void finetune_kgqa(AdaptedModel& model, std::span<const Question> questions, int64_t steps, uint64_t seed);
QaResult eval_kgqa(const AdaptedModel& model, std::span<const Question> questions);

struct FewShotResult {
  double accuracy = 0.0;
  size_t queries = 0;
  size_t truncated = 0;
};

// "[CLS] query [EOS] support [EOS]" with both mention lists, truncated from
// the right to max_len (the returned flag reports truncation).
AnnotatedSequence pair_sequence(const AnnotatedSequence& query, const AnnotatedSequence& support,
                                size_t max_len, bool* truncated);

// Match scores of one query against every listed support.
std::vector<double> pair_scores(const AdaptedModel& model, const AnnotatedSequence& query,
                                std::span<const AnnotatedSequence> supports, size_t* truncated = nullptr);

// Episodic training: cross-entropy over the per-class mean pair scores.
void train_pair_head(AdaptedModel& model, const std::vector<RelationInstance>& instances,
                     const std::vector<Episode>& episodes, int64_t steps, uint64_t seed);
FewShotResult eval_fewshot_pair(const AdaptedModel& model, const std::vector<RelationInstance>& instances,
                                const std::vector<Episode>& episodes);

// Entity classification for every grid config, seed and training fraction.
// Rows: task "entity_classification", split dev/test, metric
// "accuracy@<percent>".
EvalReport run_ablation_grid(const TrainConfig& config, const ModelDims& dims, const ParameterStore& pretrained,
                             const KnowledgeGraph& unseen, std::span<const double> fractions,
                             std::span<const uint64_t> seeds);

}  // namespace kgjoint

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

#include "kgjoint/model.hpp"

#include <cmath>

namespace kgjoint {

JointModel::JointModel(const TrainConfig& config, const ModelDims& dims, uint64_t seed) : dims_(dims) {
  if (dims.vocab_size == 0 || dims.categories == 0 || dims.relations == 0) {
    throw Error("model: vocabulary, category and relation counts must be positive");
  }
  Rng rng = make_rng(seed, {0x30de1});
  lm_ = LanguageModule(config.language(dims.vocab_size), store_, rng);
  km_ = KnowledgeModule(config.knowledge(), store_, rng);
  const size_t f = config.width;
  const double sd = config.lm_init_std;
  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(f));
  const auto kg = ParamGroup::kKnowledge;
  const auto lg = ParamGroup::kLanguage;
  heads_.category_w = store_.add_normal("head.category.w", {f, dims.categories}, sd, rng, kg);
  heads_.category_b = store_.add_constant("head.category.b", {dims.categories}, 0.0, kg);
  heads_.relation_w = store_.add_normal("head.relation.w", {2 * f, dims.relations}, sd, rng, kg);
  heads_.relation_b = store_.add_constant("head.relation.b", {dims.relations}, 0.0, kg);
  heads_.token_w = store_.add_normal("head.token.w", {f, dims.vocab_size}, sd, rng, lg);
  heads_.token_b = store_.add_constant("head.token.b", {dims.vocab_size}, 0.0, lg);
  heads_.entity_w1 = store_.add_normal("head.entity.w1", {f, f}, proj_sd, rng, lg);
  heads_.entity_w2 = store_.add_normal("head.entity.w2", {f, f}, proj_sd, rng, lg);
}

void apply_updates(ParameterStore& store, double lr_language, double lr_knowledge,
                   const AdamWOptions& options) {
  for (auto& [name, p] : store.all()) {
    const double lr = p.group == ParamGroup::kLanguage ? lr_language : lr_knowledge;
    if (lr > 0.0) adamw_step(p, lr, options);
  }
}

}  // namespace kgjoint

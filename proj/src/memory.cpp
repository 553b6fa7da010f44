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

#include "kgjoint/memory.hpp"

#include <algorithm>
#include <cmath>

#include "kgjoint/corpus.hpp"
#include "kgjoint/rng.hpp"

namespace kgjoint {

void MemorySchedule::validate() const {
  if (initial_interval == 0 || growth == 0 || growth_period == 0 || max_interval == 0) {
    throw Error("memory schedule: constants must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("memory schedule: momentum must be in [0, 1)");
}

double momentum_complement(double momentum) {
  const double exact = 1.0 - momentum;
  const double decimal = std::round(exact * 1e12) / 1e12;
  return std::abs(decimal - exact) <= 1e-15 ? decimal : exact;
}

size_t refresh_interval(const MemorySchedule& s, size_t refresh_index) {
  size_t interval = s.initial_interval;
  for (size_t p = refresh_index / s.growth_period; p > 0; --p) {
    if (interval >= s.max_interval) break;
    interval *= s.growth;
  }
  return std::min(interval, s.max_interval);
}

Tensor encode_entity_rows(const LanguageModule& lm, const KnowledgeGraph& kg,
                          std::span<const EntityId> ids) {
  std::vector<TokenSeq> desc;
  std::vector<Span> spans;
  for (EntityId e : ids) {
    if (e >= kg.entity_count()) throw Error("encode_entity_rows: entity id out of range");
    const Span& m = kg.description_mention(e);
    std::vector<Mention> self{{e, m.start, m.end}};
    DescriptionWindow w = description_window(kg.description(e), self, lm.config().max_len);
    desc.push_back(std::move(w.tokens));
    spans.push_back(w.mention);
  }
  return lm.encode_descriptions(desc, spans);
}

std::vector<double> encode_entities(const LanguageModule& lm, const KnowledgeGraph& kg,
                                    size_t batch_size) {
  if (batch_size == 0) throw Error("encode_entities: batch size must be positive");
  const size_t n = kg.entity_count();
  std::vector<double> out;
  out.reserve(n * lm.config().width);
  NoGradGuard no_grad;
  std::vector<EntityId> ids;
  for (size_t begin = 0; begin < n; begin += batch_size) {
    ids.clear();
    for (EntityId e = begin; e < std::min(n, begin + batch_size); ++e) ids.push_back(e);
    Tensor rows = encode_entity_rows(lm, kg, ids);
    out.insert(out.end(), rows.values().begin(), rows.values().end());
  }
  return out;
}

Tensor build_relation_memory(const LanguageModule& lm, const KnowledgeGraph& kg) {
  NoGradGuard no_grad;
  std::vector<TokenSeq> desc;
  std::vector<Span> spans;
  for (RelationId r = 0; r < kg.relation_count(); ++r) {
    DescriptionWindow w = description_window(kg.relation_description(r), {}, lm.config().max_len);
    desc.push_back(std::move(w.tokens));
    spans.push_back(w.mention);
  }
  if (desc.empty()) throw Error("build_relation_memory: graph has no relations");
  return lm.encode_descriptions(desc, spans).detach();
}

EntityMemory::EntityMemory(size_t rows, size_t width, std::vector<double> values, MemorySchedule schedule)
    : rows_(rows), width_(width), values_(std::move(values)), schedule_(schedule) {
  schedule_.validate();
  if (rows_ == 0 || width_ == 0 || values_.size() != rows_ * width_) {
    throw Error("entity memory: values do not form a " + std::to_string(rows_) + " x " +
                std::to_string(width_) + " matrix");
  }
}

EntityMemory EntityMemory::build(const LanguageModule& lm, const KnowledgeGraph& kg,
                                 const MemorySchedule& schedule) {
  if (kg.entity_count() == 0) throw Error("entity memory: graph has no entities");
  return EntityMemory(kg.entity_count(), lm.config().width, encode_entities(lm, kg), schedule);
}

EntityMemory EntityMemory::random(size_t rows, size_t width, double stddev, uint64_t seed,
                                  const MemorySchedule& schedule) {
  Rng rng = make_rng(seed, {0x3e3});
  std::vector<double> values(rows * width);
  for (double& v : values) v = stddev * standard_normal(rng);
  return EntityMemory(rows, width, std::move(values), schedule);
}

Tensor EntityMemory::retrieve(std::span<const EntityId> ids) const {
  if (ids.empty()) throw Error("entity memory: empty retrieval");
  std::vector<double> out(ids.size() * width_);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows_) {
      throw Error("entity memory: id " + std::to_string(ids[i]) + " out of range [0, " +
                  std::to_string(rows_) + ")");
    }
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(ids[i] * width_), width_,
                out.begin() + static_cast<std::ptrdiff_t>(i * width_));
  }
  return Tensor::from({ids.size(), width_}, std::move(out));
}

bool EntityMemory::maybe_refresh(const LanguageModule& lm, const KnowledgeGraph& kg) {
  if (frozen_) return false;
  if (kg.entity_count() != rows_) throw Error("entity memory: graph size changed");
  ++steps_since_;
  if (steps_since_ < next_interval()) return false;
  blend(encode_entities(lm, kg));
  return true;
}

void EntityMemory::blend(std::span<const double> fresh) {
  if (fresh.size() != values_.size()) throw Error("entity memory: refresh shape mismatch");
  const double m = schedule_.momentum;
  const double keep_new = momentum_complement(m);
  // Build the blended matrix first so readers only ever see a whole one.
  std::vector<double> next(values_.size());
  for (size_t i = 0; i < next.size(); ++i) next[i] = m * values_[i] + keep_new * fresh[i];
  values_.swap(next);
  ++refresh_count_;
  steps_since_ = 0;
}

void EntityMemory::restore_state(size_t refresh_count, size_t steps_since) {
  refresh_count_ = refresh_count;
  steps_since_ = steps_since;
}

bool EntityMemory::operator==(const EntityMemory& other) const {
  return rows_ == other.rows_ && width_ == other.width_ && values_ == other.values_ &&
         refresh_count_ == other.refresh_count_ && steps_since_ == other.steps_since_;
}

}  // namespace kgjoint

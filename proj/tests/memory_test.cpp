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

#include <gtest/gtest.h>

#include <cmath>

#include "kgjoint/memory.hpp"

namespace kgjoint {
namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Fixture {
  ParameterStore store;
  LanguageModule lm;
  KnowledgeGraph kg;
  Fixture() {
    LanguageConfig c;
    c.vocab_size = 40;
    c.width = 8;
    c.heads = 2;
    c.lower_layers = 1;
    c.upper_layers = 1;
    c.max_len = 12;
    c.init_std = 0.3;
    Rng rng = make_rng(3);
    lm = LanguageModule(c, store, rng);
    GraphParts p;
    p.entity_count = 7;
    p.relation_count = 2;
    p.triplets = {{0, 0, 1}, {1, 1, 2}, {3, 0, 4}};
    for (size_t e = 0; e < p.entity_count; ++e) {
      p.categories.push_back(std::nullopt);
      TokenSeq desc{kClsToken};
      for (size_t k = 0; k < 3 + e; ++k) desc.push_back(kSpecialTokenCount + (3 * e + k) % 30);
      desc.push_back(kEosToken);
      p.entity_descriptions.push_back(desc);
      p.description_mentions.push_back(e % 2 ? Span{2, 3} : Span{1, 1});
    }
    p.relation_descriptions = {{kClsToken, 20, kEosToken}, {kClsToken, 21, 22, kEosToken}};
    kg = KnowledgeGraph(std::move(p));
  }
};

TEST(MemoryTest, IntervalScheduleDoublesEveryThreeRefreshesUpToCap) {
  MemorySchedule s;
  const std::vector<size_t> expected{10, 10, 10, 20, 20, 20, 40, 40, 40, 80, 80, 80, 160, 160, 160,
                                     320, 320, 320, 500, 500, 500, 500};
  for (size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(refresh_interval(s, i), expected[i]) << i;
  EXPECT_EQ(refresh_interval(s, 1000), 500u);
}

TEST(MemoryTest, MomentumComplementIsExactForShortDecimals) {
  EXPECT_EQ(momentum_complement(0.8), 0.2);
  EXPECT_EQ(momentum_complement(0.9), 0.1);
  EXPECT_EQ(momentum_complement(0.0), 1.0);
  EXPECT_EQ(momentum_complement(0.5), 0.5);
}

TEST(MemoryTest, BlendMatchesFixtureBitwise) {
  const std::vector<double> e{1.0, -2.0, 0.5, 3.25, 0.1, 0.2, 0.3, 0.4, -7.0, 11.0, 0.0, 2.5};
  const std::vector<double> fresh{0.0, 4.0, -1.5, 1.0, 0.7, -0.2, 9.0, 0.4, 3.0, -1.0, 6.0, 2.5};
  EntityMemory mem(3, 4, e, MemorySchedule{});
  mem.blend(fresh);
  ASSERT_EQ(mem.values().size(), 12u);
  for (size_t i = 0; i < 12; ++i) EXPECT_EQ(mem.values()[i], 0.8 * e[i] + 0.2 * fresh[i]) << i;
  EXPECT_EQ(mem.refresh_count(), 1u);
  EXPECT_EQ(mem.steps_since_refresh(), 0u);
  EXPECT_THROW(mem.blend(std::vector<double>(11, 0.0)), Error);
}

TEST(MemoryTest, RefreshesContractTowardStationaryTarget) {
  Rng rng = make_rng(9);
  std::vector<double> e(5 * 6), target(5 * 6);
  for (double& v : e) v = standard_normal(rng);
  for (double& v : target) v = standard_normal(rng);
  EntityMemory mem(5, 6, e, MemorySchedule{});
  double previous = distance(mem.values(), target);
  for (int k = 0; k < 5; ++k) {
    const std::vector<double> before(mem.values().begin(), mem.values().end());
    mem.blend(target);
    const double now = distance(mem.values(), target);
    EXPECT_NEAR(now / previous, 0.8, 1e-12);
    for (size_t i = 0; i < before.size(); ++i) {
      EXPECT_GE(mem.values()[i], std::min(before[i], target[i]));
      EXPECT_LE(mem.values()[i], std::max(before[i], target[i]));
    }
    previous = now;
  }
}

TEST(MemoryTest, StationaryLanguageModuleContractsDistance) {
  Fixture fx;
  const std::vector<double> encoded = encode_entities(fx.lm, fx.kg);
  EntityMemory mem = EntityMemory::random(fx.kg.entity_count(), 8, 1.0, 4, MemorySchedule{});
  double previous = distance(mem.values(), encoded);
  size_t refreshes = 0;
  for (int step = 0; refreshes < 5; ++step) {
    if (mem.maybe_refresh(fx.lm, fx.kg)) {
      ++refreshes;
      const double now = distance(mem.values(), encoded);
      EXPECT_NEAR(now / previous, 0.8, 1e-12);
      previous = now;
    }
  }
}

TEST(MemoryTest, RefreshStepsArePrefixSumsOfIntervals) {
  Fixture fx;
  MemorySchedule s;
  EntityMemory mem = EntityMemory::build(fx.lm, fx.kg, s);
  std::vector<size_t> expected;
  size_t total = 0;
  for (size_t i = 0; total + refresh_interval(s, i) <= 400; ++i) expected.push_back(total += refresh_interval(s, i));
  std::vector<size_t> refreshed_at;
  for (size_t step = 1; step <= 400; ++step) {
    if (mem.maybe_refresh(fx.lm, fx.kg)) refreshed_at.push_back(step);
  }
  EXPECT_EQ(refreshed_at, expected);
  EXPECT_EQ(refreshed_at.front(), 10u);
}

TEST(MemoryTest, BuildEqualsEncodingAndIsReproducible) {
  Fixture fx;
  EntityMemory mem = EntityMemory::build(fx.lm, fx.kg, MemorySchedule{});
  EXPECT_EQ(mem.rows(), fx.kg.entity_count());
  EXPECT_EQ(mem.width(), 8u);
  std::vector<EntityId> ids(fx.kg.entity_count());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  Tensor direct = encode_entity_rows(fx.lm, fx.kg, ids);
  Tensor stored = mem.retrieve(ids);
  for (size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(stored.at(i), direct.at(i));
  std::vector<TokenSeq> descs;
  std::vector<Span> spans;
  for (EntityId e : ids) {
    descs.push_back(fx.kg.description(e));
    spans.push_back(fx.kg.description_mention(e));
  }
  Tensor by_lm = fx.lm.encode_descriptions(descs, spans);
  for (size_t i = 0; i < by_lm.size(); ++i) EXPECT_EQ(stored.at(i), by_lm.at(i));
  EXPECT_TRUE(EntityMemory::build(fx.lm, fx.kg, MemorySchedule{}) == mem);
  EXPECT_FALSE(stored.requires_grad());
}

TEST(MemoryTest, FrozenMemoryNeverRefreshes) {
  Fixture fx;
  EntityMemory mem = EntityMemory::random(fx.kg.entity_count(), 8, 1.0, 5, MemorySchedule{});
  const std::vector<double> before(mem.values().begin(), mem.values().end());
  mem.freeze();
  for (int step = 0; step < 50; ++step) EXPECT_FALSE(mem.maybe_refresh(fx.lm, fx.kg));
  EXPECT_TRUE(std::equal(before.begin(), before.end(), mem.values().begin()));
  EXPECT_EQ(mem.refresh_count(), 0u);
}

TEST(MemoryTest, RestoredStateContinuesSchedule) {
  Fixture fx;
  EntityMemory a = EntityMemory::build(fx.lm, fx.kg, MemorySchedule{});
  for (int step = 0; step < 37; ++step) a.maybe_refresh(fx.lm, fx.kg);
  EntityMemory b(a.rows(), a.width(), std::vector<double>(a.values().begin(), a.values().end()), a.schedule());
  b.restore_state(a.refresh_count(), a.steps_since_refresh());
  EXPECT_TRUE(a == b);
  for (int step = 0; step < 60; ++step) {
    EXPECT_EQ(a.maybe_refresh(fx.lm, fx.kg), b.maybe_refresh(fx.lm, fx.kg));
  }
  EXPECT_TRUE(a == b);
}

TEST(MemoryTest, RelationMemoryUsesFallbackSpan) {
  Fixture fx;
  Tensor rel = build_relation_memory(fx.lm, fx.kg);
  ASSERT_EQ(rel.rows(), 2u);
  std::vector<TokenSeq> descs{fx.kg.relation_description(0), fx.kg.relation_description(1)};
  std::vector<Span> spans{{1, 1}, {1, 1}};
  Tensor expected = fx.lm.encode_descriptions(descs, spans);
  for (size_t i = 0; i < rel.size(); ++i) EXPECT_EQ(rel.at(i), expected.at(i));
}

}  // namespace
}  // namespace kgjoint

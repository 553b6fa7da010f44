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

#include <filesystem>
#include <fstream>

#include "kgjoint/config.hpp"

namespace kgjoint {
namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

TEST(ConfigTest, DefaultsValidate) { EXPECT_NO_THROW(TrainConfig{}.validate()); }

TEST(ConfigTest, UnknownKeysAndBadValuesAreRejected) {
  TrainConfig c;
  EXPECT_THROW(c.set("model.widht", "8"), Error);
  EXPECT_THROW(c.set("model.width", "eight"), Error);
  EXPECT_THROW(c.set("model.width", "-3"), Error);
  EXPECT_THROW(c.set("loss.token", "maybe"), Error);
  EXPECT_THROW(c.set("model.relation_mode", "sideways"), Error);
  c.set("model.width", "32");
  EXPECT_EQ(c.width, 32u);
  c.set("loss.token", "false");
  EXPECT_FALSE(c.loss_token);
  c.set("model.relation_mode", "context");
  EXPECT_EQ(c.relation_mode, RelationMode::kContext);
}

TEST(ConfigTest, RenderLoadRoundTrip) {
  TrainConfig c;
  c.lr_lm = 3.3e-4;
  c.lr_km = 0.1 + 0.2;
  c.memory.momentum = 0.7;
  c.world.homophily = 0.123456789012345;
  c.loss_relation = false;
  c.relation_mode = RelationMode::kContext;
  c.steps = 777;
  c.seed = 123456789012345ULL;
  const std::string path = write_temp("kgjoint_config_roundtrip.txt", render_config(c));
  TrainConfig back = load_config(path, TrainConfig{});
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.lr_km, c.lr_km);
  EXPECT_EQ(back.world.homophily, c.world.homophily);
  std::filesystem::remove(path);
}

TEST(ConfigTest, LoadConfigAppliesOverridesAndReportsErrors) {
  const std::string good = write_temp("kgjoint_config_good.txt",
                                      "# comment\nmodel.width = 32\n\ntrain.steps=80  # trailing\n");
  TrainConfig c = load_config(good, TrainConfig{});
  EXPECT_EQ(c.width, 32u);
  EXPECT_EQ(c.steps, 80);
  EXPECT_EQ(c.lm_heads, TrainConfig{}.lm_heads);

  const std::string unknown = write_temp("kgjoint_config_unknown.txt", "model.width=32\nmodel.depth=3\n");
  try {
    load_config(unknown, TrainConfig{});
    FAIL() << "unknown key accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  const std::string no_eq = write_temp("kgjoint_config_noeq.txt", "model.width 32\n");
  EXPECT_THROW(load_config(no_eq, TrainConfig{}), Error);
  EXPECT_THROW(load_config("/nonexistent/kgjoint.cfg", TrainConfig{}), Error);
  for (const auto& p : {good, unknown, no_eq}) std::filesystem::remove(p);
}

TEST(ConfigTest, ValidationCatchesInconsistentSettings) {
  TrainConfig c;
  c.hops = 3;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.warmup_lm = c.steps + 1;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.width = 66;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.memory.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.world.max_seq_len = c.max_len + 1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(ConfigTest, PaperPresetMatchesPublishedSettings) {
  TrainConfig p = preset("paper");
  EXPECT_EQ(p.width, 768u);
  EXPECT_EQ(p.gat_heads, 8u);
  EXPECT_EQ(p.adam.beta1, 0.9);
  EXPECT_EQ(p.adam.beta2, 0.999);
  EXPECT_EQ(p.adam.eps, 1e-8);
  EXPECT_EQ(p.adam.weight_decay, 0.01);
  EXPECT_EQ(p.lr_lm, 1e-5);
  EXPECT_EQ(p.lr_km, 1e-4);
  EXPECT_EQ(p.warmup_lm, 3000);
  EXPECT_EQ(p.warmup_km, 0);
  EXPECT_EQ(p.memory.initial_interval, 10u);
  EXPECT_EQ(p.memory.growth, 2u);
  EXPECT_EQ(p.memory.growth_period, 3u);
  EXPECT_EQ(p.memory.max_interval, 500u);
  EXPECT_EQ(p.memory.momentum, 0.8);
  EXPECT_EQ(p.token_mask_rate, 0.15);
  EXPECT_EQ(p.mention_mask_rate, 0.15);
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(preset("desk") == TrainConfig{});
  EXPECT_THROW(preset("laptop"), Error);
}

TEST(ConfigTest, DerivedModuleConfigs) {
  TrainConfig c;
  LanguageConfig l = c.language(123);
  EXPECT_EQ(l.vocab_size, 123u);
  EXPECT_EQ(l.width, c.width);
  EXPECT_EQ(l.total_layers(), c.lower_layers + c.upper_layers);
  KnowledgeConfig k = c.knowledge();
  EXPECT_EQ(k.layers, c.gat_layers);
  EXPECT_EQ(k.heads, c.gat_heads);
  EXPECT_EQ(c.lm_schedule().peak, c.lr_lm);
}

}  // namespace
}  // namespace kgjoint

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
#include <sstream>

#include "kgjoint/checkpoint.hpp"
#include "kgjoint/gradcheck.hpp"
#include "kgjoint/pretrain.hpp"

namespace kgjoint {
namespace {

TrainConfig small_config() {
  TrainConfig c = grad_check_config();
  c.use_memory = true;
  c.unseen_fraction = 0.2;
  c.heldout_fraction = 0.1;
  c.steps = 40;
  c.lr_lm = 3e-3;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
}

void expect_same_store(const ParameterStore& a, const ParameterStore& b) {
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, p] : a.all()) {
    ASSERT_TRUE(b.contains(name)) << name;
    const auto& q = b.all().at(name);
    EXPECT_EQ(p.group, q.group) << name;
    EXPECT_EQ(p.tensor.shape(), q.tensor.shape()) << name;
    EXPECT_TRUE(std::equal(p.tensor.values().begin(), p.tensor.values().end(), q.tensor.values().begin()))
        << name;
    EXPECT_EQ(p.first_moment, q.first_moment) << name;
    EXPECT_EQ(p.second_moment, q.second_moment) << name;
    EXPECT_EQ(p.step, q.step) << name;
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = small_config();
    world_ = generate_world(config_.world);
    data_ = prepare_data(world_, config_);
  }
  TrainConfig config_;
  World world_;
  PretrainData data_;
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  Trainer t(config_, data_);
  for (int i = 0; i < 12; ++i) t.step();
  const std::string path = temp_path("kgjoint_ckpt_roundtrip.ckpt");
  save_checkpoint(path, config_, data_.dims(), t.global_step(), t.model().store(), &t.memory());
  Checkpoint ck = load_checkpoint(path);
  EXPECT_TRUE(ck.config == config_);
  EXPECT_EQ(ck.dims.vocab_size, data_.dims().vocab_size);
  EXPECT_EQ(ck.dims.categories, data_.dims().categories);
  EXPECT_EQ(ck.dims.relations, data_.dims().relations);
  EXPECT_EQ(ck.step, 12);
  expect_same_store(t.model().store(), ck.params);
  ASSERT_TRUE(ck.memory.has_value());
  EXPECT_TRUE(*ck.memory == t.memory());
  EXPECT_EQ(ck.memory->schedule().momentum, t.memory().schedule().momentum);

  const std::string again = temp_path("kgjoint_ckpt_roundtrip2.ckpt");
  save_checkpoint(again, ck.config, ck.dims, ck.step, ck.params, &*ck.memory);
  EXPECT_EQ(slurp(path), slurp(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_F(CheckpointTest, ResumeReproducesUninterruptedRun) {
  Trainer straight(config_, data_);
  std::vector<StepReport> expected;
  for (int i = 0; i < 24; ++i) expected.push_back(straight.step());

  Trainer first(config_, data_);
  std::vector<StepReport> got;
  for (int i = 0; i < 13; ++i) got.push_back(first.step());
  const std::string path = temp_path("kgjoint_ckpt_resume.ckpt");
  save_checkpoint(path, config_, data_.dims(), first.global_step(), first.model().store(), &first.memory());
  Checkpoint ck = load_checkpoint(path);
  Trainer second(ck.config, data_);
  second.model().load_parameters(ck.params);
  second.restore(ck.step, *ck.memory);
  for (int i = 13; i < 24; ++i) got.push_back(second.step());
  ASSERT_EQ(got.size(), expected.size());
  for (size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], expected[i]) << "step " << i;
  expect_same_store(straight.model().store(), second.model().store());
  EXPECT_TRUE(straight.memory() == second.memory());
  std::filesystem::remove(path);
}

TEST_F(CheckpointTest, RefusesCorruptFiles) {
  Trainer t(config_, data_);
  t.step();
  const std::string path = temp_path("kgjoint_ckpt_corrupt.ckpt");
  save_checkpoint(path, config_, data_.dims(), t.global_step(), t.model().store(), &t.memory());
  const std::string bytes = slurp(path);

  std::string wrong_version = bytes;
  wrong_version[8] = static_cast<char>(kCheckpointVersion + 1);
  dump(path, wrong_version);
  try {
    load_checkpoint(path);
    FAIL() << "version mismatch accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  dump(path, bytes.substr(0, bytes.size() / 2));
  try {
    load_checkpoint(path);
    FAIL() << "truncated file accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }

  dump(path, bytes + "x");
  EXPECT_THROW(load_checkpoint(path), Error);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  dump(path, bad_magic);
  EXPECT_THROW(load_checkpoint(path), Error);

  EXPECT_THROW(load_checkpoint(temp_path("kgjoint_ckpt_missing.ckpt")), Error);
  std::filesystem::remove(path);
}

TEST_F(CheckpointTest, MemoryIsOptional) {
  Trainer t(config_, data_);
  const std::string path = temp_path("kgjoint_ckpt_nomem.ckpt");
  save_checkpoint(path, config_, data_.dims(), 0, t.model().store(), nullptr);
  Checkpoint ck = load_checkpoint(path);
  EXPECT_FALSE(ck.memory.has_value());
  expect_same_store(t.model().store(), ck.params);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace kgjoint

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

#include <set>

#include "kgjoint/gradcheck.hpp"
#include "kgjoint/pretrain.hpp"

namespace kgjoint {
namespace {

TEST(GradCheckTest, AnalyticGradientsMatchFiniteDifferences) {
  GradCheckReport report = run_grad_check(grad_check_config());
  EXPECT_TRUE(report.passed) << format_grad_check(report);
  EXPECT_LT(report.max_rel_error, 1e-4);
  EXPECT_EQ(std::set<std::string>(report.active_losses.begin(), report.active_losses.end()),
            (std::set<std::string>{"category", "relation", "token", "entity"}));
}

TEST(GradCheckTest, CoversEveryParameterOfBothGroups) {
  const TrainConfig config = grad_check_config();
  World world = generate_world(config.world);
  PretrainData data = prepare_data(world, config);
  JointModel model(config, data.dims(), config.seed);
  GradCheckReport report = run_grad_check(config);
  std::set<std::string> checked;
  bool language = false, knowledge = false;
  for (const ParameterCheck& p : report.parameters) {
    EXPECT_GT(p.checked, 0u) << p.name;
    checked.insert(p.name);
    language = language || p.group == ParamGroup::kLanguage;
    knowledge = knowledge || p.group == ParamGroup::kKnowledge;
  }
  for (const auto& [name, p] : model.store().all()) EXPECT_TRUE(checked.count(name)) << name;
  EXPECT_TRUE(language);
  EXPECT_TRUE(knowledge);
}

TEST(GradCheckTest, DetectsCorruptedGradient) {
  GradCheckOptions options;
  options.corrupt = [](const std::string& name, std::span<double> grad) {
    if (name == "km.gat0.w") {
      for (double& g : grad) g *= 1.01;
    }
  };
  GradCheckReport report = run_grad_check(grad_check_config(), options);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 1e-3);
  const std::string text = format_grad_check(report);
  EXPECT_NE(text.find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace kgjoint

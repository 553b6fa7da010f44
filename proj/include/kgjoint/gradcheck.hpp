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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kgjoint/config.hpp"
#include "kgjoint/optim.hpp"

namespace kgjoint {

// Tiny end-to-end configuration: F=8, one LM layer per stage, one two-head
// GAT layer, relation context on, on-the-fly description encoding.
TrainConfig grad_check_config();

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error, so entries whose gradient is
  // numerically zero are judged on absolute error.
  double floor = 1e-5;
  double tolerance = 1e-4;
  // Coordinates probed per parameter tensor (all of them when smaller).
  size_t samples_per_parameter = 16;
  // Test hook: runs on each analytic gradient before comparison.
  std::function<void(const std::string& name, std::span<double> grad)> corrupt;
};

struct ParameterCheck {
  std::string name;
  ParamGroup group = ParamGroup::kLanguage;
  size_t checked = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  // Loss components that were non-zero at the probed step.
  std::vector<std::string> active_losses;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Compares backprop gradients of the total pre-training loss with central
// finite differences.
GradCheckReport run_grad_check(const TrainConfig& config, const GradCheckOptions& options = {});

std::string format_grad_check(const GradCheckReport& report);

}  // namespace kgjoint

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
#include <vector>

#include "kgjoint/rng.hpp"
#include "kgjoint/tensor.hpp"

namespace kgjoint {

// Learning-rate group. Task heads join the group of the module whose
// outputs they consume.
enum class ParamGroup { kLanguage, kKnowledge };

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kLanguage;
  Tensor tensor;
  // AdamW slots.
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int64_t step = 0;
};

// Named parameters, iterated in name order so updates are reproducible.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Tensor add(const std::string& name, Shape shape, std::vector<double> values, ParamGroup group);
  // Gaussian init with the given standard deviation.
  Tensor add_normal(const std::string& name, Shape shape, double stddev, Rng& rng, ParamGroup group);
  Tensor add_constant(const std::string& name, Shape shape, double value, ParamGroup group);

  bool contains(const std::string& name) const { return params_.contains(name); }
  Tensor get(const std::string& name) const;
  Parameter& parameter(const std::string& name);

  std::map<std::string, Parameter>& all() { return params_; }
  const std::map<std::string, Parameter>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  size_t scalar_count() const;

  void zero_grad();
  // Deep copy of values and optimizer slots into fresh tensors.
  ParameterStore clone() const;
  // Overwrites values (and slots) from a store with identical names/shapes.
  void copy_from(const ParameterStore& other);

 private:
  std::map<std::string, Parameter> params_;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay Adam update from the parameter's current
// gradient. Throws on a nonpositive rate or a non-finite gradient.
void adamw_step(Parameter& param, double lr, const AdamWOptions& options);

struct LrSchedule {
  double peak = 1e-3;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
};

void validate(const LrSchedule& schedule);

// Linear ramp 0 -> peak over the warmup, then linear decay to 0 at
// total_steps. Zero warmup starts at the peak.
double lr_at_step(const LrSchedule& schedule, int64_t step);

}  // namespace kgjoint

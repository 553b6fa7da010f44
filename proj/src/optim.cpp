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

#include "kgjoint/optim.hpp"

#include <algorithm>
#include <cmath>

namespace kgjoint {

Tensor ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values,
                           ParamGroup group) {
  if (params_.contains(name)) throw Error("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.group = group;
  p.tensor = Tensor::from(std::move(shape), std::move(values), true);
  p.first_moment.assign(p.tensor.size(), 0.0);
  p.second_moment.assign(p.tensor.size(), 0.0);
  Tensor handle = p.tensor;
  params_.emplace(name, std::move(p));
  return handle;
}

Tensor ParameterStore::add_normal(const std::string& name, Shape shape, double stddev, Rng& rng,
                                  ParamGroup group) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = stddev * standard_normal(rng);
  return add(name, std::move(shape), std::move(values), group);
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, double value,
                                    ParamGroup group) {
  const size_t n = shape_size(shape);
  return add(name, std::move(shape), std::vector<double>(n, value), group);
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.tensor;
}

Parameter& ParameterStore::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

size_t ParameterStore::scalar_count() const {
  size_t n = 0;
  for (const auto& [_, p] : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.tensor.zero_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, p] : params_) {
    Parameter q = p;
    q.tensor = Tensor::from(p.tensor.shape(),
                            std::vector<double>(p.tensor.values().begin(), p.tensor.values().end()),
                            true);
    out.params_.emplace(name, std::move(q));
  }
  return out;
}

void ParameterStore::copy_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) throw Error("copy_from: parameter sets differ");
  for (auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.tensor.shape() != p.tensor.shape()) {
      throw Error("copy_from: parameter mismatch at " + name);
    }
    auto src = it->second.tensor.values();
    std::copy(src.begin(), src.end(), p.tensor.mutable_values().begin());
    p.first_moment = it->second.first_moment;
    p.second_moment = it->second.second_moment;
    p.step = it->second.step;
  }
}

void adamw_step(Parameter& param, double lr, const AdamWOptions& options) {
  if (!(lr > 0.0)) throw Error("adamw_step: learning rate must be positive");
  auto grad = param.tensor.grad();
  auto value = param.tensor.mutable_values();
  for (double g : grad) {
    if (!std::isfinite(g)) throw Error("adamw_step: non-finite gradient in " + param.name);
  }
  param.step += 1;
  const double t = static_cast<double>(param.step);
  const double bias1 = 1.0 - std::pow(options.beta1, t);
  const double bias2 = 1.0 - std::pow(options.beta2, t);
  for (size_t i = 0; i < value.size(); ++i) {
    double& m = param.first_moment[i];
    double& v = param.second_moment[i];
    m = options.beta1 * m + (1.0 - options.beta1) * grad[i];
    v = options.beta2 * v + (1.0 - options.beta2) * grad[i] * grad[i];
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    value[i] -= lr * options.weight_decay * value[i];
    value[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
  }
}

void validate(const LrSchedule& schedule) {
  if (!(schedule.peak > 0.0)) throw Error("learning-rate peak must be positive");
  if (schedule.warmup_steps < 0 || schedule.total_steps <= 0 ||
      schedule.warmup_steps > schedule.total_steps) {
    throw Error("learning-rate schedule needs 0 <= warmup <= total, total > 0");
  }
}

double lr_at_step(const LrSchedule& schedule, int64_t step) {
  if (step < 0) throw Error("lr_at_step: negative step");
  if (step >= schedule.total_steps) return 0.0;
  if (step < schedule.warmup_steps) {
    return schedule.peak * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  }
  const double remaining = static_cast<double>(schedule.total_steps - step);
  const double span = static_cast<double>(schedule.total_steps - schedule.warmup_steps);
  return schedule.peak * remaining / span;
}

}  // namespace kgjoint

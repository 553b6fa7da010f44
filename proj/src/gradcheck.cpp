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

#include "kgjoint/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kgjoint/pretrain.hpp"
#include "text_util.hpp"

namespace kgjoint {

TrainConfig grad_check_config() {
  TrainConfig c;
  c.world.entities = 48;
  c.world.relations = 3;
  c.world.categories = 8;
  c.world.vocab_size = 90;
  c.world.sequences = 80;
  c.world.max_seq_len = 16;
  c.world.mean_degree = 3.0;
  c.world.category_phrase_tokens = 3;
  c.world.relation_phrase_tokens = 2;
  c.world.name_pool = 10;
  c.world.description_length = 8;
  c.world.seed = 5;
  c.width = 8;
  c.lm_heads = 2;
  c.lower_layers = 1;
  c.upper_layers = 1;
  c.max_len = 16;
  c.gat_layers = 1;
  c.gat_heads = 2;
  c.hops = 1;
  c.fanout = 4;
  c.roots = 4;
  c.text_batch = 4;
  c.entity_candidates = 6;
  c.max_relation_triplets = 8;
  c.relation_mode = RelationMode::kContext;
  c.use_memory = false;
  c.unseen_fraction = 0.0;
  c.heldout_fraction = 0.0;
  c.lm_init_std = 0.3;
  c.km_init_std = 0.3;
  c.steps = 10;
  c.warmup_lm = 0;
  return c;
}

GradCheckReport run_grad_check(const TrainConfig& config, const GradCheckOptions& options) {
  config.validate();
  const World world = generate_world(config.world);
  const PretrainData data = prepare_data(world, config);
  Trainer trainer(config, data);
  ParameterStore& store = trainer.model().store();
  const int64_t step = 0;

  GradCheckReport report;
  {
    store.zero_grad();
    Trainer::Losses losses = trainer.compute_losses(step);
    const std::pair<const char*, double> parts[] = {{"category", losses.category.item()},
                                                    {"relation", losses.relation.item()},
                                                    {"token", losses.token.item()},
                                                    {"entity", losses.entity.item()}};
    for (const auto& [name, value] : parts) {
      if (value != 0.0) report.active_losses.emplace_back(name);
    }
    losses.total.backward();
  }
  auto loss_at = [&] { return trainer.compute_losses(step).total.item(); };

  Rng rng = make_rng(config.seed, {0x9c});
  for (auto& [name, p] : store.all()) {
    std::vector<double> analytic(p.tensor.size(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    if (options.corrupt) options.corrupt(name, analytic);

    // Probe the largest-gradient coordinate plus random ones.
    std::vector<size_t> coords;
    const size_t n = analytic.size();
    if (n <= options.samples_per_parameter) {
      for (size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      size_t top = 0;
      for (size_t i = 1; i < n; ++i) {
        if (std::abs(analytic[i]) > std::abs(analytic[top])) top = i;
      }
      coords.push_back(top);
      for (size_t i : sample_without_replacement(n, options.samples_per_parameter, rng)) {
        if (coords.size() == options.samples_per_parameter) break;
        if (i != top) coords.push_back(i);
      }
    }

    ParameterCheck check;
    check.name = name;
    check.group = p.group;
    std::span<double> values = p.tensor.mutable_values();
    for (size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = loss_at();
      values[i] = saved - options.step;
      const double minus = loss_at();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, rel);
      ++check.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.parameters.push_back(std::move(check));
  }
  report.passed = report.max_rel_error <= options.tolerance && report.active_losses.size() == 4;
  return report;
}

std::string format_grad_check(const GradCheckReport& report) {
  std::ostringstream out;
  out << "parameter,group,checked,max_abs_error,max_rel_error\n";
  for (const ParameterCheck& p : report.parameters) {
    out << p.name << ',' << (p.group == ParamGroup::kLanguage ? "lm" : "km") << ',' << p.checked << ','
        << internal::format_double(p.max_abs_error) << ',' << internal::format_double(p.max_rel_error) << '\n';
  }
  out << "active_losses=";
  for (size_t i = 0; i < report.active_losses.size(); ++i) out << (i ? "+" : "") << report.active_losses[i];
  out << "\nmax_rel_error=" << internal::format_double(report.max_rel_error) << "\n"
      << (report.passed ? "PASS" : "FAIL") << "\n";
  return out.str();
}

}  // namespace kgjoint

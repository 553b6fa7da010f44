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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "kgjoint/adapt.hpp"
#include "kgjoint/bench.hpp"
#include "kgjoint/checkpoint.hpp"
#include "kgjoint/gradcheck.hpp"
#include "kgjoint/memory.hpp"
#include "kgjoint/pretrain.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace kgjoint;
using namespace kgjoint::oracle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// State shared by the criteria that reuse the 500-step pre-training run.
// The trainer points into `data`, so this never moves.
struct Pretrained {
  TrainConfig config;
  World world;
  PretrainData data;
  std::unique_ptr<Trainer> trainer;
  std::vector<StepReport> reports;
  fs::path step100;  // checkpoint written after 100 steps
  double seconds = 0.0;
};

Outcome schedule_exactness() {
  const auto start = std::chrono::steady_clock::now();
  const MemorySchedule s{10, 2, 3, 500, 0.8};
  size_t mismatches = 0;
  std::string got;
  for (size_t i = 0; i <= 40; ++i) {
    const size_t expected = std::min<size_t>(size_t{10} << (i / 3), 500);
    const size_t actual = refresh_interval(s, i);
    mismatches += actual != expected;
    if (i < 10) got += std::to_string(actual) + ",";
  }
  const double t = seconds_since(start);
  return {mismatches == 0 && t < 1.0,
          fmt("T(0..9)=%s... T(40)=%zu; %zu mismatches over i=0..40", got.c_str(), refresh_interval(s, 40),
              mismatches)};
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Outcome momentum_rule() {
  const std::vector<double> e{1.0, -2.0, 0.5, 3.25, 0.1, 0.2, 0.3, 0.4, -7.0, 11.0, 0.0, 2.5};
  const std::vector<double> fresh{0.0, 4.0, -1.5, 1.0, 0.7, -0.2, 9.0, 0.4, 3.0, -1.0, 6.0, 2.5};
  EntityMemory mem(3, 4, e, MemorySchedule{});
  mem.blend(fresh);
  size_t differing = 0;
  for (size_t i = 0; i < e.size(); ++i) differing += mem.values()[i] != 0.8 * e[i] + 0.2 * fresh[i];

  // Stationary lower stack: the refresh target is fixed, so every refresh
  // shrinks the distance to it by the momentum.
  const TrainConfig c = grad_check_config();
  const World world = generate_world(c.world);
  const JointModel model(c, {world.vocab.size(), world.kg.category_count(), world.kg.relation_count()}, 7);
  const std::vector<double> target = encode_entities(model.lm(), world.kg);
  EntityMemory moving = EntityMemory::random(world.kg.entity_count(), c.width, 1.0, 8, MemorySchedule{});
  double previous = distance(moving.values(), target), worst = 0.0;
  size_t refreshes = 0;
  while (refreshes < 5) {
    if (!moving.maybe_refresh(model.lm(), world.kg)) continue;
    ++refreshes;
    const double now = distance(moving.values(), target);
    worst = std::max(worst, std::abs(now / previous - 0.8));
    previous = now;
  }
  return {differing == 0 && worst <= 1e-12,
          fmt("3x4 blend: %zu of 12 entries differ from 0.8*E+0.2*E_new; contraction |ratio-0.8| <= %.2e over 5 "
              "refreshes",
              differing, worst)};
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport r = run_grad_check(grad_check_config());
  const double t = seconds_since(start);
  bool language = false, knowledge = false;
  size_t coordinates = 0;
  for (const ParameterCheck& p : r.parameters) {
    (p.group == ParamGroup::kLanguage ? language : knowledge) = true;
    coordinates += p.checked;
  }
  const bool all_losses = r.active_losses.size() == 4;
  return {r.passed && r.max_rel_error <= 1e-4 && language && knowledge && all_losses && t < 120.0,
          fmt("max rel error %.2e over %zu tensors (%zu coordinates), %zu active losses, %.1f s", r.max_rel_error,
              r.parameters.size(), coordinates, r.active_losses.size(), t)};
}

struct GatFixture {
  KnowledgeConfig config;
  ParameterStore store;
  KnowledgeModule km;
  explicit GatFixture(RelationMode mode) {
    config.width = 12;
    config.heads = 3;
    config.layers = 2;
    config.relation_mode = mode;
    config.init_std = 0.4;
    Rng rng = make_rng(21);
    km = KnowledgeModule(config, store, rng);
    Rng perturb = make_rng(22);
    for (auto& [name, p] : store.all()) {
      if (name.find("ln.") == std::string::npos) continue;
      const double base = name.find("gamma") != std::string::npos ? 1.0 : 0.0;
      for (double& v : p.tensor.mutable_values()) v = base + 0.2 * standard_normal(perturb);
    }
  }
};

Outcome gat_oracles() {
  GatFixture fx(RelationMode::kContext);
  const size_t k = fx.config.heads;
  const KnowledgeGraph kg = random_graph(50, 4, 150, 7);
  Rng rng = make_rng(8);
  const Matrix e0 = random_matrix(50, fx.config.width, rng);
  const Matrix rel = random_matrix(4, fx.config.width, rng);

  // Simplex: attention over each target's sampled edges.
  const std::vector<EntityId> targets{0, 3, 17, 42, 49};
  const Subgraph sampled = sample_neighborhood(kg, targets, 2, 3, 11);
  Rng init_rng = make_rng(9);
  GraphAttentionTrace trace;
  fx.km.forward(sampled, to_tensor(random_matrix(sampled.layers.back().size(), fx.config.width, init_rng)),
                to_tensor(rel), &trace);
  double simplex = 0.0;
  for (size_t step = 0; step < trace.size(); ++step) {
    const size_t hop = trace.size() - 1 - step;
    std::vector<double> sums(sampled.layers[hop].size() * k, 0.0);
    for (size_t i = 0; i < sampled.blocks[hop].size(); ++i) {
      for (size_t h = 0; h < k; ++h) sums[sampled.blocks[hop][i].dst * k + h] += trace[step][i * k + h];
    }
    for (size_t v = 0; v < sampled.layers[hop].size(); ++v) {
      if (kg.incident(sampled.layers[hop][v]).empty()) continue;
      for (size_t h = 0; h < k; ++h) simplex = std::max(simplex, std::abs(sums[v * k + h] - 1.0));
    }
  }

  // Permutation: one layer over shuffled copies of the same edge list.
  std::vector<SampledEdge> edges;
  for (size_t dst = 0; dst < 4; ++dst) {
    for (size_t j = 0; j < 6; ++j) edges.push_back({dst, uniform_index(rng, 12), uniform_index(rng, 4), j % 2 == 1});
  }
  const Tensor layer_in = to_tensor(random_matrix(12, fx.config.width, rng));
  const Tensor base = fx.km.layer_forward(0, edges, 4, layer_in, to_tensor(rel));
  size_t permutation_diffs = 0;
  for (uint64_t trial = 0; trial < 10; ++trial) {
    std::vector<SampledEdge> shuffled = edges;
    Rng prng = make_rng(100 + trial);
    shuffle(shuffled, prng);
    const Tensor out = fx.km.layer_forward(0, shuffled, 4, layer_in, to_tensor(rel));
    for (size_t i = 0; i < out.size(); ++i) permutation_diffs += out.at(i) != base.at(i);
  }

  // Sampled equals dense once the fanout covers every neighbor.
  const Matrix dense = dense_forward(kg, fx.store, fx.config, e0, rel);
  std::vector<EntityId> all(kg.entity_count());
  for (size_t v = 0; v < all.size(); ++v) all[v] = v;
  const Subgraph full = sample_neighborhood(kg, all, fx.config.layers, kg.max_degree(), 5);
  Matrix init;
  for (EntityId v : full.layers.back()) init.push_back(e0[v]);
  const Tensor out = fx.km.forward(full, to_tensor(init), to_tensor(rel));
  double dense_gap = 0.0;
  for (size_t i = 0; i < all.size(); ++i) {
    for (size_t j = 0; j < fx.config.width; ++j) {
      dense_gap = std::max(dense_gap, std::abs(out.at(full.target_rows[i], j) - dense[all[i]][j]));
    }
  }
  return {simplex <= 1e-12 && permutation_diffs == 0 && dense_gap <= 1e-12,
          fmt("|row sum-1| <= %.1e; %zu differing outputs over 10 permutations; sampled vs dense max gap %.1e on 50 "
              "nodes",
              simplex, permutation_diffs, dense_gap)};
}

Outcome stack_composition() {
  LanguageConfig c;
  c.vocab_size = 30;
  c.width = 12;
  c.heads = 3;
  c.lower_layers = 2;
  c.upper_layers = 2;
  c.max_len = 12;
  c.init_std = 0.3;
  ParameterStore store;
  Rng rng = make_rng(1);
  const LanguageModule lm(c, store, rng);
  randomize(store, 2);
  const ReferenceEncoder ref(store, c);
  double gap = 0.0;
  Rng data_rng = make_rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<TokenSeq> seqs;
    for (int s = 0; s < 3; ++s) {
      TokenSeq t{kClsToken};
      const size_t len = 1 + uniform_index(data_rng, c.max_len - 2);
      for (size_t p = 0; p < len; ++p) t.push_back(kSpecialTokenCount + uniform_index(data_rng, c.vocab_size - kSpecialTokenCount));
      t.push_back(kEosToken);
      seqs.push_back(t);
    }
    const TokenBatch batch = make_batch(seqs, c.max_len);
    const Tensor split = lm.upper_forward(lm.lower_forward(batch), batch);
    for (size_t s = 0; s < seqs.size(); ++s) {
      const Matrix expected = ref.layers(ref.embed(seqs[s]), 0, c.total_layers());
      for (size_t p = 0; p < expected.size(); ++p) {
        for (size_t j = 0; j < c.width; ++j) gap = std::max(gap, std::abs(split.at(batch.row(s, p), j) - expected[p][j]));
      }
    }
  }
  return {gap <= 1e-12, fmt("LM1 then LM2 vs monolithic reference: max gap %.1e over 12 random sequences", gap)};
}

std::unique_ptr<Pretrained> run_pretraining(const fs::path& dir) {
  auto owned = std::make_unique<Pretrained>();
  Pretrained& p = *owned;
  const auto start = std::chrono::steady_clock::now();
  p.config = TrainConfig{};
  p.world = generate_world(p.config.world);
  p.data = prepare_data(p.world, p.config);
  p.trainer = std::make_unique<Trainer>(p.config, p.data);
  p.step100 = dir / "uninterrupted-100.ckpt";
  while (p.trainer->global_step() < p.config.steps) {
    p.reports.push_back(p.trainer->step());
    if (p.trainer->global_step() == 100) {
      save_checkpoint(p.step100.string(), p.config, p.data.dims(), 100, p.trainer->model().store(),
                      &p.trainer->memory());
    }
  }
  p.seconds = seconds_since(start);
  return owned;
}

Outcome trainability(const Pretrained& p) {
  double first = 0.0, last = 0.0;
  const size_t n = p.reports.size();
  for (size_t i = 0; i < 10; ++i) {
    first += p.reports[i].total / 10.0;
    last += p.reports[n - 10 + i].total / 10.0;
  }
  const double reduction = 1.0 - last / first;
  const double hits = p.trainer->masked_entity_hits(p.data.heldout, p.config.seed);
  const double baseline = 1.0 / static_cast<double>(p.config.entity_candidates);
  return {n == 500 && reduction >= 0.5 && hits > 5.0 * baseline && p.seconds < 900.0,
          fmt("%zu steps in %.0f s; 10-step mean loss %.3f -> %.3f (%.1f%% lower); held-out masked-entity hits@1 "
              "%.3f vs 5x baseline %.3f",
              n, p.seconds, first, last, 100.0 * reduction, hits, 5.0 * baseline)};
}

Outcome ablation_direction(const Pretrained& p) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> fractions{1.0, 0.2, 0.05};
  const std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  const EvalReport report = run_ablation_grid(p.config, p.data.dims(), p.trainer->model().store(), p.data.unseen,
                                              fractions, seeds);
  const double t = seconds_since(start);
  std::map<std::pair<std::string, std::string>, std::map<uint64_t, double>> test;
  for (const EvalRow& r : report) {
    if (r.split == "test") test[{r.config, r.metric}][r.seed] = r.value;
  }
  auto mean = [&](const std::string& config, const std::string& metric) {
    double s = 0.0;
    for (uint64_t seed : seeds) s += test.at({config, metric}).at(seed);
    return s / static_cast<double>(seeds.size());
  };
  const double lm = mean("fresh+lm", "accuracy@100"), random = mean("fresh+random", "accuracy@100");
  size_t wins = 0;
  for (uint64_t seed : seeds) {
    wins += test.at({"pretrained+lm", "accuracy@5"}).at(seed) > test.at({"fresh+lm", "accuracy@5"}).at(seed);
  }
  return {lm - random >= 0.05 && wins >= 4 && t < 1800.0,
          fmt("at 100%%: lm memory %.3f vs random memory %.3f (+%.1f points); at 5%%: pretrained %.3f vs fresh %.3f, "
              "pretrained ahead in %zu/5 seeds; %.0f s",
              lm, random, 100.0 * (lm - random), mean("pretrained+lm", "accuracy@5"), mean("fresh+lm", "accuracy@5"),
              wins, t)};
}

Outcome memory_amortization(const Pretrained& p) {
  const auto start = std::chrono::steady_clock::now();
  const BenchReport r = run_memory_bench(p.config, p.data, 40);
  const double t = seconds_since(start);
  const size_t refreshes = static_cast<size_t>(std::count(r.with_memory.refreshed.begin(), r.with_memory.refreshed.end(), true));
  return {r.speedup >= 5.0 && refreshes > 0 && t < 300.0,
          fmt("%.1f ms/step with memory (%zu refreshes included) vs %.1f ms/step recomputing: %.1fx; %.0f s",
              1e3 * r.with_memory.mean(), refreshes, 1e3 * r.recompute.mean(), r.speedup, t)};
}

Outcome determinism_and_resume(const Pretrained& p, const fs::path& dir) {
  Trainer first(p.config, p.data);
  size_t differing = 0;
  for (size_t i = 0; i < 50; ++i) differing += !(first.step() == p.reports[i]);
  const fs::path mid = dir / "resume-50.ckpt";
  save_checkpoint(mid.string(), p.config, p.data.dims(), first.global_step(), first.model().store(), &first.memory());

  const Checkpoint ck = load_checkpoint(mid.string());
  Trainer resumed(p.config, p.data);
  resumed.model().load_parameters(ck.params);
  resumed.restore(ck.step, *ck.memory);
  for (size_t i = 50; i < 100; ++i) differing += !(resumed.step() == p.reports[i]);
  const fs::path end = dir / "resumed-100.ckpt";
  save_checkpoint(end.string(), p.config, p.data.dims(), resumed.global_step(), resumed.model().store(),
                  &resumed.memory());
  const bool same_state = read_bytes(end) == read_bytes(p.step100);
  return {differing == 0 && same_state,
          fmt("%zu of 100 metric rows differ from the uninterrupted run (50 fresh + 50 after reload); parameters, "
              "moments and memory at step 100 %s",
              differing, same_state ? "identical" : "DIFFER")};
}

Outcome kgqa_structure(const Pretrained& p) {
  const TrainConfig& c = p.config;
  TrainConfig ft = c;
  ft.relation_mode = RelationMode::kContext;
  size_t missing_gold = 0, lower = 0, candidates_checked = 0;
  double full_hits = 0.0, full_chance = 0.0, half_hits = 0.0;
  bool above_chance = true;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const std::vector<Question> qs = generate_qa(p.world.kg, p.world.vocab, 1, c.qa_train + c.qa_test, seed);
    const std::span<const Question> train(qs.data(), c.qa_train);
    const std::span<const Question> test(qs.data() + c.qa_train, qs.size() - c.qa_train);
    QaResult result[2];
    for (int half = 0; half < 2; ++half) {
      const KnowledgeGraph kg = half ? drop_triplets(p.world.kg, 0.5, seed) : p.world.kg;
      AdaptedModel model(ft, p.data.dims(), &p.trainer->model().store(), kg, MemoryInit::kLmEncoded, seed);
      if (!half) {
        for (const Question& q : qs) {
          const std::vector<EntityId> cands = qa_candidates(model, q);
          missing_gold += std::find(cands.begin(), cands.end(), q.answer) == cands.end();
          ++candidates_checked;
        }
      }
      finetune_kgqa(model, train, c.finetune_steps, seed);
      result[half] = eval_kgqa(model, test);
    }
    above_chance = above_chance && result[0].hits_at_1 >= 2.0 * result[0].chance;
    lower += result[1].hits_at_1 < result[0].hits_at_1;
    full_hits += result[0].hits_at_1 / 5.0;
    full_chance += result[0].chance / 5.0;
    half_hits += result[1].hits_at_1 / 5.0;
  }
  return {missing_gold == 0 && above_chance && lower == 5,
          fmt("gold missing from %zu of %zu full-KG candidate sets; mean hits@1 full %.3f vs chance %.3f; KG-50%% "
              "%.3f, lower in %zu/5 seeds",
              missing_gold, candidates_checked, full_hits, full_chance, half_hits, lower)};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("kgjoint_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  };

  report(1, "schedule exactness", schedule_exactness);
  report(2, "momentum rule", momentum_rule);
  report(3, "gradient suite", gradient_suite);
  report(4, "GAT oracles", gat_oracles);
  report(5, "stack composition", stack_composition);

  // Criterion 6 trains the model the later criteria reuse.
  std::unique_ptr<Pretrained> pretrained;
  report(6, "trainability", [&] {
    pretrained = run_pretraining(dir);
    return trainability(*pretrained);
  });
  auto with_run = [&](const std::function<Outcome(const Pretrained&)>& check) {
    return [&, check] { return pretrained ? check(*pretrained) : Outcome{false, "pre-training failed"}; };
  };
  report(7, "ablation direction", with_run(ablation_direction));
  report(8, "memory amortization", with_run(memory_amortization));
  report(9, "determinism and resume", with_run([&](const Pretrained& p) { return determinism_and_resume(p, dir); }));
  report(10, "KGQA structure", with_run(kgqa_structure));

  fs::remove_all(dir);
  return all ? 0 : 1;
}

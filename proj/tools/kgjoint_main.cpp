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

// Command-line entry points.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgjoint/adapt.hpp"
#include "kgjoint/bench.hpp"
#include "kgjoint/checkpoint.hpp"
#include "kgjoint/gradcheck.hpp"
#include "kgjoint/pretrain.hpp"

namespace fs = std::filesystem;
using namespace kgjoint;

namespace {

struct Flags {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string task;
  std::string preset = "desk";
  std::optional<uint64_t> seed;
  std::optional<int64_t> steps;
};

TrainConfig resolve_config(const Flags& f) {
  TrainConfig c = preset(f.preset);
  if (!f.config.empty()) c = load_config(f.config, c);
  if (f.seed) c.seed = *f.seed;
  if (f.steps) c.steps = *f.steps;
  c.validate();
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(std::string("missing required flag ") + flag);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const std::string& dir) {
  require(dir, "--out");
  fs::create_directories(dir);
  return fs::path(dir);
}

// Loads a checkpoint and checks it against the data it is applied to.
Checkpoint load_compatible(const std::string& path, const PretrainData& data, const Flags& f) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.dims == data.dims())) {
    throw Error("checkpoint " + path + " was built for vocabulary/categories/relations " +
                std::to_string(ck.dims.vocab_size) + "/" + std::to_string(ck.dims.categories) + "/" +
                std::to_string(ck.dims.relations) + " but the data has " + std::to_string(data.dims().vocab_size) +
                "/" + std::to_string(data.dims().categories) + "/" + std::to_string(data.dims().relations));
  }
  if (!f.config.empty()) {
    const TrainConfig requested = load_config(f.config, ck.config);
    if (requested.width != ck.config.width) {
      throw Error("checkpoint width " + std::to_string(ck.config.width) + " does not match configured width " +
                  std::to_string(requested.width));
    }
  }
  return ck;
}

int cmd_gen_data(const Flags& f) {
  TrainConfig c = resolve_config(f);
  if (f.seed) c.world.seed = *f.seed;
  const fs::path out = prepare_out(f.out);
  World world = generate_world(c.world);
  write_world(world, out.string());
  std::cout << "wrote world with " << world.kg.entity_count() << " entities, " << world.kg.triplets().size()
            << " triplets and " << world.corpus.size() << " sequences to " << out.string()
            << " (planted signal accuracy " << world.planted_signal_accuracy << ")\n";
  return 0;
}

int cmd_pretrain(const Flags& f) {
  require(f.data, "--data");
  TrainConfig c = resolve_config(f);
  const World world = read_world(f.data);
  c.world = world.config;
  const fs::path out = prepare_out(f.out);
  const PretrainData data = prepare_data(world, c);
  Trainer trainer(c, data);
  if (!f.checkpoint.empty()) {
    Checkpoint ck = load_compatible(f.checkpoint, data, f);
    if (ck.config.to_map() != c.to_map()) {
      std::cerr << "warning: resuming with a configuration that differs from the checkpoint's\n";
    }
    trainer.model().load_parameters(ck.params);
    trainer.restore(ck.step, ck.memory ? std::move(*ck.memory) : EntityMemory());
  }
  write_text(out / "config.txt", render_config(c));
  const fs::path metrics_path = out / "metrics.csv";
  const bool resume = !f.checkpoint.empty() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw Error("cannot write " + metrics_path.string());
  if (!resume) metrics << metrics_header() << '\n';
  auto save = [&](const fs::path& path) {
    save_checkpoint(path.string(), c, data.dims(), trainer.global_step(), trainer.model().store(),
                    c.use_memory ? &trainer.memory() : nullptr);
  };
  while (trainer.global_step() < c.steps) {
    StepReport r;
    try {
      r = trainer.step();
    } catch (const Error& e) {
      metrics.flush();
      throw Error(std::string(e.what()) + " (last good checkpoint kept in " + out.string() + ")");
    }
    metrics << metrics_row(r) << '\n';
    if (c.checkpoint_every > 0 && trainer.global_step() % c.checkpoint_every == 0) {
      save(out / ("checkpoint-" + std::to_string(trainer.global_step()) + ".ckpt"));
    }
  }
  metrics.flush();
  save(out / "final.ckpt");
  if (!data.heldout.empty() && c.use_memory) {
    std::cout << "held-out masked-entity hits@1 " << trainer.masked_entity_hits(data.heldout, c.seed) << '\n';
  }
  std::cout << "trained to step " << trainer.global_step() << "; outputs in " << out.string() << '\n';
  return 0;
}

std::vector<uint64_t> seed_range(uint64_t first, size_t count) {
  std::vector<uint64_t> out;
  for (size_t i = 0; i < count; ++i) out.push_back(first + i);
  return out;
}

EvalReport run_task(const Flags& f, bool train) {
  require(f.data, "--data");
  require(f.checkpoint, "--checkpoint");
  require(f.task, "--task");
  const World world = read_world(f.data);
  const Checkpoint probe = load_checkpoint(f.checkpoint);
  TrainConfig c = probe.config;
  if (!f.config.empty()) c = load_config(f.config, c);
  if (f.seed) c.seed = *f.seed;
  c.validate();
  const PretrainData data = prepare_data(world, c);
  const Checkpoint ck = load_compatible(f.checkpoint, data, f);
  const int64_t steps = f.steps ? *f.steps : c.finetune_steps;
  TrainConfig ft = c;
  ft.finetune_steps = train ? steps : 0;
  ft.relation_mode = RelationMode::kContext;
  const std::string id = "pretrained+lm";
  EvalReport report;

  if (f.task == "entity") {
    AdaptedModel model(ft, data.dims(), &ck.params, data.unseen, MemoryInit::kLmEncoded, c.seed);
    const EntitySplits splits = split_entities(data.unseen, 0.2, 0.2, c.seed);
    LabelGuard guard(data.unseen, splits);
    const ClassificationResult r = finetune_entity_classification(model, splits, c.train_fraction, c.seed, guard);
    const std::string metric = "accuracy@" + std::to_string(static_cast<int>(c.train_fraction * 100.0 + 0.5));
    report.push_back({"entity_classification", id, "dev", metric, r.dev_accuracy, c.seed});
    report.push_back({"entity_classification", id, "test", metric, r.test_accuracy, c.seed});
  } else if (f.task == "kgqa") {
    std::vector<Question> qs = generate_qa(world.kg, world.vocab, c.qa_hops, c.qa_train + c.qa_test, c.seed);
    const size_t n_train = std::min(c.qa_train, qs.size());
    std::span<const Question> train_qs(qs.data(), n_train), test_qs(qs.data() + n_train, qs.size() - n_train);
    for (bool half : {false, true}) {
      const KnowledgeGraph kg = half ? drop_triplets(world.kg, 0.5, c.seed) : world.kg;
      AdaptedModel model(ft, data.dims(), &ck.params, kg, MemoryInit::kLmEncoded, c.seed);
      if (train) finetune_kgqa(model, train_qs, steps, c.seed);
      const QaResult r = eval_kgqa(model, test_qs);
      const std::string split = half ? "test_kg50" : "test";
      report.push_back({"kgqa", id, split, "hits@1", r.hits_at_1, c.seed});
      report.push_back({"kgqa", id, split, "chance", r.chance, c.seed});
    }
  } else if (f.task == "fewshot") {
    TrainConfig fs_cfg = ft;
    fs_cfg.relation_mode = RelationMode::kNone;
    const std::vector<RelationInstance> instances = relation_instances(world);
    const RelationSplit split = split_relations(world.kg.relation_count(), c.fewshot_test_relations, c.seed);
    AdaptedModel model(fs_cfg, data.dims(), &ck.params, world.kg, MemoryInit::kLmEncoded, c.seed);
    if (train) {
      EpisodeOptions train_opts;
      train_opts.n_way = std::min(c.fewshot_way, split.train.size());
      train_opts.k_shot = c.fewshot_shot;
      train_opts.count = static_cast<size_t>(std::max<int64_t>(steps, 1));
      train_opts.seed = derive_seed(c.seed, {1});
      train_pair_head(model, instances, generate_episodes(instances, split.train, train_opts), steps, c.seed);
    }
    EpisodeOptions test_opts;
    test_opts.n_way = c.fewshot_way;
    test_opts.k_shot = c.fewshot_shot;
    test_opts.seed = derive_seed(c.seed, {2});
    const FewShotResult r = eval_fewshot_pair(model, instances, generate_episodes(instances, split.test, test_opts));
    if (r.truncated > 0) std::cerr << "warning: " << r.truncated << " pair sequences were truncated\n";
    report.push_back({"fewshot", id, "test", "accuracy", r.accuracy, c.seed});
  } else if (f.task == "ablation") {
    if (!train) throw Error("the ablation grid is a fine-tuning task");
    const std::vector<double> fractions = {1.0, 0.2, 0.05};
    ft.finetune_steps = steps;
    report = run_ablation_grid(ft, data.dims(), ck.params, data.unseen, fractions, seed_range(c.seed, 5));
  } else if (f.task == "masked-entity" && !train) {
    if (!ck.memory) throw Error("checkpoint carries no entity memory");
    Trainer trainer(c, data);
    trainer.model().load_parameters(ck.params);
    trainer.restore(ck.step, *ck.memory);
    report.push_back({"masked_entity", "pretrained", "heldout", "hits@1",
                      trainer.masked_entity_hits(data.heldout, c.seed), c.seed});
  } else {
    throw Error("unknown task '" + f.task + "' for " + (train ? "finetune" : "eval") +
                " (expected entity, kgqa, fewshot" + (train ? ", ablation" : ", masked-entity") + ")");
  }
  return report;
}

int cmd_finetune(const Flags& f) {
  const fs::path out = prepare_out(f.out);
  const EvalReport report = run_task(f, true);
  write_text(out / (f.task + "_report.csv"), format_report(report));
  std::cout << format_report(report);
  return 0;
}

int cmd_eval(const Flags& f) {
  const EvalReport report = run_task(f, false);
  std::cout << format_report(report);
  if (!f.out.empty()) write_text(prepare_out(f.out) / (f.task + "_eval.csv"), format_report(report));
  return 0;
}

int cmd_grad_check(const Flags& f) {
  TrainConfig c = grad_check_config();
  if (!f.config.empty()) c = load_config(f.config, c);
  if (f.seed) c.seed = *f.seed;
  const GradCheckReport report = run_grad_check(c);
  std::cout << format_grad_check(report);
  return report.passed ? 0 : 1;
}

int cmd_bench_memory(const Flags& f) {
  TrainConfig c = resolve_config(f);
  const World world = f.data.empty() ? generate_world(c.world) : read_world(f.data);
  c.world = world.config;
  const PretrainData data = prepare_data(world, c);
  const int64_t steps = f.steps ? *f.steps : 40;
  const BenchReport report = run_memory_bench(c, data, steps);
  const std::string text = format_bench(report);
  std::cout << text;
  if (!f.out.empty()) write_text(prepare_out(f.out) / "bench_memory.csv", text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint language and knowledge-graph pre-training on synthetic worlds"};
  app.require_subcommand(1);
  Flags flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key=value configuration file");
    sub->add_option("--data", flags.data, "world directory");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "seed override");
    sub->add_option("--steps", flags.steps, "step count override");
    sub->add_option("--task", flags.task, "entity, kgqa, fewshot, ablation or masked-entity");
    sub->add_option("--checkpoint", flags.checkpoint, "checkpoint to resume from or adapt");
    sub->add_option("--preset", flags.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Command commands[] = {
      {"gen-data", "generate a synthetic world", cmd_gen_data},
      {"pretrain", "joint pre-training", cmd_pretrain},
      {"finetune", "fine-tune and evaluate a pre-trained checkpoint", cmd_finetune},
      {"eval", "evaluate a checkpoint without fine-tuning", cmd_eval},
      {"grad-check", "compare backprop with finite differences at a tiny config", cmd_grad_check},
      {"bench-memory", "time training with and without the entity memory", cmd_bench_memory},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    common(sub);
    subs.emplace_back(sub, &cmd);
  }
  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& [sub, cmd] : subs) {
      if (sub->parsed()) return cmd->run(flags);
    }
  } catch (const std::exception& e) {
    std::cerr << "kgjoint: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

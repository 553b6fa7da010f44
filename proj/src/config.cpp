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

#include "kgjoint/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "text_util.hpp"

namespace kgjoint {

namespace {

std::string format(size_t v) { return std::to_string(v); }
std::string format(int64_t v) { return std::to_string(v); }
std::string format(double v) { return internal::format_double(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(RelationMode v) { return to_string(v); }

template <class Int>
void parse_int(const std::string& key, const std::string& text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("config: " + key + " expects an integer, got '" + text + "'");
  }
}

void parse(const std::string& key, const std::string& text, size_t& out) { parse_int(key, text, out); }
void parse(const std::string& key, const std::string& text, int64_t& out) { parse_int(key, text, out); }

void parse(const std::string& key, const std::string& text, double& out) {
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out)) {
    throw Error("config: " + key + " expects a finite number, got '" + text + "'");
  }
}

void parse(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw Error("config: " + key + " expects true or false, got '" + text + "'");
  }
}

void parse(const std::string&, const std::string& text, RelationMode& out) {
  out = parse_relation_mode(text);
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field bind(T& (*access)(TrainConfig&)) {
  return {[access](const TrainConfig& c) { return format(access(const_cast<TrainConfig&>(c))); },
          [access](TrainConfig& c, const std::string& key, const std::string& text) {
            parse(key, text, access(c));
          }};
}

#define KG_FIELD(key, expr) \
  { key, bind(+[](TrainConfig& c) -> auto& { return expr; }) }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      KG_FIELD("world.entities", c.world.entities),
      KG_FIELD("world.relations", c.world.relations),
      KG_FIELD("world.categories", c.world.categories),
      KG_FIELD("world.vocab_size", c.world.vocab_size),
      KG_FIELD("world.sequences", c.world.sequences),
      KG_FIELD("world.max_seq_len", c.world.max_seq_len),
      KG_FIELD("world.mean_degree", c.world.mean_degree),
      KG_FIELD("world.seed", c.world.seed),
      KG_FIELD("world.concentration", c.world.concentration),
      KG_FIELD("world.homophily", c.world.homophily),
      KG_FIELD("world.category_phrase_tokens", c.world.category_phrase_tokens),
      KG_FIELD("world.relation_phrase_tokens", c.world.relation_phrase_tokens),
      KG_FIELD("world.name_pool", c.world.name_pool),
      KG_FIELD("world.description_length", c.world.description_length),
      KG_FIELD("world.unlabeled_fraction", c.world.unlabeled_fraction),
      KG_FIELD("model.width", c.width),
      KG_FIELD("model.lm_heads", c.lm_heads),
      KG_FIELD("model.lower_layers", c.lower_layers),
      KG_FIELD("model.upper_layers", c.upper_layers),
      KG_FIELD("model.max_len", c.max_len),
      KG_FIELD("model.gat_layers", c.gat_layers),
      KG_FIELD("model.gat_heads", c.gat_heads),
      KG_FIELD("model.lm_init_std", c.lm_init_std),
      KG_FIELD("model.km_init_std", c.km_init_std),
      KG_FIELD("model.relation_mode", c.relation_mode),
      KG_FIELD("sample.hops", c.hops),
      KG_FIELD("sample.fanout", c.fanout),
      KG_FIELD("sample.walk_length", c.walk_length),
      KG_FIELD("sample.roots", c.roots),
      KG_FIELD("sample.text_batch", c.text_batch),
      KG_FIELD("sample.token_mask_rate", c.token_mask_rate),
      KG_FIELD("sample.mention_mask_rate", c.mention_mask_rate),
      KG_FIELD("sample.entity_candidates", c.entity_candidates),
      KG_FIELD("sample.max_relation_triplets", c.max_relation_triplets),
      KG_FIELD("memory.initial_interval", c.memory.initial_interval),
      KG_FIELD("memory.growth", c.memory.growth),
      KG_FIELD("memory.growth_period", c.memory.growth_period),
      KG_FIELD("memory.max_interval", c.memory.max_interval),
      KG_FIELD("memory.momentum", c.memory.momentum),
      KG_FIELD("memory.enabled", c.use_memory),
      KG_FIELD("loss.category", c.loss_category),
      KG_FIELD("loss.relation", c.loss_relation),
      KG_FIELD("loss.token", c.loss_token),
      KG_FIELD("loss.entity", c.loss_entity),
      KG_FIELD("optim.lr_lm", c.lr_lm),
      KG_FIELD("optim.lr_km", c.lr_km),
      KG_FIELD("optim.warmup_lm", c.warmup_lm),
      KG_FIELD("optim.warmup_km", c.warmup_km),
      KG_FIELD("optim.beta1", c.adam.beta1),
      KG_FIELD("optim.beta2", c.adam.beta2),
      KG_FIELD("optim.eps", c.adam.eps),
      KG_FIELD("optim.weight_decay", c.adam.weight_decay),
      KG_FIELD("optim.alternate_phases", c.alternate_phases),
      KG_FIELD("train.steps", c.steps),
      KG_FIELD("train.seed", c.seed),
      KG_FIELD("train.checkpoint_every", c.checkpoint_every),
      KG_FIELD("train.unseen_fraction", c.unseen_fraction),
      KG_FIELD("train.heldout_fraction", c.heldout_fraction),
      KG_FIELD("finetune.steps", c.finetune_steps),
      KG_FIELD("finetune.lr", c.finetune_lr),
      KG_FIELD("finetune.eval_every", c.eval_every),
      KG_FIELD("finetune.train_fraction", c.train_fraction),
      KG_FIELD("finetune.qa_train", c.qa_train),
      KG_FIELD("finetune.qa_test", c.qa_test),
      KG_FIELD("finetune.qa_hops", c.qa_hops),
      KG_FIELD("finetune.fewshot_way", c.fewshot_way),
      KG_FIELD("finetune.fewshot_shot", c.fewshot_shot),
      KG_FIELD("finetune.fewshot_test_relations", c.fewshot_test_relations),
  };
  return table;
}

#undef KG_FIELD

}  // namespace

void TrainConfig::validate() const {
  world.validate();
  language(world.vocab_size).validate();
  knowledge().validate();
  memory.validate();
  if (hops != gat_layers) {
    throw Error("config: sample.hops (" + std::to_string(hops) + ") must equal model.gat_layers (" +
                std::to_string(gat_layers) + ")");
  }
  if (fanout == 0 || roots == 0 || text_batch == 0) throw Error("config: batch sizes must be positive");
  if (!(token_mask_rate > 0.0 && token_mask_rate < 1.0)) {
    throw Error("config: sample.token_mask_rate must lie in (0, 1)");
  }
  if (!(mention_mask_rate >= 0.0 && mention_mask_rate < 1.0)) {
    throw Error("config: sample.mention_mask_rate must lie in [0, 1)");
  }
  if (entity_candidates == 0) throw Error("config: sample.entity_candidates must be positive");
  if (world.max_seq_len > max_len) {
    throw Error("config: world.max_seq_len exceeds model.max_len");
  }
  if (!(lr_lm >= 0.0 && lr_km >= 0.0 && finetune_lr > 0.0)) {
    throw Error("config: learning rates must be nonnegative (fine-tuning rate positive)");
  }
  if (steps <= 0 || warmup_lm < 0 || warmup_km < 0 || warmup_lm > steps || warmup_km > steps) {
    throw Error("config: need steps > 0 and 0 <= warmup <= steps");
  }
  if (checkpoint_every < 0) throw Error("config: train.checkpoint_every must be nonnegative");
  if (!(unseen_fraction >= 0.0 && unseen_fraction < 1.0) ||
      !(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    throw Error("config: held-out fractions must lie in [0, 1)");
  }
  if (finetune_steps < 0 || eval_every <= 0) throw Error("config: bad fine-tuning step counts");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error("config: finetune.train_fraction must lie in (0, 1]");
  }
  if (qa_hops != 1 && qa_hops != 2) throw Error("config: finetune.qa_hops must be 1 or 2");
  if (fewshot_way < 2 || fewshot_shot == 0) throw Error("config: few-shot needs N >= 2 and K >= 1");
}

LanguageConfig TrainConfig::language(size_t vocab_size) const {
  LanguageConfig c;
  c.vocab_size = vocab_size;
  c.width = width;
  c.heads = lm_heads;
  c.lower_layers = lower_layers;
  c.upper_layers = upper_layers;
  c.max_len = max_len;
  c.init_std = lm_init_std;
  return c;
}

KnowledgeConfig TrainConfig::knowledge() const {
  KnowledgeConfig c;
  c.width = width;
  c.heads = gat_heads;
  c.layers = gat_layers;
  c.relation_mode = relation_mode;
  c.init_std = km_init_std;
  return c;
}

LrSchedule TrainConfig::lm_schedule() const { return {lr_lm, warmup_lm, steps}; }
LrSchedule TrainConfig::km_schedule() const { return {lr_km, warmup_km, steps}; }

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw Error("config: unknown key '" + key + "'");
  it->second.set(*this, key, value);
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name != "paper") throw Error("unknown preset '" + name + "' (expected desk or paper)");
  c.width = 768;
  c.lm_heads = 12;
  c.lower_layers = 6;
  c.upper_layers = 6;
  c.max_len = 512;
  c.gat_heads = 8;
  c.lm_init_std = 0.02;
  c.adam = AdamWOptions{0.9, 0.999, 1e-8, 0.01};
  c.lr_lm = 1e-5;
  c.lr_km = 1e-4;
  c.warmup_lm = 3000;
  c.warmup_km = 0;
  c.steps = 100000;
  return c;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  auto in = internal::open_input(path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = internal::strip_cr(line);
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    auto words = internal::words(text);
    if (words.empty()) continue;
    auto eq = text.find('=');
    if (eq == std::string_view::npos) internal::parse_error(path, line_no, "expected key=value");
    auto key = internal::words(text.substr(0, eq));
    auto value = internal::words(text.substr(eq + 1));
    if (key.size() != 1 || value.size() != 1) internal::parse_error(path, line_no, "expected key=value");
    try {
      base.set(std::string(key[0]), std::string(value[0]));
    } catch (const Error& e) {
      internal::parse_error(path, line_no, e.what());
    }
  }
  return base;
}

std::string render_config(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& [key, value] : config.to_map()) out << key << '=' << value << '\n';
  return out.str();
}

}  // namespace kgjoint

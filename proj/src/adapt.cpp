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

#include "kgjoint/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kgjoint/ops.hpp"
#include "kgjoint/pretrain.hpp"
#include "text_util.hpp"

namespace kgjoint {

namespace {

std::vector<EntityId> sorted_unique(std::vector<EntityId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

size_t argmax(std::span<const double> v) {
  return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensor category_logits(const Tensor& rows, const TaskHeads& heads) {
  return ops::add_row(ops::matmul(rows, heads.category_w), heads.category_b);
}

std::string percent_label(double fraction) {
  return "accuracy@" + internal::format_double(std::round(fraction * 1000.0) / 10.0);
}

}  // namespace

std::string AblationConfig::id() const {
  return std::string(weights == WeightsInit::kFresh ? "fresh" : "pretrained") + "+" +
         (memory == MemoryInit::kRandom ? "random" : "lm");
}

std::vector<AblationConfig> ablation_grid() {
  return {{MemoryInit::kRandom, WeightsInit::kFresh},
          {MemoryInit::kLmEncoded, WeightsInit::kFresh},
          {MemoryInit::kRandom, WeightsInit::kPretrained},
          {MemoryInit::kLmEncoded, WeightsInit::kPretrained}};
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "task,config,split,metric,value,seed\n";
  for (const EvalRow& r : report) {
    out << r.task << ',' << r.config << ',' << r.split << ',' << r.metric << ','
        << internal::format_double(r.value) << ',' << r.seed << '\n';
  }
  return out.str();
}

AdaptedModel::AdaptedModel(const TrainConfig& config, const ModelDims& dims, const ParameterStore* pretrained,
                           const KnowledgeGraph& kg, MemoryInit memory, uint64_t seed)
    : config_(config), kg_(&kg), model_(config, dims, derive_seed(seed, {0xada})) {
  config_.validate();
  if (kg.entity_count() == 0) throw Error("fine-tune: target graph has no entities");
  if (kg.category_count() > dims.categories || kg.relation_count() > dims.relations) {
    throw Error("fine-tune: target graph label space exceeds the model's");
  }
  ParameterStore& store = model_.store();
  if (pretrained) {
    model_.load_parameters(*pretrained);
    for (auto& [name, p] : store.all()) {
      std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
      std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
      p.step = 0;
    }
  }
  const size_t f = config_.width;
  Rng rng = make_rng(seed, {0x9a1});
  const double sd = 1.0 / std::sqrt(static_cast<double>(f));
  pair_w1_ = store.add_normal("head.pair.w1", {f, f}, sd, rng, ParamGroup::kLanguage);
  pair_b1_ = store.add_constant("head.pair.b1", {f}, 0.0, ParamGroup::kLanguage);
  pair_w2_ = store.add_normal("head.pair.w2", {f, 1}, sd, rng, ParamGroup::kLanguage);
  pair_b2_ = store.add_constant("head.pair.b2", {1}, 0.0, ParamGroup::kLanguage);

  if (memory == MemoryInit::kLmEncoded) {
    memory_ = EntityMemory::build(model_.lm(), kg, config_.memory);
  } else {
    memory_ = EntityMemory::random(kg.entity_count(), f, kRandomMemoryStd, derive_seed(seed, {0x3a4}),
                                   config_.memory);
  }
  memory_.freeze();
  if (config_.relation_mode == RelationMode::kContext) relations_ = build_relation_memory(model_.lm(), kg);
}

Tensor AdaptedModel::entity_embeddings(std::span<const EntityId> targets, uint64_t seed, bool full) const {
  if (targets.empty()) throw Error("entity_embeddings: no targets");
  const size_t fanout = full ? std::max<size_t>(1, kg_->max_degree()) : config_.fanout;
  Subgraph sg = sample_neighborhood(*kg_, targets, config_.hops, fanout, seed);
  Tensor out = model_.km().forward(sg, memory_.retrieve(sg.layers.back()), relations_);
  return ops::gather_rows(out, sg.target_rows);
}

Tensor AdaptedModel::pair_head(const Tensor& cls_rows) const {
  Tensor h = ops::relu(ops::add_row(ops::matmul(cls_rows, pair_w1_), pair_b1_));
  return ops::add_row(ops::matmul(h, pair_w2_), pair_b2_);
}

Tensor AdaptedModel::encode_text(std::span<const AnnotatedSequence> sequences, uint64_t seed) const {
  std::vector<TokenSeq> tokens;
  std::vector<EntityId> entities;
  for (const AnnotatedSequence& s : sequences) {
    tokens.push_back(s.tokens);
    for (const Mention& m : s.mentions) entities.push_back(m.entity);
  }
  entities = sorted_unique(std::move(entities));
  TokenBatch batch = make_batch(tokens, config_.max_len);
  Tensor z = model_.lm().lower_forward(batch);
  Tensor fused;
  if (entities.empty()) {
    fused = model_.lm().fuse(z, batch, {}, z);
  } else {
    Tensor rows = entity_embeddings(entities, seed, true);
    std::vector<FusionSpan> spans;
    for (size_t i = 0; i < sequences.size(); ++i) {
      for (const Mention& m : sequences[i].mentions) {
        const size_t row = static_cast<size_t>(std::lower_bound(entities.begin(), entities.end(), m.entity) -
                                               entities.begin());
        spans.push_back({i, m.start, m.end, row});
      }
    }
    fused = model_.lm().fuse(z, batch, spans, rows);
  }
  Tensor z_lm = model_.lm().upper_forward(fused, batch);
  std::vector<size_t> cls;
  for (size_t i = 0; i < sequences.size(); ++i) cls.push_back(batch.row(i, 0));
  return ops::gather_rows(z_lm, cls);
}

void AdaptedModel::update(bool knowledge_only) {
  for (auto& [name, p] : model_.store().all()) {
    if (knowledge_only && p.group == ParamGroup::kLanguage) continue;
    if (!p.tensor.has_grad()) continue;
    adamw_step(p, config_.finetune_lr, config_.adam);
  }
}

EntitySplits split_entities(const KnowledgeGraph& kg, double train_fraction, double dev_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && dev_fraction >= 0.0 && train_fraction + dev_fraction < 1.0)) {
    throw Error("split_entities: fractions must leave a non-empty test split");
  }
  std::vector<EntityId> labelled;
  for (EntityId e = 0; e < kg.entity_count(); ++e) {
    if (kg.category(e)) labelled.push_back(e);
  }
  Rng rng = make_rng(seed, {0x5b1});
  shuffle(labelled, rng);
  const size_t n = labelled.size();
  const auto n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_dev = static_cast<size_t>(std::llround(dev_fraction * static_cast<double>(n)));
  EntitySplits s;
  s.train.assign(labelled.begin(), labelled.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(labelled.begin() + static_cast<std::ptrdiff_t>(n_train),
               labelled.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(labelled.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), labelled.end());
  return s;
}

std::vector<EntityId> training_subset(const EntitySplits& splits, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("training fraction must lie in (0, 1]");
  const auto n = static_cast<size_t>(std::ceil(fraction * static_cast<double>(splits.train.size()) - 1e-9));
  if (n == 0) throw Error("entity classification: empty effective training set");
  return {splits.train.begin(), splits.train.begin() + static_cast<std::ptrdiff_t>(n)};
}

LabelGuard::LabelGuard(const KnowledgeGraph& kg, const EntitySplits& splits) : kg_(&kg) {
  open_.insert(splits.train.begin(), splits.train.end());
  open_.insert(splits.dev.begin(), splits.dev.end());
  test_.insert(splits.test.begin(), splits.test.end());
}

CategoryId LabelGuard::train_label(EntityId e) const {
  if (!open_.contains(e)) throw Error("label guard: entity " + std::to_string(e) + " is not in train/dev");
  return kg_->category(e).value();
}

CategoryId LabelGuard::test_label(EntityId e) const {
  if (!sealed_) throw Error("label guard: test labels are locked until training finishes");
  if (!test_.contains(e)) throw Error("label guard: entity " + std::to_string(e) + " is not in test");
  return kg_->category(e).value();
}

double classification_accuracy(const AdaptedModel& model, std::span<const EntityId> entities,
                               std::span<const CategoryId> labels) {
  if (entities.size() != labels.size()) throw Error("classification_accuracy: label count mismatch");
  if (entities.empty()) return 0.0;
  NoGradGuard no_grad;
  Tensor logits = category_logits(model.entity_embeddings(entities, 0, true), model.model().heads());
  const size_t c = logits.shape()[1];
  size_t hits = 0;
  for (size_t i = 0; i < entities.size(); ++i) {
    hits += argmax(logits.values().subspan(i * c, c)) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(entities.size());
}

ClassificationResult finetune_entity_classification(AdaptedModel& model, const EntitySplits& splits,
                                                    double fraction, uint64_t seed, LabelGuard& guard) {
  const TrainConfig& c = model.config();
  const std::vector<EntityId> train = training_subset(splits, fraction);
  std::vector<CategoryId> train_labels, dev_labels;
  for (EntityId e : train) train_labels.push_back(guard.train_label(e));
  for (EntityId e : splits.dev) dev_labels.push_back(guard.train_label(e));

  ParameterStore& store = model.model().store();
  ClassificationResult result;
  result.train_entities = train.size();
  result.dev_accuracy = -1.0;
  ParameterStore best;
  for (int64_t step = 0;; ++step) {
    if (step % c.eval_every == 0 || step == c.finetune_steps) {
      const double dev = splits.dev.empty() ? 0.0 : classification_accuracy(model, splits.dev, dev_labels);
      if (dev > result.dev_accuracy) {
        result.dev_accuracy = dev;
        result.best_step = step;
        best = store.clone();
      }
    }
    if (step == c.finetune_steps) break;
    store.zero_grad();
    Tensor rows = model.entity_embeddings(train, derive_seed(seed, {static_cast<uint64_t>(step)}), false);
    category_loss(rows, train_labels, model.model().heads()).backward();
    model.update(true);
  }
  model.model().load_parameters(best);
  guard.seal();
  std::vector<CategoryId> test_labels;
  for (EntityId e : splits.test) test_labels.push_back(guard.test_label(e));
  result.test_accuracy = classification_accuracy(model, splits.test, test_labels);
  return result;
}

std::vector<EntityId> qa_candidates(const AdaptedModel& model, const Question& question) {
  return k_hop_neighbors(model.graph(), question.topic, question.hops);
}

std::vector<double> qa_scores(const AdaptedModel& model, const Question& question,
                              std::span<const EntityId> candidates) {
  NoGradGuard no_grad;
  if (candidates.empty()) return {};
  Tensor cls = model.encode_text(std::span(&question.text, 1), 0);
  Tensor scores = ops::matmul_nt(cls, model.memory().retrieve(candidates));
  return {scores.values().begin(), scores.values().end()};
}

void finetune_kgqa(AdaptedModel& model, std::span<const Question> questions, int64_t steps, uint64_t seed) {
  // Questions whose candidate set still holds a gold answer.
  struct Usable {
    size_t question;
    std::vector<EntityId> candidates;
    size_t gold;
  };
  std::vector<Usable> usable;
  for (size_t i = 0; i < questions.size(); ++i) {
    std::vector<EntityId> cands = qa_candidates(model, questions[i]);
    auto gold = std::find(cands.begin(), cands.end(), questions[i].answer);
    if (gold == cands.end()) {
      gold = std::find_if(cands.begin(), cands.end(), [&](EntityId e) {
        return std::find(questions[i].answers.begin(), questions[i].answers.end(), e) !=
               questions[i].answers.end();
      });
    }
    if (gold == cands.end()) continue;
    const auto g = static_cast<size_t>(gold - cands.begin());
    usable.push_back({i, std::move(cands), g});
  }
  if (usable.empty()) throw Error("kgqa: no trainable questions");
  const size_t batch = std::min<size_t>(model.config().text_batch, usable.size());
  ParameterStore& store = model.model().store();
  for (int64_t step = 0; step < steps; ++step) {
    Rng rng = make_rng(seed, {0x9a, static_cast<uint64_t>(step)});
    std::vector<size_t> pick = sample_without_replacement(usable.size(), batch, rng);
    std::vector<AnnotatedSequence> texts;
    for (size_t i : pick) texts.push_back(questions[usable[i].question].text);
    store.zero_grad();
    Tensor cls = model.encode_text(texts, derive_seed(seed, {static_cast<uint64_t>(step)}));
    Tensor loss = Tensor::scalar(0.0);
    for (size_t b = 0; b < pick.size(); ++b) {
      const Usable& u = usable[pick[b]];
      Tensor logits = ops::matmul_nt(ops::slice_rows(cls, b, b + 1), model.memory().retrieve(u.candidates));
      loss = ops::add(loss, ops::cross_entropy(logits, u.gold));
    }
    ops::scale(loss, 1.0 / static_cast<double>(pick.size())).backward();
    model.update(false);
  }
}

QaResult eval_kgqa(const AdaptedModel& model, std::span<const Question> questions) {
  QaResult r;
  size_t hits = 0, candidate_total = 0;
  for (const Question& q : questions) {
    std::vector<EntityId> cands = qa_candidates(model, q);
    if (cands.empty()) {
      ++r.skipped;
      continue;
    }
    ++r.questions;
    candidate_total += cands.size();
    const bool has_gold = std::any_of(cands.begin(), cands.end(), [&](EntityId e) {
      return std::find(q.answers.begin(), q.answers.end(), e) != q.answers.end();
    });
    if (!has_gold) {
      ++r.gold_missing;
      continue;
    }
    std::vector<double> scores = qa_scores(model, q, cands);
    const EntityId top = cands[argmax(scores)];
    hits += std::find(q.answers.begin(), q.answers.end(), top) != q.answers.end();
  }
  if (r.questions > 0) {
    r.hits_at_1 = static_cast<double>(hits) / static_cast<double>(r.questions);
    r.mean_candidates = static_cast<double>(candidate_total) / static_cast<double>(r.questions);
    r.chance = 1.0 / r.mean_candidates;
  }
  return r;
}

AnnotatedSequence pair_sequence(const AnnotatedSequence& query, const AnnotatedSequence& support, size_t max_len,
                                bool* truncated) {
  if (query.tokens.size() < 2 || support.tokens.size() < 2 || max_len < 3) {
    throw Error("pair_sequence: sequences must carry [CLS] and [EOS]");
  }
  AnnotatedSequence out;
  out.tokens = query.tokens;
  out.mentions = query.mentions;
  const size_t offset = out.tokens.size() - 1;
  out.tokens.insert(out.tokens.end(), support.tokens.begin() + 1, support.tokens.end());
  for (Mention m : support.mentions) {
    m.start += offset;
    m.end += offset;
    out.mentions.push_back(m);
  }
  const bool cut = out.tokens.size() > max_len;
  if (cut) {
    out.tokens.resize(max_len);
    out.tokens.back() = kEosToken;
    std::erase_if(out.mentions, [&](const Mention& m) { return m.end >= max_len - 1; });
  }
  if (truncated) *truncated = cut;
  return out;
}

namespace {

// Pair sequences for every (query, support) combination, query-major.
std::vector<AnnotatedSequence> build_pairs(const AdaptedModel& model, std::span<const AnnotatedSequence> queries,
                                           std::span<const AnnotatedSequence> supports, size_t* truncated) {
  std::vector<AnnotatedSequence> out;
  for (const AnnotatedSequence& q : queries) {
    for (const AnnotatedSequence& s : supports) {
      bool cut = false;
      out.push_back(pair_sequence(q, s, model.config().max_len, &cut));
      if (truncated && cut) ++*truncated;
    }
  }
  return out;
}

}  // namespace

std::vector<double> pair_scores(const AdaptedModel& model, const AnnotatedSequence& query,
                                std::span<const AnnotatedSequence> supports, size_t* truncated) {
  NoGradGuard no_grad;
  if (supports.empty()) return {};
  std::vector<AnnotatedSequence> pairs = build_pairs(model, std::span(&query, 1), supports, truncated);
  Tensor s = model.pair_head(model.encode_text(pairs, 0));
  return {s.values().begin(), s.values().end()};
}

void train_pair_head(AdaptedModel& model, const std::vector<RelationInstance>& instances,
                     const std::vector<Episode>& episodes, int64_t steps, uint64_t seed) {
  if (episodes.empty()) throw Error("few-shot: no training episodes");
  ParameterStore& store = model.model().store();
  for (int64_t step = 0; step < steps; ++step) {
    const Episode& ep = episodes[static_cast<size_t>(step) % episodes.size()];
    const size_t n = ep.classes.size();
    const size_t k = ep.support.front().size();
    std::vector<AnnotatedSequence> supports, queries;
    for (const auto& cls : ep.support) {
      for (size_t i : cls) supports.push_back(instances.at(i).text);
    }
    for (size_t i : ep.queries) queries.push_back(instances.at(i).text);
    std::vector<AnnotatedSequence> pairs = build_pairs(model, queries, supports, nullptr);
    store.zero_grad();
    Tensor scores = model.pair_head(model.encode_text(pairs, derive_seed(seed, {static_cast<uint64_t>(step)})));
    // Mean over the K supports of each class: (Q*N x K) -> (Q*N x 1) -> (Q x N).
    Tensor grouped = ops::reshape(scores, {queries.size() * n, k});
    Tensor class_scores = ops::reshape(ops::scale(ops::matmul(grouped, Tensor::full({k, 1}, 1.0)),
                                                  1.0 / static_cast<double>(k)),
                                       {queries.size(), n});
    ops::cross_entropy(class_scores, ep.query_labels).backward();
    model.update(false);
  }
}

FewShotResult eval_fewshot_pair(const AdaptedModel& model, const std::vector<RelationInstance>& instances,
                                const std::vector<Episode>& episodes) {
  FewShotResult r;
  size_t hits = 0;
  for (const Episode& ep : episodes) {
    std::vector<AnnotatedSequence> supports;
    for (const auto& cls : ep.support) {
      for (size_t i : cls) supports.push_back(instances.at(i).text);
    }
    const size_t k = ep.support.front().size();
    for (size_t qi = 0; qi < ep.queries.size(); ++qi) {
      std::vector<double> s = pair_scores(model, instances.at(ep.queries[qi]).text, supports, &r.truncated);
      std::vector<double> per_class(ep.classes.size(), 0.0);
      for (size_t c = 0; c < per_class.size(); ++c) {
        for (size_t j = 0; j < k; ++j) per_class[c] += s[c * k + j];
        per_class[c] /= static_cast<double>(k);
      }
      hits += argmax(per_class) == ep.query_labels[qi];
      ++r.queries;
    }
  }
  if (r.queries > 0) r.accuracy = static_cast<double>(hits) / static_cast<double>(r.queries);
  return r;
}

EvalReport run_ablation_grid(const TrainConfig& config, const ModelDims& dims, const ParameterStore& pretrained,
                             const KnowledgeGraph& unseen, std::span<const double> fractions,
                             std::span<const uint64_t> seeds) {
  TrainConfig ft = config;
  ft.relation_mode = RelationMode::kContext;
  EvalReport report;
  for (uint64_t seed : seeds) {
    const EntitySplits splits = split_entities(unseen, 0.2, 0.2, seed);
    for (const AblationConfig& a : ablation_grid()) {
      for (double fraction : fractions) {
        const ParameterStore* weights = a.weights == WeightsInit::kPretrained ? &pretrained : nullptr;
        AdaptedModel model(ft, dims, weights, unseen, a.memory, seed);
        LabelGuard guard(unseen, splits);
        const ClassificationResult r = finetune_entity_classification(model, splits, fraction, seed, guard);
        const std::string metric = percent_label(fraction);
        report.push_back({"entity_classification", a.id(), "dev", metric, r.dev_accuracy, seed});
        report.push_back({"entity_classification", a.id(), "test", metric, r.test_accuracy, seed});
      }
    }
  }
  return report;
}

}  // namespace kgjoint

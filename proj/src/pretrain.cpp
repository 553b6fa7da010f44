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

#include "kgjoint/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "kgjoint/ops.hpp"
#include "text_util.hpp"

namespace kgjoint {

namespace {

constexpr size_t kNoEntity = std::numeric_limits<size_t>::max();

// Masked text batch with per-sequence bookkeeping.
struct TextBatch {
  TokenBatch tokens;
  std::vector<size_t> target_rows;
  std::vector<TokenId> target_tokens;
  // Mentions carry sequence indices in `sequence`.
  std::vector<FusionSpan> visible;
  std::vector<EntityId> visible_entities;
  std::vector<FusionSpan> masked;
  std::vector<EntityId> masked_entities;
};

TextBatch build_text_batch(std::span<const AnnotatedSequence> corpus, std::span<const size_t> ids,
                           double token_rate, double mention_rate, size_t vocab_size, size_t max_len,
                           uint64_t seed) {
  TextBatch out;
  std::vector<TokenSeq> corrupted;
  std::vector<std::vector<TokenTarget>> targets;
  for (size_t i = 0; i < ids.size(); ++i) {
    const AnnotatedSequence& seq = corpus[ids[i]];
    TokenMasking tm = mask_tokens(seq.tokens, token_rate, vocab_size, derive_seed(seed, {1, i}));
    MentionMasking mm = mask_mentions(seq.mentions, mention_rate, derive_seed(seed, {2, i}));
    corrupted.push_back(std::move(tm.corrupted));
    targets.push_back(std::move(tm.targets));
    for (const Mention& m : mm.visible) {
      out.visible.push_back({i, m.start, m.end, 0});
      out.visible_entities.push_back(m.entity);
    }
    for (const Mention& m : mm.masked) {
      out.masked.push_back({i, m.start, m.end, 0});
      out.masked_entities.push_back(m.entity);
    }
  }
  out.tokens = make_batch(corrupted, max_len);
  for (size_t i = 0; i < targets.size(); ++i) {
    for (const TokenTarget& t : targets[i]) {
      out.target_rows.push_back(out.tokens.row(i, t.position));
      out.target_tokens.push_back(t.original);
    }
  }
  return out;
}

std::vector<EntityId> sorted_unique(std::vector<EntityId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

size_t index_of(const std::vector<EntityId>& sorted, EntityId e) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), e);
  if (it == sorted.end() || *it != e) throw Error("internal: entity missing from sorted set");
  return static_cast<size_t>(it - sorted.begin());
}

// (Z_s + Z_o) / 2 for each span.
Tensor span_average(const Tensor& z, const TokenBatch& batch, std::span<const FusionSpan> spans) {
  std::vector<size_t> s, o;
  for (const FusionSpan& m : spans) {
    s.push_back(batch.row(m.sequence, m.start));
    o.push_back(batch.row(m.sequence, m.end));
  }
  return ops::scale(ops::add(ops::gather_rows(z, s), ops::gather_rows(z, o)), 0.5);
}

}  // namespace

PretrainData prepare_data(const World& world, const TrainConfig& config) {
  PretrainData d;
  d.vocab_size = world.vocab.size();
  const size_t n = world.kg.entity_count();
  std::vector<size_t> new_id(n, kNoEntity);
  if (config.unseen_fraction > 0.0) {
    UnseenSplit split = split_unseen(world.kg, config.unseen_fraction, world.config.seed);
    d.kg = std::move(split.pretrain);
    d.unseen = std::move(split.unseen);
    d.pretrain_ids = std::move(split.pretrain_ids);
    d.unseen_ids = std::move(split.unseen_ids);
  } else {
    d.kg = world.kg;
    for (EntityId e = 0; e < n; ++e) d.pretrain_ids.push_back(e);
  }
  for (size_t i = 0; i < d.pretrain_ids.size(); ++i) new_id[d.pretrain_ids[i]] = i;

  std::vector<AnnotatedSequence> kept;
  for (const AnnotatedSequence& seq : world.corpus) {
    AnnotatedSequence remapped = seq;
    bool ok = true;
    for (Mention& m : remapped.mentions) {
      if (new_id[m.entity] == kNoEntity) {
        ok = false;
        break;
      }
      m.entity = new_id[m.entity];
    }
    if (ok) kept.push_back(std::move(remapped));
  }
  // Entity descriptions are ordinary pre-training text too.
  for (EntityId e = 0; e < d.kg.entity_count(); ++e) {
    const Span& m = d.kg.description_mention(e);
    std::vector<Mention> self{{e, m.start, m.end}};
    DescriptionWindow w = description_window(d.kg.description(e), self, config.max_len);
    AnnotatedSequence seq{std::move(w.tokens), {}};
    if (w.mention.start == m.start && w.mention.end == m.end) seq.mentions.push_back({e, m.start, m.end});
    kept.push_back(std::move(seq));
  }
  if (kept.empty()) throw Error("prepare_data: no sequence survives the unseen split");
  const size_t heldout = config.heldout_fraction > 0.0 ? masked_count(config.heldout_fraction, kept.size()) : 0;
  if (heldout >= kept.size()) throw Error("prepare_data: held-out fraction leaves no training text");
  Rng rng = make_rng(world.config.seed, {0x4e1d});
  std::vector<size_t> order(kept.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<bool> is_heldout(kept.size(), false);
  for (size_t i = 0; i < heldout; ++i) is_heldout[order[i]] = true;
  for (size_t i = 0; i < kept.size(); ++i) {
    (is_heldout[i] ? d.heldout : d.train).push_back(std::move(kept[i]));
  }
  return d;
}

Tensor category_loss(const Tensor& entity_rows, std::span<const CategoryId> labels, const TaskHeads& heads) {
  if (labels.empty()) return Tensor::scalar(0.0);
  Tensor logits = ops::add_row(ops::matmul(entity_rows, heads.category_w), heads.category_b);
  return ops::cross_entropy(logits, labels);
}

Tensor relation_loss(const Tensor& head_rows, const Tensor& tail_rows, std::span<const RelationId> relations,
                     const TaskHeads& heads) {
  if (relations.empty()) return Tensor::scalar(0.0);
  const Tensor parts[] = {head_rows, tail_rows};
  Tensor logits = ops::add_row(ops::matmul(ops::concat_cols(parts), heads.relation_w), heads.relation_b);
  return ops::cross_entropy(logits, relations);
}

Tensor token_loss(const Tensor& target_rows, std::span<const TokenId> originals, const TaskHeads& heads) {
  if (originals.empty()) return Tensor::scalar(0.0);
  Tensor logits = ops::add_row(ops::matmul(target_rows, heads.token_w), heads.token_b);
  return ops::cross_entropy(logits, originals);
}

Tensor entity_projection(const Tensor& mention_rows, const TaskHeads& heads) {
  return ops::matmul(ops::relu(ops::matmul(mention_rows, heads.entity_w1)), heads.entity_w2);
}

Tensor entity_loss(const Tensor& queries, const Tensor& candidates, size_t group) {
  Tensor scores = ops::grouped_row_dot(queries, candidates, group);
  std::vector<size_t> gold(queries.rows(), 0);
  return ops::cross_entropy(scores, gold);
}

std::vector<EntityId> entity_candidates(const KnowledgeGraph& kg, EntityId gold, size_t count, Rng& rng) {
  const size_t n = kg.entity_count();
  if (gold >= n) throw Error("entity_candidates: gold entity out of range");
  if (count == 0) throw Error("entity_candidates: count must be positive");
  const size_t total = std::min(count, n);
  std::vector<EntityId> out{gold};
  std::set<EntityId> used{gold};
  std::vector<EntityId> neighbors = kg.adjacent_entities(gold);
  shuffle(neighbors, rng);
  for (EntityId e : neighbors) {
    if (out.size() >= total) break;
    if (used.insert(e).second) out.push_back(e);
  }
  while (out.size() < total) {
    const EntityId e = uniform_index(rng, n);
    if (used.insert(e).second) out.push_back(e);
  }
  return out;
}

std::string metrics_header() { return "step,loss_total,loss_c,loss_r,loss_t,loss_e,lr_lm,lr_km,refreshed"; }

std::string metrics_row(const StepReport& r) {
  using internal::format_double;
  return std::to_string(r.step) + ',' + format_double(r.total) + ',' + format_double(r.category) + ',' +
         format_double(r.relation) + ',' + format_double(r.token) + ',' + format_double(r.entity) + ',' +
         format_double(r.lr_lm) + ',' + format_double(r.lr_km) + ',' + (r.refreshed ? "1" : "0");
}

Trainer::Trainer(const TrainConfig& config, const PretrainData& data) : config_(config), data_(&data) {
  config_.validate();
  if (data.kg.entity_count() == 0 || data.train.empty()) throw Error("trainer: empty training data");
  model_ = std::make_unique<JointModel>(config_, data.dims(), config_.seed);
  if (config_.use_memory) {
    memory_ = EntityMemory::build(model_->lm(), data.kg, config_.memory);
  }
  if (config_.relation_mode == RelationMode::kContext) {
    relation_memory_ = build_relation_memory(model_->lm(), data.kg);
  }
}

void Trainer::restore(int64_t step, EntityMemory memory) {
  if (step < 0) throw Error("trainer: negative step");
  if (config_.use_memory && (memory.rows() != data_->kg.entity_count() ||
                             memory.width() != config_.width)) {
    throw Error("trainer: restored memory does not match the graph");
  }
  step_ = step;
  memory_ = std::move(memory);
}

Trainer::Losses Trainer::compute_losses(int64_t step, int phase) const {
  const KnowledgeGraph& kg = data_->kg;
  const JointModel& m = *model_;
  const TaskHeads& heads = m.heads();
  const TrainConfig& c = config_;
  const uint64_t seed = derive_seed(c.seed, {static_cast<uint64_t>(step)});
  const bool km_losses = phase != 2 && (c.loss_category || c.loss_relation);
  const bool lm_losses = phase != 1 && (c.loss_token || c.loss_entity);

  // Knowledge-side batch: random walks from sampled roots.
  std::vector<EntityId> walk_batch;
  if (km_losses) {
    Rng rng = make_rng(seed, {0x1});
    std::vector<EntityId> roots = sample_without_replacement(kg.entity_count(),
                                                             std::min(c.roots, kg.entity_count()), rng);
    walk_batch = random_walk(kg, roots, c.walk_length, derive_seed(seed, {0x2})).batch;
  }

  // Language-side batch.
  TextBatch text;
  if (lm_losses) {
    Rng rng = make_rng(seed, {0x3});
    std::vector<size_t> ids = sample_without_replacement(data_->train.size(),
                                                         std::min(c.text_batch, data_->train.size()), rng);
    text = build_text_batch(data_->train, ids, c.token_mask_rate, c.mention_mask_rate, m.dims().vocab_size,
                            c.max_len, derive_seed(seed, {0x4}));
  }

  std::vector<EntityId> targets = walk_batch;
  targets.insert(targets.end(), text.visible_entities.begin(), text.visible_entities.end());
  targets = sorted_unique(std::move(targets));

  // Candidate sets for masked entities.
  const size_t group = std::min(c.entity_candidates, kg.entity_count());
  std::vector<EntityId> candidates;
  if (lm_losses && c.loss_entity) {
    Rng rng = make_rng(seed, {0x5});
    for (EntityId gold : text.masked_entities) {
      std::vector<EntityId> set = entity_candidates(kg, gold, c.entity_candidates, rng);
      candidates.insert(candidates.end(), set.begin(), set.end());
    }
  }

  Subgraph sg;
  if (!targets.empty()) sg = sample_neighborhood(kg, targets, c.hops, c.fanout, derive_seed(seed, {0x6}));

  // Initial entity embeddings: memory snapshot, or a fresh encoding that
  // records history when the memory is disabled.
  Tensor e0, candidate_rows;
  if (c.use_memory) {
    if (!targets.empty()) e0 = memory_.retrieve(sg.layers.back());
    if (!candidates.empty()) candidate_rows = memory_.retrieve(candidates);
  } else {
    std::vector<EntityId> needed = candidates;
    if (!targets.empty()) needed.insert(needed.end(), sg.layers.back().begin(), sg.layers.back().end());
    needed = sorted_unique(std::move(needed));
    if (!needed.empty()) {
      Tensor encoded = encode_entity_rows(m.lm(), kg, needed);
      auto rows_for = [&](const std::vector<EntityId>& ids) {
        std::vector<size_t> rows;
        for (EntityId e : ids) rows.push_back(index_of(needed, e));
        return ops::gather_rows(encoded, rows);
      };
      if (!targets.empty()) e0 = rows_for(sg.layers.back());
      if (!candidates.empty()) candidate_rows = rows_for(candidates);
    }
  }

  Tensor entity_km;
  if (!targets.empty()) entity_km = m.km().forward(sg, e0, relation_memory_);
  auto km_row = [&](EntityId e) { return sg.target_rows[index_of(targets, e)]; };

  Losses out;
  out.category = Tensor::scalar(0.0);
  out.relation = Tensor::scalar(0.0);
  out.token = Tensor::scalar(0.0);
  out.entity = Tensor::scalar(0.0);

  if (km_losses && c.loss_category) {
    std::vector<size_t> rows;
    std::vector<CategoryId> labels;
    for (EntityId e : walk_batch) {
      if (kg.category(e)) {
        rows.push_back(km_row(e));
        labels.push_back(*kg.category(e));
      }
    }
    if (!rows.empty()) out.category = category_loss(ops::gather_rows(entity_km, rows), labels, heads);
  }
  if (km_losses && c.loss_relation) {
    std::vector<Triplet> among;
    for (EntityId h : walk_batch) {
      for (const Neighbor& nb : neighbors(kg, h)) {
        if (std::binary_search(walk_batch.begin(), walk_batch.end(), nb.entity)) {
          among.push_back({h, nb.relation, nb.entity});
        }
      }
    }
    if (among.size() > c.max_relation_triplets) {
      Rng rng = make_rng(seed, {0x7});
      shuffle(among, rng);
      among.resize(c.max_relation_triplets);
    }
    if (!among.empty()) {
      std::vector<size_t> h_rows, t_rows;
      std::vector<RelationId> labels;
      for (const Triplet& t : among) {
        h_rows.push_back(km_row(t.head));
        t_rows.push_back(km_row(t.tail));
        labels.push_back(t.relation);
      }
      out.relation = relation_loss(ops::gather_rows(entity_km, h_rows), ops::gather_rows(entity_km, t_rows),
                                   labels, heads);
    }
  }

  if (lm_losses) {
    std::vector<FusionSpan> spans = text.visible;
    for (size_t i = 0; i < spans.size(); ++i) spans[i].embedding_row = km_row(text.visible_entities[i]);
    Tensor z = m.lm().lower_forward(text.tokens);
    Tensor fused = spans.empty() ? m.lm().fuse(z, text.tokens, {}, z)
                                 : m.lm().fuse(z, text.tokens, spans, entity_km);
    Tensor z_lm = m.lm().upper_forward(fused, text.tokens);
    if (c.loss_token && !text.target_rows.empty()) {
      out.token = token_loss(ops::gather_rows(z_lm, text.target_rows), text.target_tokens, heads);
    }
    if (c.loss_entity && !text.masked.empty()) {
      Tensor q = entity_projection(span_average(z_lm, text.tokens, text.masked), heads);
      out.entity = entity_loss(q, candidate_rows, group);
    }
  }

  out.total = ops::add(ops::add(out.category, out.relation), ops::add(out.token, out.entity));
  return out;
}

StepReport Trainer::step() {
  int phase = 0;
  if (config_.alternate_phases) phase = step_ % 2 == 0 ? 1 : 2;
  model_->store().zero_grad();
  Losses losses = compute_losses(step_, phase);
  StepReport r;
  r.step = step_;
  r.total = losses.total.item();
  r.category = losses.category.item();
  r.relation = losses.relation.item();
  r.token = losses.token.item();
  r.entity = losses.entity.item();
  if (!std::isfinite(r.total)) {
    throw Error("non-finite loss at step " + std::to_string(step_) + ": " + metrics_row(r));
  }
  losses.total.backward();
  r.lr_lm = lr_at_step(config_.lm_schedule(), step_);
  r.lr_km = lr_at_step(config_.km_schedule(), step_);
  apply_updates(model_->store(), r.lr_lm, r.lr_km, config_.adam);
  if (config_.use_memory) r.refreshed = memory_.maybe_refresh(model_->lm(), data_->kg);
  ++step_;
  return r;
}

double Trainer::masked_entity_hits(std::span<const AnnotatedSequence> sequences, uint64_t seed) const {
  if (!config_.use_memory) throw Error("masked_entity_hits: needs the entity memory");
  const KnowledgeGraph& kg = data_->kg;
  const JointModel& m = *model_;
  NoGradGuard no_grad;
  size_t hits = 0, total = 0;
  const size_t chunk = 32;
  for (size_t begin = 0; begin < sequences.size(); begin += chunk) {
    std::vector<size_t> ids;
    for (size_t i = begin; i < std::min(sequences.size(), begin + chunk); ++i) ids.push_back(i);
    const uint64_t s = derive_seed(seed, {begin});
    TextBatch text = build_text_batch(sequences, ids, config_.token_mask_rate, config_.mention_mask_rate,
                                      m.dims().vocab_size, config_.max_len, s);
    if (text.masked.empty()) continue;
    std::vector<EntityId> targets = sorted_unique(text.visible_entities);
    Tensor entity_km;
    Subgraph sg;
    if (!targets.empty()) {
      sg = sample_neighborhood(kg, targets, config_.hops, config_.fanout, derive_seed(s, {0x6}));
      entity_km = m.km().forward(sg, memory_.retrieve(sg.layers.back()), relation_memory_);
    }
    std::vector<FusionSpan> spans = text.visible;
    for (size_t i = 0; i < spans.size(); ++i) {
      spans[i].embedding_row = sg.target_rows[index_of(targets, text.visible_entities[i])];
    }
    Tensor z = m.lm().lower_forward(text.tokens);
    Tensor fused = spans.empty() ? m.lm().fuse(z, text.tokens, {}, z)
                                 : m.lm().fuse(z, text.tokens, spans, entity_km);
    Tensor z_lm = m.lm().upper_forward(fused, text.tokens);
    Tensor q = entity_projection(span_average(z_lm, text.tokens, text.masked), m.heads());
    Rng rng = make_rng(s, {0x5});
    std::vector<EntityId> candidates;
    for (EntityId gold : text.masked_entities) {
      std::vector<EntityId> set = entity_candidates(kg, gold, config_.entity_candidates, rng);
      candidates.insert(candidates.end(), set.begin(), set.end());
    }
    const size_t group = std::min(config_.entity_candidates, kg.entity_count());
    Tensor scores = ops::grouped_row_dot(q, memory_.retrieve(candidates), group);
    for (size_t i = 0; i < text.masked.size(); ++i) {
      bool hit = true;
      for (size_t j = 1; j < group; ++j) hit = hit && scores.at(i, 0) > scores.at(i, j);
      hits += hit;
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace kgjoint

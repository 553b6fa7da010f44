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

#include <cmath>
#include <set>

#include "kgjoint/gradcheck.hpp"
#include "kgjoint/ops.hpp"
#include "kgjoint/pretrain.hpp"

namespace kgjoint {
namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix random_matrix(size_t rows, size_t cols, Rng& rng) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m) {
    for (double& v : row) v = standard_normal(rng);
  }
  return m;
}

std::vector<double> random_vector(size_t n, Rng& rng) { return random_matrix(1, n, rng)[0]; }

Tensor to_tensor(const Matrix& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::from({m.size(), m.front().size()}, flat);
}

Tensor to_tensor(const std::vector<double>& v) { return Tensor::from({v.size()}, v); }

// Mean over rows of log-sum-exp minus the gold logit.
double reference_ce(const Matrix& logits, const std::vector<size_t>& gold) {
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    double mx = -INFINITY;
    for (double v : logits[i]) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : logits[i]) s += std::exp(v - mx);
    total += mx + std::log(s) - logits[i][gold[i]];
  }
  return total / static_cast<double>(logits.size());
}

Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  Matrix y(x.size(), std::vector<double>(w.front().size()));
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t o = 0; o < y[i].size(); ++o) {
      double s = b.empty() ? 0.0 : b[o];
      for (size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][o];
      y[i][o] = s;
    }
  }
  return y;
}

TrainConfig small_config() {
  TrainConfig c = grad_check_config();
  c.use_memory = true;
  c.unseen_fraction = 0.2;
  c.heldout_fraction = 0.1;
  c.steps = 40;
  return c;
}

TEST(PretrainTest, HeadLossesMatchReferenceCrossEntropy) {
  Rng rng = make_rng(1);
  const size_t f = 5, rows = 4, categories = 3, relations = 4, vocab = 7;
  const Matrix x = random_matrix(rows, f, rng);
  const Matrix y = random_matrix(rows, f, rng);
  TaskHeads heads;
  const Matrix cw = random_matrix(f, categories, rng);
  const auto cb = random_vector(categories, rng);
  const Matrix rw = random_matrix(2 * f, relations, rng);
  const auto rb = random_vector(relations, rng);
  const Matrix tw = random_matrix(f, vocab, rng);
  const auto tb = random_vector(vocab, rng);
  heads.category_w = to_tensor(cw);
  heads.category_b = to_tensor(cb);
  heads.relation_w = to_tensor(rw);
  heads.relation_b = to_tensor(rb);
  heads.token_w = to_tensor(tw);
  heads.token_b = to_tensor(tb);

  const std::vector<size_t> cats{2, 0, 1, 2};
  EXPECT_NEAR(category_loss(to_tensor(x), cats, heads).item(), reference_ce(affine(x, cw, cb), cats), 1e-12);

  Matrix xy = x;
  for (size_t i = 0; i < rows; ++i) xy[i].insert(xy[i].end(), y[i].begin(), y[i].end());
  const std::vector<size_t> rels{3, 1, 0, 3};
  EXPECT_NEAR(relation_loss(to_tensor(x), to_tensor(y), rels, heads).item(),
              reference_ce(affine(xy, rw, rb), rels), 1e-12);

  const std::vector<size_t> toks{6, 0, 5, 2};
  EXPECT_NEAR(token_loss(to_tensor(x), toks, heads).item(), reference_ce(affine(x, tw, tb), toks), 1e-12);

  EXPECT_EQ(category_loss(to_tensor(x), {}, heads).item(), 0.0);
}

TEST(PretrainTest, EntityLossScoresGoldFirstCandidates) {
  Rng rng = make_rng(2);
  const size_t f = 6, queries = 3, group = 4;
  const Matrix mentions = random_matrix(queries, f, rng);
  const Matrix w1 = random_matrix(f, f, rng);
  const Matrix w2 = random_matrix(f, f, rng);
  const Matrix cands = random_matrix(queries * group, f, rng);
  TaskHeads heads;
  heads.entity_w1 = to_tensor(w1);
  heads.entity_w2 = to_tensor(w2);
  Tensor q = entity_projection(to_tensor(mentions), heads);

  Matrix hidden = affine(mentions, w1, {});
  for (auto& row : hidden) {
    for (double& v : row) v = std::max(v, 0.0);
  }
  const Matrix expected_q = affine(hidden, w2, {});
  for (size_t i = 0; i < queries; ++i) {
    for (size_t j = 0; j < f; ++j) EXPECT_NEAR(q.at(i, j), expected_q[i][j], 1e-12);
  }
  Matrix scores(queries, std::vector<double>(group));
  for (size_t i = 0; i < queries; ++i) {
    for (size_t c = 0; c < group; ++c) {
      for (size_t j = 0; j < f; ++j) scores[i][c] += expected_q[i][j] * cands[i * group + c][j];
    }
  }
  EXPECT_NEAR(entity_loss(q, to_tensor(cands), group).item(), reference_ce(scores, {0, 0, 0}), 1e-12);
}

TEST(PretrainTest, EntityCandidatesPutGoldFirstThenNeighbors) {
  World w = generate_world(small_config().world);
  const KnowledgeGraph& kg = w.kg;
  Rng rng = make_rng(3);
  for (EntityId gold = 0; gold < kg.entity_count(); ++gold) {
    auto c = entity_candidates(kg, gold, 10, rng);
    ASSERT_EQ(c.size(), 10u);
    EXPECT_EQ(c[0], gold);
    EXPECT_EQ(std::set<EntityId>(c.begin(), c.end()).size(), c.size());
    const auto adj = kg.adjacent_entities(gold);
    const size_t expect_neighbors = std::min<size_t>(adj.size(), 9);
    for (size_t i = 1; i <= expect_neighbors; ++i) {
      EXPECT_TRUE(std::binary_search(adj.begin(), adj.end(), c[i]));
    }
  }
  EXPECT_EQ(entity_candidates(kg, 0, 1000, rng).size(), kg.entity_count());
  EXPECT_THROW(entity_candidates(kg, kg.entity_count(), 5, rng), Error);
}

TEST(PretrainTest, PreparedDataKeepsUnseenEntitiesOut) {
  const TrainConfig config = small_config();
  World w = generate_world(config.world);
  PretrainData d = prepare_data(w, config);
  EXPECT_EQ(d.kg.entity_count() + d.unseen.entity_count(), w.kg.entity_count());
  EXPECT_EQ(d.unseen_ids.size(), d.unseen.entity_count());
  std::set<EntityId> unseen(d.unseen_ids.begin(), d.unseen_ids.end());
  size_t surviving = 0;
  for (const AnnotatedSequence& seq : w.corpus) {
    bool ok = true;
    for (const Mention& m : seq.mentions) ok = ok && !unseen.count(m.entity);
    surviving += ok;
  }
  const size_t total = surviving + d.kg.entity_count();
  EXPECT_EQ(d.train.size() + d.heldout.size(), total);
  EXPECT_EQ(d.heldout.size(), masked_count(config.heldout_fraction, total));
  for (const auto* part : {&d.train, &d.heldout}) {
    for (const AnnotatedSequence& seq : *part) {
      EXPECT_NO_THROW(validate(seq, d.kg.entity_count()));
      for (const Mention& m : seq.mentions) {
        const EntityId original = d.pretrain_ids[m.entity];
        EXPECT_FALSE(unseen.count(original));
      }
    }
  }
  EXPECT_EQ(d.dims().vocab_size, w.vocab.size());
}

TEST(PretrainTest, TrainingIsDeterministicAndReportsConsistentLosses) {
  const TrainConfig config = small_config();
  World w = generate_world(config.world);
  PretrainData d = prepare_data(w, config);
  Trainer a(config, d), b(config, d);
  for (int i = 0; i < 12; ++i) {
    StepReport ra = a.step();
    StepReport rb = b.step();
    EXPECT_EQ(ra, rb);
    EXPECT_EQ(ra.step, i);
    EXPECT_NEAR(ra.total, ra.category + ra.relation + ra.token + ra.entity, 1e-12);
    EXPECT_GT(ra.token, 0.0);
    EXPECT_EQ(ra.refreshed, i == 9);
  }
  EXPECT_TRUE(a.memory() == b.memory());
  for (const auto& [name, p] : a.model().store().all()) {
    const auto other = b.model().store().get(name).values();
    EXPECT_TRUE(std::equal(other.begin(), other.end(), p.tensor.values().begin())) << name;
  }
  const double hits = a.masked_entity_hits(d.heldout, 7);
  EXPECT_GE(hits, 0.0);
  EXPECT_LE(hits, 1.0);
  EXPECT_EQ(hits, b.masked_entity_hits(d.heldout, 7));
}

TEST(PretrainTest, LossSwitchesAndPhasesSilenceTerms) {
  TrainConfig config = small_config();
  config.loss_token = false;
  config.loss_relation = false;
  World w = generate_world(config.world);
  PretrainData d = prepare_data(w, config);
  Trainer t(config, d);
  StepReport r = t.step();
  EXPECT_EQ(r.token, 0.0);
  EXPECT_EQ(r.relation, 0.0);
  EXPECT_GT(r.category, 0.0);

  TrainConfig alt = small_config();
  alt.alternate_phases = true;
  Trainer u(alt, d);
  StepReport even = u.step();
  EXPECT_EQ(even.token, 0.0);
  EXPECT_EQ(even.entity, 0.0);
  EXPECT_GT(even.category, 0.0);
  StepReport odd = u.step();
  EXPECT_EQ(odd.category, 0.0);
  EXPECT_EQ(odd.relation, 0.0);
  EXPECT_GT(odd.token, 0.0);
}

TEST(PretrainTest, ComputeLossesLeavesStateUntouched) {
  const TrainConfig config = small_config();
  World w = generate_world(config.world);
  PretrainData d = prepare_data(w, config);
  Trainer t(config, d);
  const double first = t.compute_losses(3).total.item();
  EXPECT_EQ(t.compute_losses(3).total.item(), first);
  EXPECT_EQ(t.global_step(), 0);
}

TEST(PretrainTest, MetricsFormat) {
  EXPECT_EQ(metrics_header(), "step,loss_total,loss_c,loss_r,loss_t,loss_e,lr_lm,lr_km,refreshed");
  StepReport r;
  r.step = 4;
  r.total = 1.5;
  r.refreshed = true;
  const std::string row = metrics_row(r);
  EXPECT_EQ(row.substr(0, 6), "4,1.5,");
  EXPECT_EQ(row.back(), '1');
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
}

}  // namespace
}  // namespace kgjoint

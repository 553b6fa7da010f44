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

#include "kgjoint/language.hpp"
#include "kgjoint/ops.hpp"
#include "oracles.hpp"

namespace kgjoint {
namespace {

using namespace oracle;

LanguageConfig small_config() {
  LanguageConfig c;
  c.vocab_size = 30;
  c.width = 12;
  c.heads = 3;
  c.lower_layers = 2;
  c.upper_layers = 1;
  c.max_len = 10;
  c.init_std = 0.3;
  return c;
}

std::vector<TokenSeq> sample_sequences() {
  return {{kClsToken, 7, 8, 9, 10, 11, kEosToken},
          {kClsToken, 12, 13, kEosToken},
          {kClsToken, 20, 21, 22, 23, 24, 25, 26, kEosToken}};
}

struct Fixture {
  LanguageConfig config = small_config();
  ParameterStore store;
  LanguageModule lm;
  Fixture() {
    Rng rng = make_rng(1);
    lm = LanguageModule(config, store, rng);
    randomize(store, 2);
  }
};

void expect_rows_match(const Tensor& actual, const TokenBatch& batch, size_t seq, const Matrix& expected,
                       double tol) {
  for (size_t p = 0; p < expected.size(); ++p) {
    for (size_t j = 0; j < expected[p].size(); ++j) {
      EXPECT_NEAR(actual.at(batch.row(seq, p), j), expected[p][j], tol) << "seq " << seq << " pos " << p;
    }
  }
}

TEST(LanguageTest, MakeBatchPadsAndMasks) {
  auto seqs = sample_sequences();
  TokenBatch b = make_batch(seqs, 10);
  EXPECT_EQ(b.batch, 3u);
  EXPECT_EQ(b.seq_len, 9u);
  EXPECT_EQ(b.lengths, (std::vector<size_t>{7, 4, 9}));
  EXPECT_EQ(b.tokens[b.row(1, 3)], kEosToken);
  EXPECT_EQ(b.tokens[b.row(1, 4)], kPadToken);
  EXPECT_EQ(b.mask[b.row(1, 3)], 1);
  EXPECT_EQ(b.mask[b.row(1, 4)], 0);
  EXPECT_THROW(make_batch(seqs, 8), Error);
  EXPECT_THROW(make_batch(std::vector<TokenSeq>{}, 8), Error);
}

TEST(LanguageTest, SplitStackEqualsMonolithicReference) {
  Fixture fx;
  auto seqs = sample_sequences();
  TokenBatch batch = make_batch(seqs, fx.config.max_len);
  Tensor lower = fx.lm.lower_forward(batch);
  Tensor split = fx.lm.run_layers(lower, batch, fx.config.lower_layers, fx.config.total_layers());
  Tensor whole = fx.lm.full_forward(batch);
  ReferenceEncoder ref(fx.store, fx.config);
  for (size_t s = 0; s < seqs.size(); ++s) {
    const Matrix expected = ref.layers(ref.embed(seqs[s]), 0, fx.config.total_layers());
    expect_rows_match(split, batch, s, expected, 1e-12);
    expect_rows_match(whole, batch, s, expected, 1e-12);
    expect_rows_match(lower, batch, s, ref.layers(ref.embed(seqs[s]), 0, fx.config.lower_layers), 1e-12);
  }
}

TEST(LanguageTest, PaddingDoesNotLeakIntoRealPositions) {
  Fixture fx;
  auto seqs = sample_sequences();
  TokenBatch batch = make_batch(seqs, fx.config.max_len);
  Tensor together = fx.lm.full_forward(batch);
  for (size_t s = 0; s < seqs.size(); ++s) {
    std::vector<TokenSeq> alone{seqs[s]};
    TokenBatch single = make_batch(alone, fx.config.max_len);
    Tensor y = fx.lm.full_forward(single);
    for (size_t p = 0; p < seqs[s].size(); ++p) {
      for (size_t j = 0; j < fx.config.width; ++j) {
        EXPECT_NEAR(together.at(batch.row(s, p), j), y.at(p, j), 1e-12);
      }
    }
  }
}

TEST(LanguageTest, AttentionTraceIsNormalizedOverRealKeys) {
  Fixture fx;
  auto seqs = sample_sequences();
  TokenBatch batch = make_batch(seqs, fx.config.max_len);
  AttentionTrace trace;
  fx.lm.full_forward(batch, &trace);
  ASSERT_EQ(trace.size(), fx.config.total_layers());
  const size_t n = batch.seq_len;
  for (const auto& probs : trace) {
    ASSERT_EQ(probs.size(), batch.batch * fx.config.heads * n * n);
    for (size_t b = 0; b < batch.batch; ++b) {
      for (size_t h = 0; h < fx.config.heads; ++h) {
        for (size_t i = 0; i < n; ++i) {
          const double* row = probs.data() + ((b * fx.config.heads + h) * n + i) * n;
          double total = 0.0;
          for (size_t j = 0; j < n; ++j) {
            if (j >= batch.lengths[b]) {
              EXPECT_EQ(row[j], 0.0);
            }
            total += row[j];
          }
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(LanguageTest, FusionAddsEntityRowsOnSpansOnly) {
  Fixture fx;
  auto seqs = sample_sequences();
  TokenBatch batch = make_batch(seqs, fx.config.max_len);
  Tensor z = fx.lm.lower_forward(batch);
  Rng rng = make_rng(5);
  std::vector<double> e(2 * fx.config.width);
  for (double& v : e) v = standard_normal(rng);
  Tensor entities = Tensor::from({2, fx.config.width}, e);
  const std::vector<FusionSpan> spans{{0, 2, 4, 1}, {2, 1, 1, 0}, {2, 5, 6, 1}};
  Tensor merged = merge_mentions(z, batch, spans, entities);
  for (size_t s = 0; s < batch.batch; ++s) {
    for (size_t p = 0; p < batch.seq_len; ++p) {
      int64_t slot = -1;
      for (const FusionSpan& sp : spans) {
        if (sp.sequence == s && p >= sp.start && p <= sp.end) slot = static_cast<int64_t>(sp.embedding_row);
      }
      for (size_t j = 0; j < fx.config.width; ++j) {
        const double add = slot >= 0 ? e[static_cast<size_t>(slot) * fx.config.width + j] : 0.0;
        EXPECT_EQ(merged.at(batch.row(s, p), j), z.at(batch.row(s, p), j) + add);
      }
    }
  }

  Tensor upper = fx.lm.upper_forward(fx.lm.fuse(z, batch, spans, entities), batch);
  ReferenceEncoder ref(fx.store, fx.config);
  const std::vector<double> e0(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(fx.config.width));
  const std::vector<double> e1(e.begin() + static_cast<std::ptrdiff_t>(fx.config.width), e.end());
  const Matrix z0 = ref.layers(ref.embed(seqs[0]), 0, fx.config.lower_layers);
  expect_rows_match(upper, batch, 0,
                    ref.layers(ref.fuse(z0, 2, 4, e1), fx.config.lower_layers, fx.config.total_layers()),
                    1e-12);

  const std::vector<FusionSpan> overlapping{{0, 2, 4, 0}, {0, 4, 5, 1}};
  EXPECT_THROW(merge_mentions(z, batch, overlapping, entities), Error);
  const std::vector<FusionSpan> on_eos{{1, 3, 3, 0}};
  EXPECT_THROW(merge_mentions(z, batch, on_eos, entities), Error);
}

TEST(LanguageTest, DescriptionEncodingAveragesSpanEnds) {
  Fixture fx;
  auto seqs = sample_sequences();
  const std::vector<Span> mentions{{2, 4}, {1, 1}, {3, 6}};
  Tensor enc = fx.lm.encode_descriptions(seqs, mentions);
  ASSERT_EQ(enc.rows(), 3u);
  ReferenceEncoder ref(fx.store, fx.config);
  for (size_t s = 0; s < seqs.size(); ++s) {
    const Matrix z = ref.layers(ref.embed(seqs[s]), 0, fx.config.lower_layers);
    for (size_t j = 0; j < fx.config.width; ++j) {
      EXPECT_NEAR(enc.at(s, j), 0.5 * (z[mentions[s].start][j] + z[mentions[s].end][j]), 1e-12);
    }
  }
  const std::vector<Span> bad{{2, 4}, {1, 9}, {3, 6}};
  EXPECT_THROW(fx.lm.encode_descriptions(seqs, bad), Error);
}

TEST(LanguageTest, RejectsBadConfig) {
  LanguageConfig c = small_config();
  c.heads = 5;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.upper_layers = 0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace kgjoint

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
#include <span>
#include <string>
#include <vector>

#include "kgjoint/graph.hpp"
#include "kgjoint/optim.hpp"
#include "kgjoint/tensor.hpp"
#include "kgjoint/vocab.hpp"

namespace kgjoint {

struct LanguageConfig {
  size_t vocab_size = 400;
  size_t width = 64;
  size_t heads = 4;
  // Layers below the fusion point, then above it.
  size_t lower_layers = 2;
  size_t upper_layers = 2;
  size_t max_len = 64;
  double init_std = 0.02;

  void validate() const;
  size_t total_layers() const { return lower_layers + upper_layers; }
};

// Right-padded token matrix flattened to (batch * seq_len) rows.
struct TokenBatch {
  size_t batch = 0;
  size_t seq_len = 0;
  std::vector<TokenId> tokens;
  // 1 for real tokens, 0 for padding.
  std::vector<uint8_t> mask;
  std::vector<size_t> lengths;

  size_t row(size_t sequence, size_t position) const { return sequence * seq_len + position; }
};

// Pads every sequence to the longest one. Throws when a sequence is empty
// or longer than max_len.
TokenBatch make_batch(std::span<const TokenSeq> sequences, size_t max_len);

// A mention span that receives row `embedding_row` of the fused entity
// embeddings.
struct FusionSpan {
  size_t sequence = 0;
  size_t start = 0;
  size_t end = 0;
  size_t embedding_row = 0;
};

// Attention weights per layer, each laid out [batch][head][query][key].
using AttentionTrace = std::vector<std::vector<double>>;

// Transformer encoder split into a lower stack (below fusion) and an upper
// stack (above it). Parameters live in the store passed at construction;
// the module keeps shared handles to them.
class LanguageModule {
 public:
  LanguageModule() = default;
  LanguageModule(const LanguageConfig& config, ParameterStore& store, Rng& rng);

  const LanguageConfig& config() const { return config_; }

  // Token plus position embeddings, layer-normalized.
  Tensor embed(const TokenBatch& batch) const;
  // Applies layers [begin, end) to x.
  Tensor run_layers(const Tensor& x, const TokenBatch& batch, size_t begin, size_t end,
                    AttentionTrace* trace = nullptr) const;

  Tensor lower_forward(const TokenBatch& batch, AttentionTrace* trace = nullptr) const;
  Tensor upper_forward(const Tensor& fused, const TokenBatch& batch,
                       AttentionTrace* trace = nullptr) const;
  // Every layer in one pass, with no fusion in between.
  Tensor full_forward(const TokenBatch& batch, AttentionTrace* trace = nullptr) const;

  // Adds entity rows onto every position of each span, then normalizes.
  Tensor fuse(const Tensor& z, const TokenBatch& batch, std::span<const FusionSpan> spans,
              const Tensor& entity_rows) const;

  // (Z_s + Z_o) / 2 from the lower stack, one row per description.
  Tensor encode_descriptions(std::span<const TokenSeq> descriptions,
                             std::span<const Span> mentions) const;

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gamma, ln1_beta;
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor ln2_gamma, ln2_beta;
  };

  Tensor layer_forward(const Layer& layer, const Tensor& x, const TokenBatch& batch,
                       AttentionTrace* trace) const;

  LanguageConfig config_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  Tensor embed_ln_gamma_, embed_ln_beta_;
  std::vector<Layer> layers_;
  Tensor fuse_ln_gamma_, fuse_ln_beta_;
};

// Z with every span row incremented by its entity row (before the fusion
// normalization).
Tensor merge_mentions(const Tensor& z, const TokenBatch& batch, std::span<const FusionSpan> spans,
                      const Tensor& entity_rows);

}  // namespace kgjoint

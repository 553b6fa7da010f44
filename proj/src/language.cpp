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

#include "kgjoint/language.hpp"

#include <algorithm>

#include "kgjoint/ops.hpp"

namespace kgjoint {

void LanguageConfig::validate() const {
  if (vocab_size <= kSpecialTokenCount) throw Error("language config: vocabulary too small");
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw Error("language config: heads must divide a positive width");
  }
  if (lower_layers == 0 || upper_layers == 0) {
    throw Error("language config: both sides of the split need at least one layer");
  }
  if (max_len < 3) throw Error("language config: max_len must be at least 3");
  if (!(init_std > 0.0)) throw Error("language config: init_std must be positive");
}

TokenBatch make_batch(std::span<const TokenSeq> sequences, size_t max_len) {
  if (sequences.empty()) throw Error("make_batch: no sequences");
  TokenBatch b;
  b.batch = sequences.size();
  for (const TokenSeq& s : sequences) {
    if (s.empty()) throw Error("make_batch: empty sequence");
    if (s.size() > max_len) {
      throw Error("make_batch: sequence of length " + std::to_string(s.size()) +
                  " exceeds max_len " + std::to_string(max_len));
    }
    b.seq_len = std::max(b.seq_len, s.size());
    b.lengths.push_back(s.size());
  }
  b.tokens.assign(b.batch * b.seq_len, kPadToken);
  b.mask.assign(b.batch * b.seq_len, 0);
  for (size_t i = 0; i < b.batch; ++i) {
    std::copy(sequences[i].begin(), sequences[i].end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(b.row(i, 0)));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(b.row(i, 0)), sequences[i].size(), 1);
  }
  return b;
}

LanguageModule::LanguageModule(const LanguageConfig& config, ParameterStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  const size_t f = config_.width;
  const double sd = config_.init_std;
  const auto g = ParamGroup::kLanguage;
  token_embedding_ = store.add_normal("lm.tok_emb", {config_.vocab_size, f}, sd, rng, g);
  position_embedding_ = store.add_normal("lm.pos_emb", {config_.max_len, f}, sd, rng, g);
  embed_ln_gamma_ = store.add_constant("lm.emb_ln.gamma", {f}, 1.0, g);
  embed_ln_beta_ = store.add_constant("lm.emb_ln.beta", {f}, 0.0, g);
  for (size_t i = 0; i < config_.total_layers(); ++i) {
    const std::string p = "lm.layer" + std::to_string(i) + ".";
    Layer l;
    l.wq = store.add_normal(p + "attn.wq", {f, f}, sd, rng, g);
    l.bq = store.add_constant(p + "attn.bq", {f}, 0.0, g);
    l.wk = store.add_normal(p + "attn.wk", {f, f}, sd, rng, g);
    l.bk = store.add_constant(p + "attn.bk", {f}, 0.0, g);
    l.wv = store.add_normal(p + "attn.wv", {f, f}, sd, rng, g);
    l.bv = store.add_constant(p + "attn.bv", {f}, 0.0, g);
    l.wo = store.add_normal(p + "attn.wo", {f, f}, sd, rng, g);
    l.bo = store.add_constant(p + "attn.bo", {f}, 0.0, g);
    l.ln1_gamma = store.add_constant(p + "ln1.gamma", {f}, 1.0, g);
    l.ln1_beta = store.add_constant(p + "ln1.beta", {f}, 0.0, g);
    l.ff1_w = store.add_normal(p + "ffn.w1", {f, 4 * f}, sd, rng, g);
    l.ff1_b = store.add_constant(p + "ffn.b1", {4 * f}, 0.0, g);
    l.ff2_w = store.add_normal(p + "ffn.w2", {4 * f, f}, sd, rng, g);
    l.ff2_b = store.add_constant(p + "ffn.b2", {f}, 0.0, g);
    l.ln2_gamma = store.add_constant(p + "ln2.gamma", {f}, 1.0, g);
    l.ln2_beta = store.add_constant(p + "ln2.beta", {f}, 0.0, g);
    layers_.push_back(std::move(l));
  }
  fuse_ln_gamma_ = store.add_constant("lm.fuse_ln.gamma", {f}, 1.0, g);
  fuse_ln_beta_ = store.add_constant("lm.fuse_ln.beta", {f}, 0.0, g);
}

Tensor LanguageModule::embed(const TokenBatch& batch) const {
  std::vector<size_t> positions(batch.tokens.size());
  for (size_t i = 0; i < positions.size(); ++i) {
    if (batch.tokens[i] >= config_.vocab_size) {
      throw Error("token id " + std::to_string(batch.tokens[i]) + " outside the vocabulary");
    }
    positions[i] = i % batch.seq_len;
  }
  if (batch.seq_len > config_.max_len) throw Error("batch longer than max_len");
  Tensor x = ops::add(ops::gather_rows(token_embedding_, batch.tokens),
                      ops::gather_rows(position_embedding_, positions));
  return ops::layer_norm(x, embed_ln_gamma_, embed_ln_beta_);
}

Tensor LanguageModule::layer_forward(const Layer& l, const Tensor& x, const TokenBatch& batch,
                                     AttentionTrace* trace) const {
  Tensor q = ops::add_row(ops::matmul(x, l.wq), l.bq);
  Tensor k = ops::add_row(ops::matmul(x, l.wk), l.bk);
  Tensor v = ops::add_row(ops::matmul(x, l.wv), l.bv);
  std::vector<double>* probs = nullptr;
  if (trace) probs = &trace->emplace_back();
  Tensor attn = ops::multi_head_attention(q, k, v, batch.batch, batch.seq_len, config_.heads,
                                          batch.mask, probs);
  Tensor h = ops::layer_norm(ops::add(x, ops::add_row(ops::matmul(attn, l.wo), l.bo)), l.ln1_gamma,
                             l.ln1_beta);
  Tensor ff = ops::add_row(ops::matmul(ops::gelu(ops::add_row(ops::matmul(h, l.ff1_w), l.ff1_b)), l.ff2_w),
                           l.ff2_b);
  return ops::layer_norm(ops::add(h, ff), l.ln2_gamma, l.ln2_beta);
}

Tensor LanguageModule::run_layers(const Tensor& x, const TokenBatch& batch, size_t begin, size_t end,
                                  AttentionTrace* trace) const {
  if (begin > end || end > layers_.size()) throw Error("run_layers: bad layer range");
  if (x.rows() != batch.batch * batch.seq_len || x.cols() != config_.width) {
    throw Error("run_layers: input shape " + shape_string(x.shape()) + " does not match the batch");
  }
  Tensor h = x;
  for (size_t i = begin; i < end; ++i) h = layer_forward(layers_[i], h, batch, trace);
  return h;
}

Tensor LanguageModule::lower_forward(const TokenBatch& batch, AttentionTrace* trace) const {
  return run_layers(embed(batch), batch, 0, config_.lower_layers, trace);
}

Tensor LanguageModule::upper_forward(const Tensor& fused, const TokenBatch& batch,
                                     AttentionTrace* trace) const {
  return run_layers(fused, batch, config_.lower_layers, layers_.size(), trace);
}

Tensor LanguageModule::full_forward(const TokenBatch& batch, AttentionTrace* trace) const {
  return run_layers(embed(batch), batch, 0, layers_.size(), trace);
}

Tensor merge_mentions(const Tensor& z, const TokenBatch& batch, std::span<const FusionSpan> spans,
                      const Tensor& entity_rows) {
  if (z.rows() != batch.batch * batch.seq_len) throw Error("merge_mentions: z does not match the batch");
  if (spans.empty()) return z;
  std::vector<int64_t> slots(z.rows(), -1);
  for (const FusionSpan& s : spans) {
    if (s.sequence >= batch.batch || s.start == 0 || s.start > s.end ||
        s.end + 1 >= batch.lengths[s.sequence]) {
      throw Error("merge_mentions: span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                  "] out of range for sequence " + std::to_string(s.sequence));
    }
    if (s.embedding_row >= entity_rows.rows()) throw Error("merge_mentions: embedding row out of range");
    for (size_t p = s.start; p <= s.end; ++p) {
      int64_t& slot = slots[batch.row(s.sequence, p)];
      if (slot >= 0) throw Error("merge_mentions: overlapping spans");
      slot = static_cast<int64_t>(s.embedding_row);
    }
  }
  return ops::scatter_add_rows(z, entity_rows, slots);
}

Tensor LanguageModule::fuse(const Tensor& z, const TokenBatch& batch, std::span<const FusionSpan> spans,
                            const Tensor& entity_rows) const {
  return ops::layer_norm(merge_mentions(z, batch, spans, entity_rows), fuse_ln_gamma_, fuse_ln_beta_);
}

Tensor LanguageModule::encode_descriptions(std::span<const TokenSeq> descriptions,
                                           std::span<const Span> mentions) const {
  if (descriptions.size() != mentions.size()) {
    throw Error("encode_descriptions: one mention span per description required");
  }
  TokenBatch batch = make_batch(descriptions, config_.max_len);
  std::vector<size_t> starts, ends;
  for (size_t i = 0; i < descriptions.size(); ++i) {
    const Span& m = mentions[i];
    if (m.start > m.end || m.end >= descriptions[i].size()) {
      throw Error("encode_descriptions: mention outside description " + std::to_string(i));
    }
    starts.push_back(batch.row(i, m.start));
    ends.push_back(batch.row(i, m.end));
  }
  Tensor z = lower_forward(batch);
  return ops::scale(ops::add(ops::gather_rows(z, starts), ops::gather_rows(z, ends)), 0.5);
}

}  // namespace kgjoint

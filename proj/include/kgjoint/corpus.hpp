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
#include "kgjoint/vocab.hpp"

namespace kgjoint {

// Entity link over the inclusive, zero-based token range [start, end].
struct Mention {
  EntityId entity = 0;
  size_t start = 0;
  size_t end = 0;
  auto operator<=>(const Mention&) const = default;
};

struct AnnotatedSequence {
  TokenSeq tokens;
  std::vector<Mention> mentions;
  bool operator==(const AnnotatedSequence&) const = default;
};

// Checks the [CLS]/[EOS] framing, span bounds and span disjointness.
void validate(const AnnotatedSequence& seq, size_t entity_count);

// Whitespace tokenization wrapped in [CLS] ... [EOS]; unknown words map to
// [UNK].
TokenSeq tokenize(const std::string& text, const Vocabulary& vocab);
// Inverse of tokenize for in-vocabulary text: drops the framing tokens.
std::string detokenize(const TokenSeq& tokens, const Vocabulary& vocab);

// ceil(rate * n) without floating-point overshoot (0.15 * 20 is 3, not 4).
size_t masked_count(double rate, size_t n);

struct TokenTarget {
  size_t position = 0;
  TokenId original = 0;
  bool operator==(const TokenTarget&) const = default;
};

struct TokenMasking {
  TokenSeq corrupted;
  std::vector<TokenTarget> targets;  // ascending position
};

// BERT-style corruption of ceil(rate * usable) non-special positions: 80%
// become [MASK], 10% a random non-special token, 10% stay unchanged.
TokenMasking mask_tokens(const TokenSeq& tokens, double rate, size_t vocab_size, uint64_t seed);

struct MentionMasking {
  std::vector<Mention> visible;
  std::vector<Mention> masked;
};

// Hides the links of ceil(rate * M) mentions; their tokens stay in the text.
MentionMasking mask_mentions(std::span<const Mention> mentions, double rate, uint64_t seed);

struct DescriptionWindow {
  TokenSeq tokens;
  Span mention;
};

// Truncates to max_len (re-terminated with [EOS]) and locates the first
// self-mention. Falls back to (1, 1) when there is none or it was clipped.
DescriptionWindow description_window(const TokenSeq& tokens, std::span<const Mention> self_mentions,
                                     size_t max_len = 64);

// One sequence per line: tokens, TAB, "entity:start:end" triples joined by
// ';'.
void save_corpus(const std::vector<AnnotatedSequence>& corpus, const Vocabulary& vocab,
                 const std::string& path);
std::vector<AnnotatedSequence> load_corpus(const std::string& path, const Vocabulary& vocab,
                                           size_t entity_count);

}  // namespace kgjoint

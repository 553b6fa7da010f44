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

#include "kgjoint/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "kgjoint/rng.hpp"
#include "text_util.hpp"

namespace kgjoint {

void validate(const AnnotatedSequence& seq, size_t entity_count) {
  const TokenSeq& t = seq.tokens;
  if (t.size() < 2 || t.front() != kClsToken || t.back() != kEosToken) {
    throw Error("sequence must begin with [CLS] and end with [EOS]");
  }
  std::vector<Mention> sorted = seq.mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const Mention& a, const Mention& b) { return a.start < b.start; });
  for (size_t i = 0; i < sorted.size(); ++i) {
    const Mention& m = sorted[i];
    if (m.entity >= entity_count) throw Error("mention entity out of range");
    if (m.start > m.end || m.start == 0 || m.end + 1 >= t.size()) {
      throw Error("mention span [" + std::to_string(m.start) + ", " + std::to_string(m.end) +
                  "] out of range");
    }
    if (i > 0 && sorted[i - 1].end >= m.start) throw Error("mention spans overlap");
  }
}

TokenSeq tokenize(const std::string& text, const Vocabulary& vocab) {
  TokenSeq out{kClsToken};
  for (std::string_view w : internal::words(text)) out.push_back(vocab.id(w));
  out.push_back(kEosToken);
  return out;
}

std::string detokenize(const TokenSeq& tokens, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : tokens) {
    if (id == kClsToken || id == kEosToken || id == kPadToken) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

size_t masked_count(double rate, size_t n) {
  const double exact = rate * static_cast<double>(n);
  return static_cast<size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
}

TokenMasking mask_tokens(const TokenSeq& tokens, double rate, size_t vocab_size, uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw Error("mask_tokens: rate must be in (0, 1)");
  TokenMasking out{tokens, {}};
  std::vector<size_t> usable;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (!is_special(tokens[i])) usable.push_back(i);
  }
  const size_t count = masked_count(rate, usable.size());
  if (count == 0) return out;
  Rng rng = make_rng(seed, {0x7043});
  std::vector<size_t> pick = sample_without_replacement(usable.size(), count, rng);
  const auto n_mask = static_cast<size_t>(std::llround(0.8 * static_cast<double>(count)));
  const auto n_random = std::min(count - n_mask,
                                 static_cast<size_t>(std::llround(0.1 * static_cast<double>(count))));
  const size_t non_special = vocab_size > kSpecialTokenCount ? vocab_size - kSpecialTokenCount : 0;
  for (size_t i = 0; i < pick.size(); ++i) {
    const size_t pos = usable[pick[i]];
    out.targets.push_back({pos, tokens[pos]});
    if (i < n_mask) {
      out.corrupted[pos] = kMaskToken;
    } else if (i < n_mask + n_random && non_special > 0) {
      out.corrupted[pos] = kSpecialTokenCount + uniform_index(rng, non_special);
    }
  }
  std::sort(out.targets.begin(), out.targets.end(),
            [](const TokenTarget& a, const TokenTarget& b) { return a.position < b.position; });
  return out;
}

MentionMasking mask_mentions(std::span<const Mention> mentions, double rate, uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("mask_mentions: rate must be in [0, 1)");
  MentionMasking out;
  const size_t count = masked_count(rate, mentions.size());
  Rng rng = make_rng(seed, {0x3e47});
  std::vector<size_t> pick = sample_without_replacement(mentions.size(), count, rng);
  std::vector<bool> hidden(mentions.size(), false);
  for (size_t i : pick) hidden[i] = true;
  for (size_t i = 0; i < mentions.size(); ++i) {
    (hidden[i] ? out.masked : out.visible).push_back(mentions[i]);
  }
  return out;
}

DescriptionWindow description_window(const TokenSeq& tokens, std::span<const Mention> self_mentions,
                                     size_t max_len) {
  if (max_len < 3) throw Error("description_window: max_len must be at least 3");
  DescriptionWindow out;
  out.tokens = tokens;
  if (out.tokens.empty() || out.tokens.front() != kClsToken) out.tokens.insert(out.tokens.begin(), kClsToken);
  if (out.tokens.size() < 2 || out.tokens.back() != kEosToken) out.tokens.push_back(kEosToken);
  if (out.tokens.size() > max_len) {
    out.tokens.resize(max_len - 1);
    out.tokens.push_back(kEosToken);
  }
  out.mention = Span{1, 1};
  if (!self_mentions.empty()) {
    const Mention* first = &self_mentions[0];
    for (const Mention& m : self_mentions) {
      if (m.start < first->start) first = &m;
    }
    if (first->start >= 1 && first->start <= first->end && first->end + 1 < out.tokens.size()) {
      out.mention = Span{first->start, first->end};
    }
  }
  if (out.tokens.size() < 3) out.tokens.insert(out.tokens.begin() + 1, kUnkToken);
  return out;
}

void save_corpus(const std::vector<AnnotatedSequence>& corpus, const Vocabulary& vocab,
                 const std::string& path) {
  auto out = internal::open_output(path);
  for (const AnnotatedSequence& seq : corpus) {
    for (size_t i = 0; i < seq.tokens.size(); ++i) out << (i ? " " : "") << vocab.token(seq.tokens[i]);
    out << '\t';
    for (size_t i = 0; i < seq.mentions.size(); ++i) {
      const Mention& m = seq.mentions[i];
      out << (i ? ";" : "") << m.entity << ':' << m.start << ':' << m.end;
    }
    out << '\n';
  }
}

std::vector<AnnotatedSequence> load_corpus(const std::string& path, const Vocabulary& vocab,
                                           size_t entity_count) {
  auto in = internal::open_input(path);
  std::vector<AnnotatedSequence> corpus;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = internal::strip_cr(line);
    if (text.empty()) continue;
    auto fields = internal::split(text, '\t');
    if (fields.size() > 2) internal::parse_error(path, line_no, "too many fields");
    AnnotatedSequence seq;
    for (std::string_view w : internal::words(fields[0])) seq.tokens.push_back(vocab.id(w));
    if (fields.size() == 2 && !fields[1].empty()) {
      for (std::string_view triple : internal::split(fields[1], ';')) {
        auto parts = internal::split(triple, ':');
        Mention m;
        if (parts.size() != 3 || !internal::parse_size(parts[0], m.entity) ||
            !internal::parse_size(parts[1], m.start) || !internal::parse_size(parts[2], m.end)) {
          internal::parse_error(path, line_no, "bad mention '" + std::string(triple) + "'");
        }
        seq.mentions.push_back(m);
      }
    }
    try {
      validate(seq, entity_count);
    } catch (const Error& e) {
      internal::parse_error(path, line_no, e.what());
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace kgjoint

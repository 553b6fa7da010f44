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

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgjoint {

using TokenId = size_t;
using TokenSeq = std::vector<TokenId>;

// Fixed ids of the special tokens.
inline constexpr TokenId kMaskToken = 0;
inline constexpr TokenId kClsToken = 1;
inline constexpr TokenId kEosToken = 2;
inline constexpr TokenId kPadToken = 3;
inline constexpr TokenId kUnkToken = 4;
inline constexpr size_t kSpecialTokenCount = 5;

inline bool is_special(TokenId id) { return id < kSpecialTokenCount; }

class Vocabulary {
 public:
  // Starts with the five special tokens.
  Vocabulary();

  // Returns the id of an existing token or appends it.
  TokenId add(const std::string& token);
  // [UNK] for unknown tokens.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line; line number is the id. The first five lines must be
  // the special tokens in their fixed order.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace kgjoint

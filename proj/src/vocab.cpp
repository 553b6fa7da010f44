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

#include "kgjoint/vocab.hpp"

#include "text_util.hpp"

namespace kgjoint {

namespace {
const char* const kSpecialTokens[kSpecialTokenCount] = {"[MASK]", "[CLS]", "[EOS]", "[PAD]",
                                                        "[UNK]"};
}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : kSpecialTokens) add(t);
}

TokenId Vocabulary::add(const std::string& token) {
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error("vocabulary tokens must be non-empty and whitespace-free: '" + token + "'");
  }
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  TokenId id = tokens_.size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkToken : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

void Vocabulary::save(const std::string& path) const {
  auto out = internal::open_output(path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = internal::open_input(path);
  Vocabulary vocab;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string token(internal::strip_cr(line));
    if (line_no <= kSpecialTokenCount) {
      if (token != kSpecialTokens[line_no - 1]) {
        internal::parse_error(path, line_no, "expected special token " +
                                                 std::string(kSpecialTokens[line_no - 1]));
      }
      continue;
    }
    if (vocab.contains(token)) internal::parse_error(path, line_no, "duplicate token " + token);
    try {
      vocab.add(token);
    } catch (const Error& e) {
      internal::parse_error(path, line_no, e.what());
    }
  }
  if (line_no < kSpecialTokenCount) throw Error(path + ": missing special tokens");
  return vocab;
}

}  // namespace kgjoint

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

#include <span>
#include <string>
#include <vector>

#include "kgjoint/graph.hpp"
#include "kgjoint/optim.hpp"
#include "kgjoint/tensor.hpp"

namespace kgjoint {

// How relation embeddings enter graph messages.
enum class RelationMode {
  kNone,     // messages carry the source entity only
  kContext,  // source entity + relation memory row + direction offset
};

RelationMode parse_relation_mode(const std::string& text);
std::string to_string(RelationMode mode);

struct KnowledgeConfig {
  size_t width = 64;
  size_t heads = 4;
  size_t layers = 2;
  RelationMode relation_mode = RelationMode::kNone;
  double init_std = 0.1;

  void validate() const;
};

// f(x, y) = x + y.
Tensor compose(const Tensor& entity, const Tensor& relation);

// Per-layer attention weights: one row per sampled edge, one column per
// head.
using GraphAttentionTrace = std::vector<std::vector<double>>;

// Multi-head relational graph attention over sampled subgraphs.
class KnowledgeModule {
 public:
  KnowledgeModule() = default;
  KnowledgeModule(const KnowledgeConfig& config, ParameterStore& store, Rng& rng);

  const KnowledgeConfig& config() const { return config_; }

  // One layer over `edges` (dst rows index the first dst_count rows of
  // e_prev, src rows index any row of e_prev). Nodes without edges reduce
  // to LayerNorm(e_prev[v]). `relations` is ignored in kNone mode.
  Tensor layer_forward(size_t layer, std::span<const SampledEdge> edges, size_t dst_count,
                       const Tensor& e_prev, const Tensor& relations,
                       GraphAttentionTrace* trace = nullptr) const;

  // e0 holds one row per entity of the outermost subgraph layer. Returns
  // rows for subgraph.layers[0].
  Tensor forward(const Subgraph& subgraph, const Tensor& e0, const Tensor& relations,
                 GraphAttentionTrace* trace = nullptr) const;

 private:
  struct Layer {
    Tensor w;         // F x F; head k reads column block k
    Tensor att_dst;   // K x F/K, applied to the projected target
    Tensor att_src;   // K x F/K, applied to the projected message
    Tensor ln_gamma, ln_beta;
  };

  KnowledgeConfig config_;
  std::vector<Layer> layers_;
  Tensor direction_;  // 2 x F: forward, inverse
};

}  // namespace kgjoint

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

#include "kgjoint/knowledge.hpp"

#include <algorithm>
#include <tuple>

#include "kgjoint/ops.hpp"

namespace kgjoint {

RelationMode parse_relation_mode(const std::string& text) {
  if (text == "none") return RelationMode::kNone;
  if (text == "context") return RelationMode::kContext;
  throw Error("unknown relation mode '" + text + "' (expected none or context)");
}

std::string to_string(RelationMode mode) {
  return mode == RelationMode::kNone ? "none" : "context";
}

void KnowledgeConfig::validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw Error("knowledge config: heads must divide a positive width");
  }
  if (layers == 0) throw Error("knowledge config: at least one layer required");
  if (!(init_std > 0.0)) throw Error("knowledge config: init_std must be positive");
}

Tensor compose(const Tensor& entity, const Tensor& relation) {
  if (entity.shape() != relation.shape()) {
    throw Error("compose: width mismatch " + shape_string(entity.shape()) + " vs " +
                shape_string(relation.shape()));
  }
  return ops::add(entity, relation);
}

KnowledgeModule::KnowledgeModule(const KnowledgeConfig& config, ParameterStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  const size_t f = config_.width, k = config_.heads, d = f / k;
  const auto g = ParamGroup::kKnowledge;
  const double sd = config_.init_std;
  for (size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "km.gat" + std::to_string(l) + ".";
    Layer layer;
    layer.w = store.add_normal(p + "w", {f, f}, sd, rng, g);
    layer.att_dst = store.add_normal(p + "att_dst", {k, d}, sd, rng, g);
    layer.att_src = store.add_normal(p + "att_src", {k, d}, sd, rng, g);
    layer.ln_gamma = store.add_constant(p + "ln.gamma", {f}, 1.0, g);
    layer.ln_beta = store.add_constant(p + "ln.beta", {f}, 0.0, g);
    layers_.push_back(std::move(layer));
  }
  direction_ = store.add_normal("km.rel_dir", {2, f}, sd, rng, g);
}

Tensor KnowledgeModule::layer_forward(size_t layer, std::span<const SampledEdge> edges, size_t dst_count,
                                      const Tensor& e_prev, const Tensor& relations,
                                      GraphAttentionTrace* trace) const {
  if (layer >= layers_.size()) throw Error("knowledge layer index out of range");
  const Layer& l = layers_[layer];
  if (e_prev.cols() != config_.width) throw Error("knowledge layer: embedding width mismatch");
  if (dst_count == 0 || dst_count > e_prev.rows()) {
    throw Error("knowledge layer: target rows exceed the source embeddings");
  }
  Tensor residual = ops::slice_rows(e_prev, 0, dst_count);
  if (edges.empty()) {
    if (trace) trace->emplace_back();
    return ops::layer_norm(residual, l.ln_gamma, l.ln_beta);
  }
  // Sums run in a canonical edge order so the output does not depend on
  // the order neighbors were listed in, down to the last bit.
  std::vector<size_t> order(edges.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const SampledEdge& x = edges[a];
    const SampledEdge& y = edges[b];
    return std::tie(x.dst, x.src, x.relation, x.inverse) < std::tie(y.dst, y.src, y.relation, y.inverse);
  });
  std::vector<size_t> dst(edges.size()), src(edges.size()), rel(edges.size()), dir(edges.size());
  for (size_t i = 0; i < edges.size(); ++i) {
    const SampledEdge& edge = edges[order[i]];
    if (edge.dst >= dst_count) throw Error("knowledge layer: edge target outside the target rows");
    if (edge.src >= e_prev.rows()) {
      throw Error("knowledge layer: missing source embedding for row " + std::to_string(edge.src));
    }
    dst[i] = edge.dst;
    src[i] = edge.src;
    rel[i] = edge.relation;
    dir[i] = edge.inverse ? 1 : 0;
  }
  Tensor composed = ops::gather_rows(e_prev, src);
  if (config_.relation_mode == RelationMode::kContext) {
    if (!relations.defined() || relations.cols() != config_.width) {
      throw Error("knowledge layer: context mode needs a relation matrix of width " +
                  std::to_string(config_.width));
    }
    composed = compose(composed, ops::add(ops::gather_rows(relations, rel),
                                          ops::gather_rows(direction_, dir)));
  }
  Tensor messages = ops::matmul(composed, l.w);
  Tensor queries = ops::gather_rows(ops::matmul(residual, l.w), dst);
  Tensor scores = ops::leaky_relu(
      ops::add(ops::head_dot(queries, l.att_dst), ops::head_dot(messages, l.att_src)));
  Tensor alpha = ops::segment_softmax(scores, dst, dst_count);
  if (trace) {
    // Reported in the caller's edge order.
    const size_t k = config_.heads;
    std::vector<double>& out = trace->emplace_back(alpha.size());
    for (size_t i = 0; i < order.size(); ++i) {
      for (size_t h = 0; h < k; ++h) out[order[i] * k + h] = alpha.at(i * k + h);
    }
  }
  Tensor aggregated = ops::segment_weighted_sum(alpha, messages, dst, dst_count);
  return ops::layer_norm(ops::add(ops::elu(aggregated), residual), l.ln_gamma, l.ln_beta);
}

Tensor KnowledgeModule::forward(const Subgraph& subgraph, const Tensor& e0, const Tensor& relations,
                                GraphAttentionTrace* trace) const {
  const size_t depth = subgraph.depth();
  if (depth != layers_.size() || subgraph.layers.size() != depth + 1) {
    throw Error("knowledge forward: subgraph has " + std::to_string(depth) + " hops but the module has " +
                std::to_string(layers_.size()) + " layers");
  }
  if (e0.rows() != subgraph.layers[depth].size()) {
    throw Error("knowledge forward: initial embeddings must cover the outermost layer (" +
                std::to_string(subgraph.layers[depth].size()) + " rows)");
  }
  Tensor e = e0;
  for (size_t step = 0; step < depth; ++step) {
    const size_t hop = depth - 1 - step;
    e = layer_forward(step, subgraph.blocks[hop], subgraph.layers[hop].size(), e, relations, trace);
  }
  return e;
}

}  // namespace kgjoint

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

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgjoint/vocab.hpp"

namespace kgjoint {

using EntityId = size_t;
using RelationId = size_t;
using CategoryId = size_t;

struct Triplet {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;
  auto operator<=>(const Triplet&) const = default;
};

// Edge seen from one endpoint. `inverse` marks traversal from tail to head.
struct IncidentEdge {
  RelationId relation = 0;
  EntityId neighbor = 0;
  bool inverse = false;
  auto operator<=>(const IncidentEdge&) const = default;
};

// Forward neighbor (r, u) of v, meaning (v, r, u) is a triplet.
struct Neighbor {
  RelationId relation = 0;
  EntityId entity = 0;
  auto operator<=>(const Neighbor&) const = default;
};

// Zero-based inclusive token span.
struct Span {
  size_t start = 1;
  size_t end = 1;
  auto operator<=>(const Span&) const = default;
};

struct GraphParts {
  size_t entity_count = 0;
  size_t relation_count = 0;
  size_t category_count = 0;
  std::vector<Triplet> triplets;
  std::vector<std::optional<CategoryId>> categories;
  // [CLS] ... [EOS] wrapped token ids.
  std::vector<TokenSeq> entity_descriptions;
  // Self-mention inside each entity description; (1, 1) when absent.
  std::vector<Span> description_mentions;
  std::vector<TokenSeq> relation_descriptions;

  bool operator==(const GraphParts&) const = default;
};

// Immutable, validated knowledge graph with sorted adjacency.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(GraphParts parts);

  size_t entity_count() const { return parts_.entity_count; }
  size_t relation_count() const { return parts_.relation_count; }
  size_t category_count() const { return parts_.category_count; }
  const std::vector<Triplet>& triplets() const { return parts_.triplets; }
  const std::optional<CategoryId>& category(EntityId e) const { return parts_.categories.at(e); }
  const TokenSeq& description(EntityId e) const { return parts_.entity_descriptions.at(e); }
  const Span& description_mention(EntityId e) const { return parts_.description_mentions.at(e); }
  const TokenSeq& relation_description(RelationId r) const { return parts_.relation_descriptions.at(r); }
  const GraphParts& parts() const { return parts_; }

  // Both directions, sorted; used for sampling and walks.
  std::span<const IncidentEdge> incident(EntityId v) const;
  // Distinct entities adjacent in either direction, ascending.
  std::vector<EntityId> adjacent_entities(EntityId v) const;
  bool has_triplet(const Triplet& t) const;
  bool connected(EntityId a, EntityId b) const;
  size_t max_degree() const;

  bool operator==(const KnowledgeGraph& other) const;

 private:
  GraphParts parts_;
  std::vector<size_t> offsets_;
  std::vector<IncidentEdge> adjacency_;
};

// N_v: the (relation, tail) pairs with v as head, sorted.
std::vector<Neighbor> neighbors(const KnowledgeGraph& kg, EntityId v);

// Entities within `hops` undirected steps of v, excluding v, ascending.
std::vector<EntityId> k_hop_neighbors(const KnowledgeGraph& kg, EntityId v, size_t hops);

struct SampledEdge {
  size_t dst = 0;  // row in layers[l]
  size_t src = 0;  // row in layers[l + 1]
  RelationId relation = 0;
  bool inverse = false;
};

// Layered sample. layers[0] holds the deduplicated targets and each layer
// extends the previous one, so row i of layers[l] is row i of layers[l + 1].
// blocks[l] carries the sampled edges feeding layers[l] from layers[l + 1].
struct Subgraph {
  std::vector<std::vector<EntityId>> layers;
  std::vector<std::vector<SampledEdge>> blocks;
  // Row of each requested target inside layers[0].
  std::vector<size_t> target_rows;
  size_t depth() const { return blocks.size(); }
};

Subgraph sample_neighborhood(const KnowledgeGraph& kg, std::span<const EntityId> targets,
                             size_t hops, size_t fanout, uint64_t seed);

struct WalkResult {
  std::vector<std::vector<EntityId>> walks;
  // Union of visited entities, ascending.
  std::vector<EntityId> batch;
};

WalkResult random_walk(const KnowledgeGraph& kg, std::span<const EntityId> roots, size_t length,
                       uint64_t seed);

struct UnseenSplit {
  KnowledgeGraph pretrain;
  KnowledgeGraph unseen;
  // Original ids, indexed by the new dense ids of each side.
  std::vector<EntityId> pretrain_ids;
  std::vector<EntityId> unseen_ids;
};

UnseenSplit split_unseen(const KnowledgeGraph& kg, double fraction, uint64_t seed);

// Copy of kg with each triplet dropped independently with probability p.
KnowledgeGraph drop_triplets(const KnowledgeGraph& kg, double p, uint64_t seed);

// Flat-file interchange. Entity lines: id, category or "-", description
// tokens, optional "start:end" self-mention; relation lines: id, tokens;
// triplet lines: head, relation, tail. Tab separated.
void save_graph(const KnowledgeGraph& kg, const Vocabulary& vocab, const std::string& entity_path,
                const std::string& relation_path, const std::string& triplet_path);
KnowledgeGraph load_graph(const std::string& entity_path, const std::string& relation_path,
                          const std::string& triplet_path, const Vocabulary& vocab,
                          std::optional<size_t> category_count = std::nullopt);

}  // namespace kgjoint

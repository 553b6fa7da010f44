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

#include "kgjoint/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_map>

#include "kgjoint/rng.hpp"
#include "text_util.hpp"

namespace kgjoint {

namespace {

void validate_sequence(const TokenSeq& seq, const std::string& what) {
  if (seq.size() < 2 || seq.front() != kClsToken || seq.back() != kEosToken) {
    throw Error(what + " must begin with [CLS] and end with [EOS]");
  }
}

}  // namespace

KnowledgeGraph::KnowledgeGraph(GraphParts parts) : parts_(std::move(parts)) {
  const size_t n = parts_.entity_count;
  const size_t p = parts_.relation_count;
  if (parts_.categories.size() != n || parts_.entity_descriptions.size() != n ||
      parts_.description_mentions.size() != n) {
    throw Error("per-entity tables must have one row per entity");
  }
  if (parts_.relation_descriptions.size() != p) {
    throw Error("relation description table must have one row per relation");
  }
  for (EntityId e = 0; e < n; ++e) {
    const auto& c = parts_.categories[e];
    if (c && *c >= parts_.category_count) {
      throw Error("entity " + std::to_string(e) + " has category " + std::to_string(*c) +
                  " >= category count " + std::to_string(parts_.category_count));
    }
    const TokenSeq& desc = parts_.entity_descriptions[e];
    validate_sequence(desc, "description of entity " + std::to_string(e));
    const Span& m = parts_.description_mentions[e];
    if (m.start < 1 || m.start > m.end || m.end + 1 >= desc.size()) {
      throw Error("description mention of entity " + std::to_string(e) + " out of range");
    }
  }
  for (RelationId r = 0; r < p; ++r) {
    validate_sequence(parts_.relation_descriptions[r], "description of relation " + std::to_string(r));
  }
  std::set<Triplet> seen;
  for (const Triplet& t : parts_.triplets) {
    if (t.head >= n || t.tail >= n || t.relation >= p) {
      throw Error("triplet (" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                  std::to_string(t.tail) + ") references an id out of range");
    }
    if (!seen.insert(t).second) {
      throw Error("duplicate triplet (" + std::to_string(t.head) + ", " +
                  std::to_string(t.relation) + ", " + std::to_string(t.tail) + ")");
    }
  }
  std::vector<std::vector<IncidentEdge>> lists(n);
  for (const Triplet& t : parts_.triplets) {
    lists[t.head].push_back({t.relation, t.tail, false});
    lists[t.tail].push_back({t.relation, t.head, true});
  }
  offsets_.assign(n + 1, 0);
  for (EntityId e = 0; e < n; ++e) {
    std::sort(lists[e].begin(), lists[e].end());
    offsets_[e + 1] = offsets_[e] + lists[e].size();
    adjacency_.insert(adjacency_.end(), lists[e].begin(), lists[e].end());
  }
}

std::span<const IncidentEdge> KnowledgeGraph::incident(EntityId v) const {
  if (v >= entity_count()) throw Error("entity " + std::to_string(v) + " out of range");
  return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

std::vector<EntityId> KnowledgeGraph::adjacent_entities(EntityId v) const {
  std::vector<EntityId> out;
  for (const IncidentEdge& e : incident(v)) out.push_back(e.neighbor);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool KnowledgeGraph::has_triplet(const Triplet& t) const {
  if (t.head >= entity_count()) return false;
  for (const IncidentEdge& e : incident(t.head)) {
    if (!e.inverse && e.relation == t.relation && e.neighbor == t.tail) return true;
  }
  return false;
}

bool KnowledgeGraph::connected(EntityId a, EntityId b) const {
  for (const IncidentEdge& e : incident(a)) {
    if (e.neighbor == b) return true;
  }
  return false;
}

size_t KnowledgeGraph::max_degree() const {
  size_t best = 0;
  for (EntityId e = 0; e < entity_count(); ++e) best = std::max(best, offsets_[e + 1] - offsets_[e]);
  return best;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const { return parts_ == other.parts_; }

std::vector<Neighbor> neighbors(const KnowledgeGraph& kg, EntityId v) {
  std::vector<Neighbor> out;
  for (const IncidentEdge& e : kg.incident(v)) {
    if (!e.inverse) out.push_back({e.relation, e.neighbor});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<EntityId> k_hop_neighbors(const KnowledgeGraph& kg, EntityId v, size_t hops) {
  std::unordered_map<EntityId, size_t> dist{{v, 0}};
  std::deque<EntityId> queue{v};
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    if (dist[u] == hops) continue;
    for (const IncidentEdge& e : kg.incident(u)) {
      if (dist.emplace(e.neighbor, dist[u] + 1).second) queue.push_back(e.neighbor);
    }
  }
  std::vector<EntityId> out;
  for (const auto& [u, _] : dist) {
    if (u != v) out.push_back(u);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Subgraph sample_neighborhood(const KnowledgeGraph& kg, std::span<const EntityId> targets,
                             size_t hops, size_t fanout, uint64_t seed) {
  if (targets.empty()) throw Error("sample_neighborhood: empty target set");
  if (fanout == 0) throw Error("sample_neighborhood: fanout must be positive");
  Subgraph sg;
  std::unordered_map<EntityId, size_t> row_of;
  std::vector<EntityId> layer;
  for (EntityId t : targets) {
    if (t >= kg.entity_count()) throw Error("sample_neighborhood: target out of range");
    auto [it, inserted] = row_of.emplace(t, layer.size());
    if (inserted) layer.push_back(t);
    sg.target_rows.push_back(it->second);
  }
  sg.layers.push_back(layer);
  for (size_t hop = 0; hop < hops; ++hop) {
    std::vector<EntityId> next = sg.layers.back();
    std::vector<SampledEdge> block;
    const size_t dst_count = sg.layers.back().size();
    for (size_t dst = 0; dst < dst_count; ++dst) {
      const EntityId v = sg.layers.back()[dst];
      auto edges = kg.incident(v);
      Rng rng = make_rng(seed, {hop, v});
      std::vector<size_t> chosen = sample_without_replacement(edges.size(), fanout, rng);
      std::sort(chosen.begin(), chosen.end());
      for (size_t idx : chosen) {
        const IncidentEdge& e = edges[idx];
        auto [it, inserted] = row_of.emplace(e.neighbor, next.size());
        if (inserted) next.push_back(e.neighbor);
        block.push_back({dst, it->second, e.relation, e.inverse});
      }
    }
    sg.layers.push_back(std::move(next));
    sg.blocks.push_back(std::move(block));
  }
  return sg;
}

WalkResult random_walk(const KnowledgeGraph& kg, std::span<const EntityId> roots, size_t length,
                       uint64_t seed) {
  WalkResult result;
  std::set<EntityId> visited;
  for (size_t i = 0; i < roots.size(); ++i) {
    EntityId v = roots[i];
    if (v >= kg.entity_count()) throw Error("random_walk: root out of range");
    Rng rng = make_rng(seed, {i, v});
    std::vector<EntityId> walk{v};
    for (size_t step = 0; step < length; ++step) {
      auto edges = kg.incident(v);
      if (edges.empty()) break;
      v = edges[uniform_index(rng, edges.size())].neighbor;
      walk.push_back(v);
    }
    visited.insert(walk.begin(), walk.end());
    result.walks.push_back(std::move(walk));
  }
  result.batch.assign(visited.begin(), visited.end());
  return result;
}

namespace {

KnowledgeGraph induced(const KnowledgeGraph& kg, const std::vector<EntityId>& ids) {
  std::vector<int64_t> new_id(kg.entity_count(), -1);
  for (size_t i = 0; i < ids.size(); ++i) new_id[ids[i]] = static_cast<int64_t>(i);
  const GraphParts& src = kg.parts();
  GraphParts parts;
  parts.entity_count = ids.size();
  parts.relation_count = src.relation_count;
  parts.category_count = src.category_count;
  parts.relation_descriptions = src.relation_descriptions;
  for (EntityId old : ids) {
    parts.categories.push_back(src.categories[old]);
    parts.entity_descriptions.push_back(src.entity_descriptions[old]);
    parts.description_mentions.push_back(src.description_mentions[old]);
  }
  for (const Triplet& t : src.triplets) {
    if (new_id[t.head] >= 0 && new_id[t.tail] >= 0) {
      parts.triplets.push_back({static_cast<EntityId>(new_id[t.head]), t.relation,
                                static_cast<EntityId>(new_id[t.tail])});
    }
  }
  return KnowledgeGraph(std::move(parts));
}

}  // namespace

UnseenSplit split_unseen(const KnowledgeGraph& kg, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split_unseen: fraction must be in (0, 1)");
  const size_t n = kg.entity_count();
  const auto unseen_count = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  if (unseen_count == 0 || unseen_count >= n) {
    throw Error("split_unseen: fraction leaves one side empty");
  }
  Rng rng = make_rng(seed, {0x5e11});
  std::vector<size_t> picked = sample_without_replacement(n, unseen_count, rng);
  std::vector<bool> is_unseen(n, false);
  for (size_t e : picked) is_unseen[e] = true;
  UnseenSplit split;
  for (EntityId e = 0; e < n; ++e) (is_unseen[e] ? split.unseen_ids : split.pretrain_ids).push_back(e);
  split.pretrain = induced(kg, split.pretrain_ids);
  split.unseen = induced(kg, split.unseen_ids);
  return split;
}

KnowledgeGraph drop_triplets(const KnowledgeGraph& kg, double p, uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("drop_triplets: probability must be in [0, 1]");
  GraphParts parts = kg.parts();
  Rng rng = make_rng(seed, {0xd209});
  std::vector<Triplet> kept;
  for (const Triplet& t : parts.triplets) {
    if (uniform_unit(rng) >= p) kept.push_back(t);
  }
  parts.triplets = std::move(kept);
  return KnowledgeGraph(std::move(parts));
}

void save_graph(const KnowledgeGraph& kg, const Vocabulary& vocab, const std::string& entity_path,
                const std::string& relation_path, const std::string& triplet_path) {
  auto write_tokens = [&](std::ostream& out, const TokenSeq& seq) {
    for (size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << vocab.token(seq[i]);
  };
  {
    auto out = internal::open_output(entity_path);
    for (EntityId e = 0; e < kg.entity_count(); ++e) {
      out << e << '\t';
      if (kg.category(e)) out << *kg.category(e);
      else out << '-';
      out << '\t';
      write_tokens(out, kg.description(e));
      out << '\t' << kg.description_mention(e).start << ':' << kg.description_mention(e).end << '\n';
    }
  }
  {
    auto out = internal::open_output(relation_path);
    for (RelationId r = 0; r < kg.relation_count(); ++r) {
      out << r << '\t';
      write_tokens(out, kg.relation_description(r));
      out << '\n';
    }
  }
  auto out = internal::open_output(triplet_path);
  for (const Triplet& t : kg.triplets()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

namespace {

TokenSeq read_tokens(std::string_view field, const Vocabulary& vocab) {
  TokenSeq seq;
  for (std::string_view w : internal::words(field)) seq.push_back(vocab.id(w));
  if (seq.empty() || seq.front() != kClsToken) seq.insert(seq.begin(), kClsToken);
  if (seq.size() < 2 || seq.back() != kEosToken) seq.push_back(kEosToken);
  return seq;
}

// Reads "id<TAB>..." lines into a table indexed by id; ids must be dense.
template <typename Row, typename ParseRest>
std::vector<Row> read_indexed(const std::string& path, size_t min_fields, ParseRest parse_rest) {
  auto in = internal::open_input(path);
  std::vector<std::optional<Row>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = internal::strip_cr(line);
    if (text.empty()) continue;
    auto fields = internal::split(text, '\t');
    if (fields.size() < min_fields) internal::parse_error(path, line_no, "too few fields");
    size_t id;
    if (!internal::parse_size(fields[0], id)) internal::parse_error(path, line_no, "bad id");
    if (id >= rows.size()) rows.resize(id + 1);
    if (rows[id]) internal::parse_error(path, line_no, "duplicate id " + std::to_string(id));
    try {
      rows[id] = parse_rest(fields);
    } catch (const Error& e) {
      internal::parse_error(path, line_no, e.what());
    }
  }
  std::vector<Row> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) throw Error(path + ": missing id " + std::to_string(i));
    out.push_back(std::move(*rows[i]));
  }
  return out;
}

struct EntityRow {
  std::optional<CategoryId> category;
  TokenSeq description;
  Span mention;
};

}  // namespace

KnowledgeGraph load_graph(const std::string& entity_path, const std::string& relation_path,
                          const std::string& triplet_path, const Vocabulary& vocab,
                          std::optional<size_t> category_count) {
  auto entities = read_indexed<EntityRow>(entity_path, 3, [&](const auto& fields) {
    EntityRow row;
    if (fields[1] != "-") {
      size_t c;
      if (!internal::parse_size(fields[1], c)) throw Error("bad category id");
      row.category = c;
    }
    row.description = read_tokens(fields[2], vocab);
    if (fields.size() > 3 && !fields[3].empty()) {
      auto parts = internal::split(fields[3], ':');
      if (parts.size() != 2 || !internal::parse_size(parts[0], row.mention.start) ||
          !internal::parse_size(parts[1], row.mention.end)) {
        throw Error("bad mention span");
      }
    }
    return row;
  });
  auto relations = read_indexed<TokenSeq>(relation_path, 2, [&](const auto& fields) {
    return read_tokens(fields[1], vocab);
  });

  GraphParts parts;
  parts.entity_count = entities.size();
  parts.relation_count = relations.size();
  size_t max_category = 0;
  bool any_category = false;
  for (auto& row : entities) {
    if (row.category) {
      any_category = true;
      max_category = std::max(max_category, *row.category);
    }
    parts.categories.push_back(row.category);
    parts.entity_descriptions.push_back(std::move(row.description));
    parts.description_mentions.push_back(row.mention);
  }
  parts.category_count = category_count.value_or(any_category ? max_category + 1 : 0);
  parts.relation_descriptions = std::move(relations);

  auto in = internal::open_input(triplet_path);
  std::set<Triplet> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = internal::strip_cr(line);
    if (text.empty()) continue;
    auto fields = internal::split(text, '\t');
    Triplet t;
    if (fields.size() != 3 || !internal::parse_size(fields[0], t.head) ||
        !internal::parse_size(fields[1], t.relation) || !internal::parse_size(fields[2], t.tail)) {
      internal::parse_error(triplet_path, line_no, "expected head<TAB>relation<TAB>tail");
    }
    if (t.head >= parts.entity_count || t.tail >= parts.entity_count) {
      internal::parse_error(triplet_path, line_no, "entity id out of range");
    }
    if (t.relation >= parts.relation_count) {
      internal::parse_error(triplet_path, line_no, "relation id out of range");
    }
    if (!seen.insert(t).second) internal::parse_error(triplet_path, line_no, "duplicate triplet");
    parts.triplets.push_back(t);
  }
  return KnowledgeGraph(std::move(parts));
}

}  // namespace kgjoint

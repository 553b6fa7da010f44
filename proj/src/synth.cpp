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

#include "kgjoint/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "kgjoint/rng.hpp"
#include "text_util.hpp"

namespace kgjoint {

namespace {

const char* const kFunctionWords[] = {"is", "a", "and", "what"};
constexpr size_t kFunctionWordCount = 4;

struct Layout {
  std::vector<std::vector<TokenId>> category_tokens;
  std::vector<std::vector<TokenId>> relation_tokens;
  std::vector<TokenId> names;
  std::vector<TokenId> fillers;
  TokenId is = 0, a = 0, conj = 0, what = 0;
};

Layout build_vocabulary(const WorldConfig& c, Vocabulary& vocab) {
  Layout l;
  l.is = vocab.add(kFunctionWords[0]);
  l.a = vocab.add(kFunctionWords[1]);
  l.conj = vocab.add(kFunctionWords[2]);
  l.what = vocab.add(kFunctionWords[3]);
  l.category_tokens.resize(c.categories);
  for (size_t k = 0; k < c.categories; ++k) {
    for (size_t j = 0; j < c.category_phrase_tokens; ++j) {
      l.category_tokens[k].push_back(vocab.add("c" + std::to_string(k) + "_" + std::to_string(j)));
    }
  }
  l.relation_tokens.resize(c.relations);
  for (size_t r = 0; r < c.relations; ++r) {
    for (size_t j = 0; j < c.relation_phrase_tokens; ++j) {
      l.relation_tokens[r].push_back(vocab.add("r" + std::to_string(r) + "_" + std::to_string(j)));
    }
  }
  for (size_t j = 0; j < c.name_pool; ++j) l.names.push_back(vocab.add("n" + std::to_string(j)));
  for (size_t j = 0; vocab.size() < c.vocab_size; ++j) {
    l.fillers.push_back(vocab.add("w" + std::to_string(j)));
  }
  return l;
}

size_t reserved_tokens(const WorldConfig& c) {
  return kSpecialTokenCount + kFunctionWordCount + c.categories * c.category_phrase_tokens +
         c.relations * c.relation_phrase_tokens + c.name_pool;
}

}  // namespace

void WorldConfig::validate() const {
  if (entities < 2 || relations == 0 || categories < 2 || sequences == 0) {
    throw Error("world config: counts must be positive (at least 2 entities and categories)");
  }
  if (category_phrase_tokens == 0 || relation_phrase_tokens == 0 || description_length == 0) {
    throw Error("world config: phrase and description lengths must be positive");
  }
  if (max_seq_len < 8) throw Error("world config: max_seq_len must be at least 8");
  if (!(concentration >= 0.0 && concentration <= 1.0) || !(homophily >= 0.0 && homophily <= 1.0) ||
      !(unlabeled_fraction >= 0.0 && unlabeled_fraction < 1.0)) {
    throw Error("world config: probabilities must lie in [0, 1]");
  }
  if (!(mean_degree > 0.0)) throw Error("world config: mean_degree must be positive");
  if (name_pool * (name_pool - 1) < entities) {
    throw Error("world config: name_pool too small for unique two-token names");
  }
  const size_t reserved = reserved_tokens(*this);
  if (vocab_size < reserved + 8) {
    throw Error("world config: vocabulary budget of " + std::to_string(vocab_size) +
                " cannot hold specials, category, relation and name tokens (" +
                std::to_string(reserved) + ") plus 8 filler tokens");
  }
  const double max_triplets = static_cast<double>(entities) * static_cast<double>(entities - 1) *
                              static_cast<double>(relations);
  if (static_cast<double>(entities) * mean_degree / 2.0 > 0.5 * max_triplets) {
    throw Error("world config: mean_degree too large for the entity count");
  }
}

std::map<std::string, std::string> WorldConfig::to_map() const {
  return {
      {"world.entities", std::to_string(entities)},
      {"world.relations", std::to_string(relations)},
      {"world.categories", std::to_string(categories)},
      {"world.vocab_size", std::to_string(vocab_size)},
      {"world.sequences", std::to_string(sequences)},
      {"world.max_seq_len", std::to_string(max_seq_len)},
      {"world.mean_degree", internal::format_double(mean_degree)},
      {"world.seed", std::to_string(seed)},
      {"world.concentration", internal::format_double(concentration)},
      {"world.homophily", internal::format_double(homophily)},
      {"world.category_phrase_tokens", std::to_string(category_phrase_tokens)},
      {"world.relation_phrase_tokens", std::to_string(relation_phrase_tokens)},
      {"world.name_pool", std::to_string(name_pool)},
      {"world.description_length", std::to_string(description_length)},
      {"world.unlabeled_fraction", internal::format_double(unlabeled_fraction)},
  };
}

double frequency_classifier_accuracy(const KnowledgeGraph& kg) {
  const size_t c = kg.category_count();
  if (c == 0) return 0.0;
  size_t vocab = 0;
  for (EntityId e = 0; e < kg.entity_count(); ++e) {
    for (TokenId t : kg.description(e)) vocab = std::max(vocab, t + 1);
  }
  auto content = [&](EntityId e) {
    std::vector<TokenId> out;
    const TokenSeq& d = kg.description(e);
    const Span& m = kg.description_mention(e);
    for (size_t i = 0; i < d.size(); ++i) {
      if (is_special(d[i]) || (i >= m.start && i <= m.end)) continue;
      out.push_back(d[i]);
    }
    return out;
  };
  std::vector<std::vector<double>> counts(c, std::vector<double>(vocab, 0.0));
  std::vector<double> totals(c, 0.0), priors(c, 0.0);
  for (EntityId e = 0; e < kg.entity_count(); e += 2) {
    if (!kg.category(e)) continue;
    const CategoryId k = *kg.category(e);
    priors[k] += 1.0;
    for (TokenId t : content(e)) {
      counts[k][t] += 1.0;
      totals[k] += 1.0;
    }
  }
  size_t correct = 0, seen = 0;
  for (EntityId e = 1; e < kg.entity_count(); e += 2) {
    if (!kg.category(e)) continue;
    double best = -INFINITY;
    CategoryId arg = 0;
    for (CategoryId k = 0; k < c; ++k) {
      double s = std::log(priors[k] + 1.0);
      for (TokenId t : content(e)) {
        s += std::log((counts[k][t] + 1.0) / (totals[k] + static_cast<double>(vocab)));
      }
      if (s > best) {
        best = s;
        arg = k;
      }
    }
    correct += arg == *kg.category(e);
    ++seen;
  }
  return seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
}

World generate_world(const WorldConfig& config) {
  config.validate();
  World world;
  world.config = config;
  const Layout layout = build_vocabulary(config, world.vocab);
  const size_t n = config.entities;
  Rng rng = make_rng(config.seed, {0x3011d});

  // Categories and names.
  world.true_categories.resize(n);
  std::vector<std::vector<EntityId>> by_category(config.categories);
  for (EntityId e = 0; e < n; ++e) {
    world.true_categories[e] = uniform_index(rng, config.categories);
    by_category[world.true_categories[e]].push_back(e);
  }
  std::vector<std::pair<TokenId, TokenId>> pairs;
  for (TokenId a : layout.names) {
    for (TokenId b : layout.names) {
      if (a != b) pairs.emplace_back(a, b);
    }
  }
  shuffle(pairs, rng);
  pairs.resize(n);

  GraphParts parts;
  parts.entity_count = n;
  parts.relation_count = config.relations;
  parts.category_count = config.categories;
  for (EntityId e = 0; e < n; ++e) {
    const CategoryId k = world.true_categories[e];
    const bool hidden = uniform_unit(rng) < config.unlabeled_fraction;
    parts.categories.push_back(hidden ? std::nullopt : std::optional<CategoryId>(k));
    TokenSeq desc{kClsToken, pairs[e].first, pairs[e].second, layout.is, layout.a};
    for (size_t j = 0; j < config.description_length; ++j) {
      if (uniform_unit(rng) < config.concentration) {
        desc.push_back(layout.category_tokens[k][uniform_index(rng, config.category_phrase_tokens)]);
      } else {
        desc.push_back(layout.fillers[uniform_index(rng, layout.fillers.size())]);
      }
    }
    desc.push_back(kEosToken);
    parts.entity_descriptions.push_back(std::move(desc));
    parts.description_mentions.push_back({1, 2});
  }
  for (RelationId r = 0; r < config.relations; ++r) {
    TokenSeq desc{kClsToken};
    desc.insert(desc.end(), layout.relation_tokens[r].begin(), layout.relation_tokens[r].end());
    desc.push_back(kEosToken);
    parts.relation_descriptions.push_back(std::move(desc));
  }

  // Triplets with category-structured tails.
  const auto target = static_cast<size_t>(std::llround(static_cast<double>(n) * config.mean_degree / 2.0));
  std::set<Triplet> seen;
  size_t attempts = 0;
  while (seen.size() < target) {
    if (++attempts > 100 * target + 1000) throw Error("generate_world: could not place triplets");
    const RelationId r = uniform_index(rng, config.relations);
    const EntityId h = uniform_index(rng, n);
    EntityId t;
    if (uniform_unit(rng) < config.homophily) {
      const CategoryId want = r % config.categories;
      const auto& pool = by_category[want];
      if (pool.empty()) continue;
      t = pool[uniform_index(rng, pool.size())];
    } else {
      t = uniform_index(rng, n);
    }
    if (t == h) continue;
    Triplet trip{h, r, t};
    if (seen.insert(trip).second) parts.triplets.push_back(trip);
  }
  world.kg = KnowledgeGraph(std::move(parts));

  // Corpus: one to three clauses "[adj] head rel-phrase [adj] tail".
  const auto& triplets = world.kg.triplets();
  auto clause = [&](const Triplet& t, TokenSeq& tokens, std::vector<Mention>& mentions) {
    auto entity = [&](EntityId e) {
      if (uniform_unit(rng) < 0.3) {
        const auto& adj = layout.category_tokens[world.true_categories[e]];
        tokens.push_back(adj[uniform_index(rng, adj.size())]);
      }
      const size_t start = tokens.size();
      tokens.push_back(pairs[e].first);
      tokens.push_back(pairs[e].second);
      mentions.push_back({e, start, start + 1});
    };
    entity(t.head);
    const auto& rel = layout.relation_tokens[t.relation];
    const size_t phrase = 1 + uniform_index(rng, std::min<size_t>(2, rel.size()));
    for (size_t j = 0; j < phrase; ++j) tokens.push_back(rel[uniform_index(rng, rel.size())]);
    entity(t.tail);
    if (uniform_unit(rng) < 0.1) tokens.push_back(layout.fillers[uniform_index(rng, layout.fillers.size())]);
  };
  for (size_t s = 0; s < config.sequences; ++s) {
    const double u = uniform_unit(rng);
    const size_t clauses = u < 0.4 ? 1 : (u < 0.75 ? 2 : 3);
    AnnotatedSequence seq;
    seq.tokens.push_back(kClsToken);
    std::vector<Triplet> realized;
    Triplet current = triplets[uniform_index(rng, triplets.size())];
    for (size_t c = 0; c < clauses; ++c) {
      TokenSeq tokens;
      std::vector<Mention> mentions;
      clause(current, tokens, mentions);
      const size_t joiner = c > 0 ? 1 : 0;
      if (seq.tokens.size() + joiner + tokens.size() + 1 > config.max_seq_len) break;
      if (joiner) seq.tokens.push_back(layout.conj);
      const size_t offset = seq.tokens.size();
      for (Mention m : mentions) {
        m.start += offset;
        m.end += offset;
        seq.mentions.push_back(m);
      }
      seq.tokens.insert(seq.tokens.end(), tokens.begin(), tokens.end());
      realized.push_back(current);
      // Chain through the tail when it has outgoing edges.
      auto next = neighbors(world.kg, current.tail);
      if (!next.empty()) {
        const Neighbor& nb = next[uniform_index(rng, next.size())];
        current = {current.tail, nb.relation, nb.entity};
      } else {
        current = triplets[uniform_index(rng, triplets.size())];
      }
    }
    seq.tokens.push_back(kEosToken);
    world.corpus.push_back(std::move(seq));
    world.sequence_triplets.push_back(std::move(realized));
  }

  world.planted_signal_accuracy = frequency_classifier_accuracy(world.kg);
  if (world.planted_signal_accuracy <= 5.0 / static_cast<double>(config.categories)) {
    throw Error("generate_world: planted category signal too weak (accuracy " +
                internal::format_double(world.planted_signal_accuracy) + ")");
  }
  return world;
}

void write_world(const World& world, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);
  world.vocab.save((root / "vocab.txt").string());
  save_graph(world.kg, world.vocab, (root / "entities.tsv").string(),
             (root / "relations.tsv").string(), (root / "triplets.tsv").string());
  save_corpus(world.corpus, world.vocab, (root / "corpus.tsv").string());
  {
    auto out = internal::open_output((root / "clauses.tsv").string());
    for (const auto& realized : world.sequence_triplets) {
      for (size_t i = 0; i < realized.size(); ++i) {
        out << (i ? ";" : "") << realized[i].head << ':' << realized[i].relation << ':'
            << realized[i].tail;
      }
      out << '\n';
    }
  }
  auto out = internal::open_output((root / "manifest.txt").string());
  for (const auto& [key, value] : world.config.to_map()) out << key << '=' << value << '\n';
  out << "generated.triplets=" << world.kg.triplets().size() << '\n';
  out << "generated.planted_signal_accuracy=" << internal::format_double(world.planted_signal_accuracy) << '\n';
}

World read_world(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  World world;
  {
    const std::string path = (root / "manifest.txt").string();
    auto in = internal::open_input(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = std::string(internal::strip_cr(line.substr(eq + 1)));
    }
    auto get_size = [&](const std::string& key, size_t& out) {
      if (auto it = kv.find(key); it != kv.end()) {
        if (!internal::parse_size(it->second, out)) throw Error(path + ": bad value for " + key);
      }
    };
    auto get_double = [&](const std::string& key, double& out) {
      if (auto it = kv.find(key); it != kv.end()) out = std::stod(it->second);
    };
    WorldConfig& c = world.config;
    get_size("world.entities", c.entities);
    get_size("world.relations", c.relations);
    get_size("world.categories", c.categories);
    get_size("world.vocab_size", c.vocab_size);
    get_size("world.sequences", c.sequences);
    get_size("world.max_seq_len", c.max_seq_len);
    size_t seed = c.seed;
    get_size("world.seed", seed);
    c.seed = seed;
    get_double("world.mean_degree", c.mean_degree);
    get_double("world.concentration", c.concentration);
    get_double("world.homophily", c.homophily);
    get_size("world.category_phrase_tokens", c.category_phrase_tokens);
    get_size("world.relation_phrase_tokens", c.relation_phrase_tokens);
    get_size("world.name_pool", c.name_pool);
    get_size("world.description_length", c.description_length);
    get_double("world.unlabeled_fraction", c.unlabeled_fraction);
    get_double("generated.planted_signal_accuracy", world.planted_signal_accuracy);
  }
  world.vocab = Vocabulary::load((root / "vocab.txt").string());
  world.kg = load_graph((root / "entities.tsv").string(), (root / "relations.tsv").string(),
                        (root / "triplets.tsv").string(), world.vocab, world.config.categories);
  world.corpus = load_corpus((root / "corpus.tsv").string(), world.vocab, world.kg.entity_count());
  for (EntityId e = 0; e < world.kg.entity_count(); ++e) {
    world.true_categories.push_back(world.kg.category(e).value_or(world.kg.category_count()));
  }
  const fs::path clauses = root / "clauses.tsv";
  if (fs::exists(clauses)) {
    auto in = internal::open_input(clauses.string());
    std::string line;
    while (std::getline(in, line)) {
      std::vector<Triplet> realized;
      std::string_view text = internal::strip_cr(line);
      if (!text.empty()) {
        for (auto triple : internal::split(text, ';')) {
          auto f = internal::split(triple, ':');
          Triplet t;
          if (f.size() != 3 || !internal::parse_size(f[0], t.head) ||
              !internal::parse_size(f[1], t.relation) || !internal::parse_size(f[2], t.tail)) {
            throw Error(clauses.string() + ": bad clause triplet");
          }
          realized.push_back(t);
        }
      }
      world.sequence_triplets.push_back(std::move(realized));
    }
  }
  world.sequence_triplets.resize(world.corpus.size());
  return world;
}

std::vector<Question> generate_qa(const KnowledgeGraph& kg, const Vocabulary& vocab, size_t hops,
                                  size_t count, uint64_t seed) {
  if (hops != 1 && hops != 2) throw Error("generate_qa: hops must be 1 or 2");
  if (kg.entity_count() == 0 || kg.triplets().empty()) throw Error("generate_qa: empty graph");
  Rng rng = make_rng(seed, {0x9a, hops});
  const TokenId what = vocab.id("what");
  auto phrase_token = [&](RelationId r) {
    const TokenSeq& d = kg.relation_description(r);
    return d.size() > 2 ? d[1] : kUnkToken;
  };
  std::vector<Question> out;
  size_t attempts = 0;
  const auto& triplets = kg.triplets();
  while (out.size() < count) {
    if (++attempts > 200 * count + 1000) break;
    const Triplet& first = triplets[uniform_index(rng, triplets.size())];
    Question q;
    q.topic = first.head;
    q.hops = hops;
    std::vector<RelationId> path{first.relation};
    if (hops == 1) {
      q.answer = first.tail;
      for (const Neighbor& nb : neighbors(kg, first.head)) {
        if (nb.relation == first.relation) q.answers.push_back(nb.entity);
      }
    } else {
      auto next = neighbors(kg, first.tail);
      std::erase_if(next, [&](const Neighbor& nb) { return nb.entity == first.head; });
      if (next.empty()) continue;
      const Neighbor& second = next[uniform_index(rng, next.size())];
      path.push_back(second.relation);
      q.answer = second.entity;
      for (const Neighbor& a : neighbors(kg, first.head)) {
        if (a.relation != first.relation) continue;
        for (const Neighbor& b : neighbors(kg, a.entity)) {
          if (b.relation == second.relation && b.entity != first.head) q.answers.push_back(b.entity);
        }
      }
    }
    std::sort(q.answers.begin(), q.answers.end());
    q.answers.erase(std::unique(q.answers.begin(), q.answers.end()), q.answers.end());
    q.candidates = k_hop_neighbors(kg, q.topic, hops);
    const Span name = kg.description_mention(q.topic);
    const TokenSeq& desc = kg.description(q.topic);
    q.text.tokens.push_back(kClsToken);
    for (size_t i = name.start; i <= name.end; ++i) q.text.tokens.push_back(desc[i]);
    q.text.mentions.push_back({q.topic, 1, name.end - name.start + 1});
    for (RelationId r : path) q.text.tokens.push_back(phrase_token(r));
    q.text.tokens.push_back(what);
    q.text.tokens.push_back(kEosToken);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<RelationInstance> relation_instances(const World& world) {
  std::vector<RelationInstance> out;
  for (size_t s = 0; s < world.corpus.size(); ++s) {
    const auto& realized = world.sequence_triplets[s];
    if (realized.size() != 1 || world.corpus[s].mentions.size() != 2) continue;
    out.push_back({world.corpus[s], realized[0].relation});
  }
  return out;
}

std::vector<Episode> generate_episodes(const std::vector<RelationInstance>& instances,
                                       const std::vector<RelationId>& relation_pool,
                                       const EpisodeOptions& options) {
  if (options.n_way == 0 || options.k_shot == 0) throw Error("generate_episodes: N and K must be positive");
  if (relation_pool.size() < options.n_way) {
    throw Error("generate_episodes: relation pool smaller than N");
  }
  std::map<RelationId, std::vector<size_t>> by_relation;
  for (RelationId r : relation_pool) by_relation[r];
  for (size_t i = 0; i < instances.size(); ++i) {
    auto it = by_relation.find(instances[i].relation);
    if (it != by_relation.end()) it->second.push_back(i);
  }
  for (const auto& [r, list] : by_relation) {
    if (list.size() < options.k_shot + options.queries) {
      throw Error("generate_episodes: relation " + std::to_string(r) + " has only " +
                  std::to_string(list.size()) + " instances");
    }
  }
  std::vector<RelationId> pool(relation_pool.begin(), relation_pool.end());
  std::sort(pool.begin(), pool.end());
  Rng rng = make_rng(options.seed, {0xe915});
  std::vector<Episode> episodes;
  for (size_t e = 0; e < options.count; ++e) {
    Episode ep;
    for (size_t i : sample_without_replacement(pool.size(), options.n_way, rng)) ep.classes.push_back(pool[i]);
    std::set<size_t> used;
    std::vector<std::vector<size_t>> remaining;
    for (RelationId r : ep.classes) {
      std::vector<size_t> list = by_relation[r];
      shuffle(list, rng);
      ep.support.emplace_back(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(options.k_shot));
      used.insert(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(options.k_shot));
      remaining.emplace_back(list.begin() + static_cast<std::ptrdiff_t>(options.k_shot), list.end());
    }
    for (size_t q = 0; q < options.queries; ++q) {
      const size_t c = uniform_index(rng, options.n_way);
      if (remaining[c].empty()) continue;
      const size_t inst = remaining[c].back();
      remaining[c].pop_back();
      ep.queries.push_back(inst);
      ep.query_labels.push_back(c);
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

RelationSplit split_relations(size_t relation_count, size_t test_count, uint64_t seed) {
  if (test_count == 0 || test_count >= relation_count) {
    throw Error("split_relations: test_count must leave both sides nonempty");
  }
  std::vector<RelationId> ids(relation_count);
  for (size_t r = 0; r < relation_count; ++r) ids[r] = r;
  Rng rng = make_rng(seed, {0x5911});
  shuffle(ids, rng);
  RelationSplit split;
  split.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_count));
  split.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(test_count), ids.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace kgjoint

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
#include <map>
#include <string>
#include <vector>

#include "kgjoint/corpus.hpp"
#include "kgjoint/graph.hpp"
#include "kgjoint/vocab.hpp"

namespace kgjoint {

// Synthetic world with planted signal:
//  - every category owns a set of phrase tokens that dominate the
//    descriptions of its entities;
//  - every relation owns connective tokens and prefers tails of category
//    r mod C, so incoming relation types reveal an entity's category;
//  - entity names are unique two-token combinations.
struct WorldConfig {
  size_t entities = 500;
  size_t relations = 8;
  size_t categories = 10;
  size_t vocab_size = 400;
  size_t sequences = 5000;
  size_t max_seq_len = 32;
  double mean_degree = 6.0;
  uint64_t seed = 1;

  // Probability mass on category phrase tokens in descriptions.
  double concentration = 0.8;
  // Probability that a triplet's tail follows the relation's category map.
  double homophily = 0.85;
  size_t category_phrase_tokens = 4;
  size_t relation_phrase_tokens = 3;
  size_t name_pool = 32;
  size_t description_length = 16;
  double unlabeled_fraction = 0.05;

  void validate() const;
  // Flat key=value rendering, keys prefixed with "world.".
  std::map<std::string, std::string> to_map() const;
};

struct World {
  WorldConfig config;
  Vocabulary vocab;
  KnowledgeGraph kg;
  std::vector<AnnotatedSequence> corpus;
  // Triplets realized by each corpus sequence, in clause order.
  std::vector<std::vector<Triplet>> sequence_triplets;
  // Generation-time categories, including entities whose label is hidden.
  std::vector<CategoryId> true_categories;
  // Held-out accuracy of a naive-Bayes description classifier.
  double planted_signal_accuracy = 0.0;
};

World generate_world(const WorldConfig& config);

// Held-out category accuracy of a multinomial naive-Bayes classifier on
// description tokens (even ids train, odd ids test).
double frequency_classifier_accuracy(const KnowledgeGraph& kg);

// Files: vocab.txt, entities.tsv, relations.tsv, triplets.tsv, corpus.tsv,
// clauses.tsv, manifest.txt.
void write_world(const World& world, const std::string& dir);
World read_world(const std::string& dir);

struct Question {
  AnnotatedSequence text;  // exactly one mention: the topic entity
  EntityId topic = 0;
  EntityId answer = 0;
  // Every entity the question's relation path reaches from the topic.
  std::vector<EntityId> answers;
  std::vector<EntityId> candidates;
  size_t hops = 1;
};

// Templated k-hop questions ("<topic> <relation phrases> what").
std::vector<Question> generate_qa(const KnowledgeGraph& kg, const Vocabulary& vocab, size_t hops,
                                  size_t count, uint64_t seed);

struct RelationInstance {
  AnnotatedSequence text;  // head and tail mentions
  RelationId relation = 0;
};

// Single-clause corpus sequences, labelled with their relation.
std::vector<RelationInstance> relation_instances(const World& world);

struct Episode {
  std::vector<RelationId> classes;
  // support[c] holds k instance indices of class c.
  std::vector<std::vector<size_t>> support;
  std::vector<size_t> queries;
  std::vector<size_t> query_labels;  // index into classes
};

struct EpisodeOptions {
  size_t n_way = 5;
  size_t k_shot = 1;
  size_t queries = 5;
  size_t count = 100;
  uint64_t seed = 1;
};

// Episodes drawn from the given relation pool only.
std::vector<Episode> generate_episodes(const std::vector<RelationInstance>& instances,
                                       const std::vector<RelationId>& relation_pool,
                                       const EpisodeOptions& options);

struct RelationSplit {
  std::vector<RelationId> train;
  std::vector<RelationId> test;
};

RelationSplit split_relations(size_t relation_count, size_t test_count, uint64_t seed);

}  // namespace kgjoint

// Copyright 2026 The mstag Authors.
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

#ifndef MSTAG_EVAL_HPP_
#define MSTAG_EVAL_HPP_

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mstag/data.hpp"
#include "mstag/matrix.hpp"

namespace mstag {

class ConsensusModel;

struct Chunk {
  int type = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::size_t sentence = 0;

  auto operator<=>(const Chunk&) const = default;
};

// Maximal B-X (I-X)* runs. Input must be valid BIO; throws StructuralError
// otherwise.
std::vector<Chunk> extract_chunks(const TagSeq& tags, const TagDict& dict,
                                  std::size_t sentence = 0);
std::vector<Chunk> extract_chunks(const std::vector<TagSeq>& corpus, const TagDict& dict);
TagSeq tags_from_chunks(const std::vector<Chunk>& chunks, std::size_t length, const TagDict& dict);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

// Exact (type, span, sentence) matches; empty denominators give 0.
Prf prf1(const std::vector<Chunk>& predicted, const std::vector<Chunk>& gold);
// Restricted to chunks of one entity type.
Prf prf1_for_type(const std::vector<Chunk>& predicted, const std::vector<Chunk>& gold, int type);
Prf corpus_prf1(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                const TagDict& dict);

// Throws StructuralError on misaligned lengths and DataError on an empty corpus.
double token_accuracy(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold);

// Chunk F1 for BIO dictionaries, token accuracy otherwise.
double label_score(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                   const TagDict& dict);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::map<std::string, Prf> per_type;
  // Headline number: f1 for BIO tag sets, accuracy otherwise.
  double primary = 0.0;
};

Metrics evaluate_tags(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                      const TagDict& dict);
Metrics evaluate_labels(const std::vector<int>& predicted, const std::vector<int>& gold);

struct ExpertiseMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> types;
  Matrix f1;  // sources x types
};

// per_source[k][i] is source k's tag sequence for sentence i or null when
// the source skipped it.
ExpertiseMatrix expertise_matrix(const std::vector<std::vector<const TagSeq*>>& per_source,
                                 const std::vector<TagSeq>& gold, const TagDict& dict,
                                 const std::vector<std::string>& source_names);

struct AttentionSummary {
  std::vector<std::string> groups;
  std::vector<std::string> sources;
  Matrix mean;  // groups x sources, each row on the simplex
  std::vector<std::size_t> counts;
};

// Mean of the attention vectors in each group. Throws DataError when a group
// has no members.
AttentionSummary average_attention(const std::vector<Vector>& weights,
                                   const std::vector<std::size_t>& group_of,
                                   const std::vector<std::string>& group_names,
                                   const std::vector<std::string>& source_names);
AttentionSummary average_attention_by_source(const ConsensusModel& model,
                                             const std::vector<EncodedSentence>& sentences,
                                             const std::vector<std::size_t>& group_of,
                                             const std::vector<std::string>& group_names);

}  // namespace mstag

#endif  // MSTAG_EVAL_HPP_

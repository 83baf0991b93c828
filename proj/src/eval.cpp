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

#include "mstag/eval.hpp"

#include <algorithm>
#include <set>

#include "mstag/consensus.hpp"
#include "mstag/errors.hpp"

namespace mstag {

namespace {

Prf make_prf(std::size_t tp, std::size_t pred, std::size_t gold) {
  Prf r;
  r.true_positives = tp;
  r.predicted = pred;
  r.gold = gold;
  r.precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
  r.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0
                                       : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace

std::vector<Chunk> extract_chunks(const TagSeq& tags, const TagDict& dict, std::size_t sentence) {
  if (!dict.is_bio()) throw StructuralError("extract_chunks: tag set is not BIO");
  if (!is_valid_bio(tags, dict)) {
    throw StructuralError("extract_chunks: invalid BIO sequence (repair it first)");
  }
  std::vector<Chunk> out;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    if (dict.role(tags[t]) != TagRole::kBegin) continue;
    Chunk c{dict.entity_type(tags[t]), t, t, sentence};
    while (c.end + 1 < tags.size() && dict.role(tags[c.end + 1]) == TagRole::kInside) ++c.end;
    out.push_back(c);
    t = c.end;
  }
  return out;
}

std::vector<Chunk> extract_chunks(const std::vector<TagSeq>& corpus, const TagDict& dict) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto c = extract_chunks(corpus[i], dict, i);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

TagSeq tags_from_chunks(const std::vector<Chunk>& chunks, std::size_t length, const TagDict& dict) {
  TagSeq tags(length, 0);
  for (const Chunk& c : chunks) {
    if (c.end >= length || c.start > c.end) throw StructuralError("tags_from_chunks: bad span");
    tags[c.start] = dict.begin_id(c.type);
    for (std::size_t t = c.start + 1; t <= c.end; ++t) tags[t] = dict.inside_id(c.type);
  }
  return tags;
}

Prf prf1(const std::vector<Chunk>& predicted, const std::vector<Chunk>& gold) {
  std::multiset<Chunk> g(gold.begin(), gold.end());
  std::size_t tp = 0;
  for (const Chunk& c : predicted) {
    auto it = g.find(c);
    if (it != g.end()) {
      ++tp;
      g.erase(it);
    }
  }
  return make_prf(tp, predicted.size(), gold.size());
}

Prf prf1_for_type(const std::vector<Chunk>& predicted, const std::vector<Chunk>& gold, int type) {
  std::vector<Chunk> p, g;
  std::copy_if(predicted.begin(), predicted.end(), std::back_inserter(p),
               [&](const Chunk& c) { return c.type == type; });
  std::copy_if(gold.begin(), gold.end(), std::back_inserter(g),
               [&](const Chunk& c) { return c.type == type; });
  return prf1(p, g);
}

Prf corpus_prf1(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                const TagDict& dict) {
  if (predicted.size() != gold.size()) throw StructuralError("corpus_prf1: corpus size mismatch");
  return prf1(extract_chunks(predicted, dict), extract_chunks(gold, dict));
}

double token_accuracy(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold) {
  if (predicted.size() != gold.size()) throw StructuralError("token_accuracy: corpus size mismatch");
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].size() != gold[i].size()) {
      throw StructuralError("token_accuracy: sentence length mismatch");
    }
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      ++total;
      if (predicted[i][t] == gold[i][t]) ++correct;
    }
  }
  if (total == 0) throw DataError("token_accuracy: empty corpus");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double label_score(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                   const TagDict& dict) {
  if (dict.is_bio()) return corpus_prf1(predicted, gold, dict).f1;
  return token_accuracy(predicted, gold);
}

Metrics evaluate_tags(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& gold,
                      const TagDict& dict) {
  Metrics m;
  m.accuracy = token_accuracy(predicted, gold);
  if (!dict.is_bio()) {
    m.primary = m.accuracy;
    return m;
  }
  const auto p = extract_chunks(predicted, dict);
  const auto g = extract_chunks(gold, dict);
  const Prf all = prf1(p, g);
  m.precision = all.precision;
  m.recall = all.recall;
  m.f1 = all.f1;
  m.primary = m.f1;
  for (std::size_t t = 0; t < dict.entity_types().size(); ++t) {
    m.per_type[dict.entity_types()[t]] = prf1_for_type(p, g, static_cast<int>(t));
  }
  return m;
}

Metrics evaluate_labels(const std::vector<int>& predicted, const std::vector<int>& gold) {
  if (predicted.size() != gold.size()) throw StructuralError("evaluate_labels: size mismatch");
  if (gold.empty()) throw DataError("evaluate_labels: empty corpus");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i] ? 1 : 0;
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  m.primary = m.accuracy;
  return m;
}

ExpertiseMatrix expertise_matrix(const std::vector<std::vector<const TagSeq*>>& per_source,
                                 const std::vector<TagSeq>& gold, const TagDict& dict,
                                 const std::vector<std::string>& source_names) {
  ExpertiseMatrix e;
  e.sources = source_names;
  e.types = dict.entity_types();
  e.f1 = Matrix(per_source.size(), e.types.size());
  for (std::size_t k = 0; k < per_source.size(); ++k) {
    if (per_source[k].size() != gold.size()) throw StructuralError("expertise: size mismatch");
    std::vector<Chunk> pred, ref;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (per_source[k][i] == nullptr) continue;
      auto p = extract_chunks(*per_source[k][i], dict, i);
      auto g = extract_chunks(gold[i], dict, i);
      pred.insert(pred.end(), p.begin(), p.end());
      ref.insert(ref.end(), g.begin(), g.end());
    }
    for (std::size_t t = 0; t < e.types.size(); ++t) {
      e.f1(k, t) = prf1_for_type(pred, ref, static_cast<int>(t)).f1;
    }
  }
  return e;
}

AttentionSummary average_attention(const std::vector<Vector>& weights,
                                   const std::vector<std::size_t>& group_of,
                                   const std::vector<std::string>& group_names,
                                   const std::vector<std::string>& source_names) {
  if (weights.size() != group_of.size()) throw StructuralError("average_attention: size mismatch");
  AttentionSummary s;
  s.groups = group_names;
  s.sources = source_names;
  s.mean = Matrix(group_names.size(), source_names.size());
  s.counts.assign(group_names.size(), 0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::size_t g = group_of[i];
    if (g >= group_names.size()) throw StructuralError("average_attention: group out of range");
    if (weights[i].size() != source_names.size()) {
      throw StructuralError("average_attention: weight length mismatch");
    }
    for (std::size_t k = 0; k < source_names.size(); ++k) s.mean(g, k) += weights[i][k];
    ++s.counts[g];
  }
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    if (s.counts[g] == 0) throw DataError("average_attention: empty group " + group_names[g]);
    for (std::size_t k = 0; k < source_names.size(); ++k) {
      s.mean(g, k) /= static_cast<double>(s.counts[g]);
    }
  }
  return s;
}

AttentionSummary average_attention_by_source(const ConsensusModel& model,
                                             const std::vector<EncodedSentence>& sentences,
                                             const std::vector<std::size_t>& group_of,
                                             const std::vector<std::string>& group_names) {
  std::vector<Vector> q;
  q.reserve(sentences.size());
  for (const auto& s : sentences) {
    q.push_back(attention_weights(model.bank, frozen_features(model, s).embedding));
  }
  std::vector<std::string> names;
  for (const auto& src : model.sources()) names.push_back(src.name);
  return average_attention(q, group_of, group_names, names);
}

}  // namespace mstag

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

#include "mstag/aggregation.hpp"

#include <algorithm>
#include <numeric>

#include "mstag/errors.hpp"
#include "mstag/eval.hpp"
#include "mstag/log.hpp"

namespace mstag {

namespace {

SourceWeights uniform(std::size_t k) { return SourceWeights(k, 1.0 / static_cast<double>(k)); }

void check_weights(std::size_t candidates, std::span<const double> weights) {
  if (candidates != weights.size()) {
    throw StructuralError("vote: " + std::to_string(candidates) + " candidates but " +
                          std::to_string(weights.size()) + " weights");
  }
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kConcat: return "CONCAT";
    case Strategy::kOmv: return "OMV";
    case Strategy::kMvt: return "MVT";
    case Strategy::kMvs: return "MVS";
    case Strategy::kPmv: return "PMV";
    case Strategy::kAmv: return "AMV";
    case Strategy::kAwv: return "AWV";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kConcat, Strategy::kOmv, Strategy::kMvt, Strategy::kMvs,
                     Strategy::kPmv, Strategy::kAmv, Strategy::kAwv}) {
    if (strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown aggregation strategy '" + std::string(name) + "'");
}

SourceWeights source_weights_from_f1(std::span<const double> f1) {
  if (f1.empty()) throw StructuralError("source_weights_from_f1: no sources");
  double sum = 0.0;
  for (double v : f1) {
    if (!(v >= 0.0 && v <= 1.0)) throw StructuralError("source_weights_from_f1: score outside [0, 1]");
    sum += v;
  }
  if (sum == 0.0) {
    log_warning("all source scores are zero; using uniform source weights");
    return uniform(f1.size());
  }
  SourceWeights w(f1.begin(), f1.end());
  for (double& v : w) v /= sum;
  return w;
}

TagSeq weighted_vote_token(std::span<const TagSeq* const> candidates,
                           std::span<const double> weights, const TagDict& dict) {
  check_weights(candidates.size(), weights);
  const TagSeq* first = nullptr;
  for (const TagSeq* c : candidates) {
    if (c == nullptr) continue;
    if (first == nullptr) first = c;
    if (c->size() != first->size()) throw StructuralError("vote: candidate length mismatch");
  }
  if (first == nullptr) throw DataError("vote: no source labeled this sentence");
  const std::size_t n = first->size(), L = dict.size();
  TagSeq out(n, 0);
  Vector score(L);
  for (std::size_t t = 0; t < n; ++t) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (candidates[k] == nullptr) continue;
      const int tag = (*candidates[k])[t];
      if (tag < 0 || static_cast<std::size_t>(tag) >= L) throw StructuralError("vote: tag out of range");
      score[static_cast<std::size_t>(tag)] += weights[k];
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < L; ++j) {
      if (score[j] > score[best]) best = j;
    }
    out[t] = static_cast<int>(best);
  }
  return repair_bio(out, dict);
}

TagSeq sequence_vote(std::span<const TagSeq* const> candidates, std::span<const double> weights) {
  check_weights(candidates.size(), weights);
  const TagSeq* best = nullptr;
  double best_weight = -1.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k] == nullptr) continue;
    if (best && candidates[k]->size() != best->size()) {
      throw StructuralError("vote: candidate length mismatch");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (candidates[j] != nullptr && *candidates[j] == *candidates[k]) total += weights[j];
    }
    if (total > best_weight) {
      best_weight = total;
      best = candidates[k];
    }
  }
  if (best == nullptr) throw DataError("vote: no source labeled this sentence");
  return *best;
}

int weighted_vote_label(std::span<const int> labels, std::span<const double> weights,
                        std::size_t num_labels) {
  check_weights(labels.size(), weights);
  Vector score(num_labels, 0.0);
  bool any = false;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] < 0) continue;
    if (static_cast<std::size_t>(labels[k]) >= num_labels) throw StructuralError("vote: label out of range");
    score[static_cast<std::size_t>(labels[k])] += weights[k];
    any = true;
  }
  if (!any) throw DataError("vote: no votes");
  std::size_t best = 0;
  for (std::size_t j = 1; j < num_labels; ++j) {
    if (score[j] > score[best]) best = j;
  }
  return static_cast<int>(best);
}

std::vector<TrainingPair> concat_labels(const MultiSourceDataset& data) {
  std::vector<TrainingPair> pairs;
  for (std::size_t k = 0; k < data.num_sources(); ++k) {
    for (std::size_t i : data.annotated_by(k)) pairs.push_back({i, k});
  }
  return pairs;
}

namespace {

std::vector<TagSeq> original_vote(const MultiSourceDataset& data, bool sequence_level) {
  const std::size_t K = data.num_sources();
  const SourceWeights w = uniform(K);
  std::vector<TagSeq> out;
  out.reserve(data.num_sentences());
  std::vector<const TagSeq*> cands(K);
  for (std::size_t i = 0; i < data.num_sentences(); ++i) {
    for (std::size_t k = 0; k < K; ++k) cands[k] = data.annotation(k, i);
    out.push_back(sequence_level ? repair_bio(sequence_vote(cands, w), data.dict())
                                 : weighted_vote_token(cands, w, data.dict()));
  }
  return out;
}

}  // namespace

SourceWeights crowd_source_weights(const MultiSourceDataset& data) {
  const auto omv = original_vote(data, false);
  Vector scores(data.num_sources(), 0.0);
  for (std::size_t k = 0; k < data.num_sources(); ++k) {
    std::vector<TagSeq> pred, ref;
    for (std::size_t i : data.annotated_by(k)) {
      pred.push_back(repair_bio(*data.annotation(k, i), data.dict()));
      ref.push_back(omv[i]);
    }
    if (!pred.empty()) scores[k] = label_score(pred, ref, data.dict());
  }
  return source_weights_from_f1(scores);
}

PseudoLabelSet generate_pseudo_labels(const ConsensusModel* model, const MultiSourceDataset& data,
                                      const std::vector<EncodedSentence>& encoded,
                                      Strategy strategy,
                                      const std::optional<SourceWeights>& weights, Exec exec) {
  PseudoLabelSet set;
  set.strategy = strategy;
  const std::size_t K = data.num_sources();
  switch (strategy) {
    case Strategy::kConcat:
      throw StructuralError("CONCAT produces training pairs, not pseudo labels");
    case Strategy::kOmv:
    case Strategy::kMvt:
      set.weights = uniform(K);
      set.provenance = "original annotations, token vote";
      set.labels = original_vote(data, false);
      return set;
    case Strategy::kMvs:
      set.weights = uniform(K);
      set.provenance = "original annotations, sequence vote";
      set.labels = original_vote(data, true);
      return set;
    case Strategy::kPmv:
    case Strategy::kAmv:
    case Strategy::kAwv:
      break;
  }
  if (model == nullptr) {
    throw StructuralError(strategy_name(strategy) + " needs a decoupling-phase model");
  }
  if (encoded.size() != data.num_sentences()) {
    throw StructuralError("generate_pseudo_labels: encoded sentence count mismatch");
  }
  if (model->num_sources() != K) {
    throw StructuralError("generate_pseudo_labels: model and dataset disagree on source count");
  }
  if (strategy == Strategy::kAwv) {
    set.weights = weights ? *weights : crowd_source_weights(data);
    if (set.weights.size() != K) throw StructuralError("AWV: weight count != source count");
    set.provenance = "source model predictions, F1-weighted token vote";
  } else {
    set.weights = uniform(K);
    set.provenance = strategy == Strategy::kPmv
                         ? "source model predictions on annotated sentences, token vote"
                         : "source model predictions, token vote";
  }
  std::vector<std::vector<TagSeq>> predictions(K);
  for (std::size_t k = 0; k < K; ++k) {
    predictions[k] = decode_corpus(*model, encoded, Decoder::with_source(k), exec);
  }
  set.labels.resize(data.num_sentences());
  for_each_index(data.num_sentences(), exec, [&](std::size_t i) {
    std::vector<const TagSeq*> cands(K);
    for (std::size_t k = 0; k < K; ++k) {
      const bool votes = strategy != Strategy::kPmv || data.annotation(k, i) != nullptr;
      cands[k] = votes ? &predictions[k][i] : nullptr;
    }
    set.labels[i] = weighted_vote_token(cands, set.weights, data.dict());
  });
  return set;
}

std::vector<int> generate_pseudo_class_labels(const ConsensusModel& model,
                                              const std::vector<const SparseFeatures*>& examples,
                                              Strategy strategy,
                                              const std::optional<SourceWeights>& weights,
                                              Exec exec) {
  const std::size_t K = model.num_sources();
  SourceWeights w;
  if (strategy == Strategy::kAmv) {
    w = uniform(K);
  } else if (strategy == Strategy::kAwv) {
    if (!weights) throw StructuralError("AWV classification needs explicit source weights");
    w = *weights;
  } else {
    throw ConfigError("classification pseudo labels support AMV and AWV only");
  }
  std::vector<std::vector<int>> predictions(K);
  for (std::size_t k = 0; k < K; ++k) {
    predictions[k] = classify_corpus(model, examples, Decoder::with_source(k), exec);
  }
  std::vector<int> out(examples.size());
  for_each_index(examples.size(), exec, [&](std::size_t i) {
    std::vector<int> votes(K);
    for (std::size_t k = 0; k < K; ++k) votes[k] = predictions[k][i];
    out[i] = weighted_vote_label(votes, w, model.num_labels());
  });
  return out;
}

}  // namespace mstag

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

#ifndef MSTAG_AGGREGATION_HPP_
#define MSTAG_AGGREGATION_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mstag/consensus.hpp"
#include "mstag/data.hpp"
#include "mstag/parallel.hpp"

namespace mstag {

// CONCAT: every annotation is a gold example. OMV/MVT: token majority vote
// over original annotations. MVS: whole-sequence plurality over original
// annotations. PMV: token vote over each source model's predictions on the
// sentences that source annotated. AMV: uniform token vote over all source
// model predictions. AWV: AMV weighted by per-source F1.
enum class Strategy { kConcat, kOmv, kMvt, kMvs, kPmv, kAmv, kAwv };

std::string strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);  // throws ConfigError

using SourceWeights = Vector;

// f1_k / sum(f1). All-zero input falls back to uniform with a warning.
SourceWeights source_weights_from_f1(std::span<const double> f1);

// Per token, the tag with the largest summed weight; null candidates do not
// vote; ties go to the lowest tag id. The result is BIO-repaired.
TagSeq weighted_vote_token(std::span<const TagSeq* const> candidates,
                           std::span<const double> weights, const TagDict& dict);

// The complete candidate with the largest summed weight over the sources
// proposing exactly it; ties go to the lowest source id.
TagSeq sequence_vote(std::span<const TagSeq* const> candidates, std::span<const double> weights);

// Weighted vote over single labels (-1 = no vote). Ties go to the lowest id.
int weighted_vote_label(std::span<const int> labels, std::span<const double> weights,
                        std::size_t num_labels);

struct TrainingPair {
  std::size_t sentence = 0;
  std::size_t source = 0;
};

// One pair per (sentence, source annotation), ordered by source then sentence.
std::vector<TrainingPair> concat_labels(const MultiSourceDataset& data);

struct PseudoLabelSet {
  Strategy strategy = Strategy::kOmv;
  SourceWeights weights;
  std::string provenance;
  std::vector<TagSeq> labels;
};

// F1 of each source's annotations against the OMV labels, normalized.
SourceWeights crowd_source_weights(const MultiSourceDataset& data);

// encoded[i] is the model input for data.sentences()[i]. PMV/AMV/AWV need a
// model (StructuralError otherwise). AWV without explicit weights uses
// crowd_source_weights.
PseudoLabelSet generate_pseudo_labels(const ConsensusModel* model, const MultiSourceDataset& data,
                                      const std::vector<EncodedSentence>& encoded,
                                      Strategy strategy,
                                      const std::optional<SourceWeights>& weights = std::nullopt,
                                      Exec exec = Exec::kParallel);

// AMV/AWV over per-source classifier predictions.
std::vector<int> generate_pseudo_class_labels(const ConsensusModel& model,
                                              const std::vector<const SparseFeatures*>& examples,
                                              Strategy strategy,
                                              const std::optional<SourceWeights>& weights,
                                              Exec exec = Exec::kParallel);

}  // namespace mstag

#endif  // MSTAG_AGGREGATION_HPP_

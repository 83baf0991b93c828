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

#ifndef MSTAG_CONSENSUS_HPP_
#define MSTAG_CONSENSUS_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mstag/crf.hpp"
#include "mstag/data.hpp"
#include "mstag/encoders.hpp"
#include "mstag/numerics.hpp"

namespace mstag {

enum class TaskMode { kSequence, kClassification };

struct ModelConfig {
  TaskMode mode = TaskMode::kSequence;
  BlstmConfig blstm;
  MlpConfig mlp;
  // Which scores the source matrices transform. kNone is the plain-CRF
  // ablation: source matrices exist but are never applied or trained.
  TransformTarget variant = TransformTarget::kBoth;
  // Base-model-only mode: every prediction ignores the source matrices.
  bool no_source_matrices = false;
  double source_init_std = 0.01;
};

// Per-source transformation matrices plus the attention weights over them.
struct SourceBank {
  std::vector<Param> matrices;  // K matrices, L x L (sequence) or h x h (classification)
  Param attention;              // K x embedding_dim
  bool no_source_matrices = false;

  std::size_t size() const { return matrices.size(); }
};

// Shared encoder and output layer, the source bank, and the label
// dictionary. Sequence mode uses blstm + crf; classification mode uses
// mlp + classifier.
class ConsensusModel {
 public:
  ConsensusModel() = default;
  ConsensusModel(const ModelConfig& config, Vocabularies vocab, TagDict labels,
                 std::vector<SourceInfo> sources);

  void init(Rng& rng);

  const ModelConfig& config() const { return config_; }
  TaskMode mode() const { return config_.mode; }
  const TagDict& labels() const { return labels_; }
  const Vocabularies& vocab() const { return vocab_; }
  const std::vector<SourceInfo>& sources() const { return sources_; }
  std::size_t num_sources() const { return bank.size(); }
  std::size_t num_labels() const { return labels_.size(); }
  std::size_t embedding_dim() const;
  // True when source matrices take part in scoring.
  bool uses_sources() const;

  void set_no_source_matrices(bool on);

  template <typename F>
  void for_each_shared_param(F&& f) {
    if (config_.mode == TaskMode::kSequence) {
      blstm.for_each_param(f);
      crf.for_each_param(f);
    } else {
      mlp.for_each_param(f);
      f(cls_w);
      f(cls_b);
    }
  }

  template <typename F>
  void for_each_param(F&& f) {
    for_each_shared_param(f);
    for (Param& a : bank.matrices) f(a);
    f(bank.attention);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    const_cast<ConsensusModel*>(this)->for_each_param(
        [&](Param& p) { f(static_cast<const Param&>(p)); });
  }

  BlstmEncoder blstm;
  CrfLayer crf;
  MlpEncoder mlp;
  Param cls_w;  // h x C
  Param cls_b;  // 1 x C
  SourceBank bank;

 private:
  ModelConfig config_;
  Vocabularies vocab_;
  TagDict labels_;
  std::vector<SourceInfo> sources_;
};

// ---------------------------------------------------------------------------
// Attention and consensus composition.

// softmax(Q h).
Vector attention_weights(const SourceBank& bank, std::span<const double> embedding);
// sum_k q_k A_k.
Matrix compose_consensus(const SourceBank& bank, std::span<const double> q);

// ---------------------------------------------------------------------------
// Sequence labeling.

struct SequenceExample {
  const EncodedSentence* sentence = nullptr;
  const TagSeq* tags = nullptr;
};

// Adds the gradient of -log P(tags | sentence) under source k's transformed
// scores into the shared parameters and A_k. Returns the NLL. Eval mode
// (training = false) disables dropout and makes the loss deterministic.
double accumulate_decoupling_gradient(ConsensusModel& model, const EncodedSentence& sentence,
                                      const TagSeq& tags, std::size_t source, bool training,
                                      Rng* rng);

// One SGD update of the shared parameters and A_k on a batch of source k's
// annotations. Q and every other A_j are left untouched. Returns the summed
// batch NLL.
double decoupling_train_step(ConsensusModel& model, std::span<const SequenceExample> batch,
                             std::size_t source, const OptimizerState& state, Rng& rng);

// Emission scores and sentence embedding from the frozen encoder (eval mode).
struct FrozenFeatures {
  Matrix emit;
  Vector embedding;
};
FrozenFeatures frozen_features(const ConsensusModel& model, const EncodedSentence& sentence);

// NLL of the pseudo labels under the consensus transformation; adds dL/dQ.
double accumulate_aggregation_gradient(ConsensusModel& model, const FrozenFeatures& features,
                                       const TagSeq& pseudo);
// One SGD update of Q only.
double aggregation_train_step(ConsensusModel& model, const FrozenFeatures& features,
                              const TagSeq& pseudo, const OptimizerState& state);
double aggregation_train_step(ConsensusModel& model, const EncodedSentence& sentence,
                              const TagSeq& pseudo, const OptimizerState& state);

// Decoders over precomputed frozen features.
TagSeq decode_base(const ConsensusModel& model, const FrozenFeatures& features);
TagSeq decode_with_source(const ConsensusModel& model, const FrozenFeatures& features,
                          std::size_t source);
TagSeq decode_with_consensus(const ConsensusModel& model, const FrozenFeatures& features);

// Decode under the untransformed (U, M).
TagSeq predict_base(const ConsensusModel& model, const EncodedSentence& sentence);
// Decode under (U A_k, M A_k), or plain scores without source matrices.
TagSeq predict_with_source(const ConsensusModel& model, const EncodedSentence& sentence,
                           std::size_t source);
// Decode under the per-sentence consensus matrix.
TagSeq predict_with_consensus(const ConsensusModel& model, const EncodedSentence& sentence);

// Transformed chain potentials for a given source matrix (null for none).
std::pair<Matrix, Matrix> transformed_potentials(const ConsensusModel& model, const Matrix& emit,
                                                 const Matrix* source);

// ---------------------------------------------------------------------------
// Classification.

struct ClassPrediction {
  int label = 0;
  Vector scores;
};

struct ClassTrainExample {
  const SparseFeatures* features = nullptr;
  int label = 0;
};

ClassPrediction classify_base(const ConsensusModel& model, const SparseFeatures& x);
ClassPrediction classify_with_source(const ConsensusModel& model, const SparseFeatures& x,
                                     std::size_t source);
ClassPrediction classify_with_consensus(const ConsensusModel& model, const SparseFeatures& x);

// Cross-entropy of label under classifier(h A_k); accumulates into shared
// parameters and A_k.
double accumulate_class_decoupling_gradient(ConsensusModel& model, const SparseFeatures& x,
                                            int label, std::size_t source, bool training,
                                            Rng* rng);
double class_decoupling_train_step(ConsensusModel& model,
                                   std::span<const ClassTrainExample> batch, std::size_t source,
                                   const OptimizerState& state, Rng& rng);

struct FrozenClassFeatures {
  Vector hidden;
};
FrozenClassFeatures frozen_class_features(const ConsensusModel& model, const SparseFeatures& x);
double accumulate_class_aggregation_gradient(ConsensusModel& model,
                                             const FrozenClassFeatures& features, int pseudo);
double class_aggregation_train_step(ConsensusModel& model, const FrozenClassFeatures& features,
                                    int pseudo, const OptimizerState& state);

// ---------------------------------------------------------------------------

// Name -> FNV checksum of every parameter tensor.
std::map<std::string, std::uint64_t> param_checksums(const ConsensusModel& model);

}  // namespace mstag

#endif  // MSTAG_CONSENSUS_HPP_

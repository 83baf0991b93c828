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

#ifndef MSTAG_TRAINER_HPP_
#define MSTAG_TRAINER_HPP_

#include <functional>
#include <optional>
#include <vector>

#include "mstag/consensus.hpp"
#include "mstag/numerics.hpp"

namespace mstag {

enum class Phase { kDecouple, kAggregate };

struct TrainConfig {
  Phase phase = Phase::kDecouple;
  int max_epochs = 50;
  int patience = 15;
  std::size_t batch_size = 1;
  OptimizerState optimizer;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> dev_score;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int selected_epoch = -1;  // epoch whose parameters the model holds afterwards
  std::optional<double> best_dev_score;
};

// Higher is better. An empty evaluator disables early stopping and keeps the
// parameters from the last epoch.
using DevEvaluator = std::function<double(const ConsensusModel&)>;
// Called after every epoch with the current (not yet restored) model.
using EpochCallback = std::function<void(const ConsensusModel&, const EpochRecord&)>;

struct SourcedExample {
  const EncodedSentence* sentence = nullptr;
  const TagSeq* tags = nullptr;
  std::size_t source = 0;
};

struct SourcedClassExample {
  const SparseFeatures* features = nullptr;
  int label = 0;
  std::size_t source = 0;
};

// Multi-source training of the shared model and the source matrices.
// Each epoch shuffles the examples, groups them into single-source batches
// and takes one SGD step per batch at lr_at_epoch(epoch). The best dev
// snapshot is restored at the end.
TrainHistory train_decoupling(ConsensusModel& model, const std::vector<SourcedExample>& examples,
                              const TrainConfig& config, Rng& rng,
                              const DevEvaluator& dev = {}, const EpochCallback& on_epoch = {});

TrainHistory train_class_decoupling(ConsensusModel& model,
                                    const std::vector<SourcedClassExample>& examples,
                                    const TrainConfig& config, Rng& rng,
                                    const DevEvaluator& dev = {},
                                    const EpochCallback& on_epoch = {});

// Attention-only training on pseudo labels over frozen features.
TrainHistory train_aggregation(ConsensusModel& model, const std::vector<FrozenFeatures>& features,
                               const std::vector<TagSeq>& pseudo, const TrainConfig& config,
                               Rng& rng, const DevEvaluator& dev = {},
                               const EpochCallback& on_epoch = {});

TrainHistory train_class_aggregation(ConsensusModel& model,
                                     const std::vector<FrozenClassFeatures>& features,
                                     const std::vector<int>& pseudo, const TrainConfig& config,
                                     Rng& rng, const DevEvaluator& dev = {},
                                     const EpochCallback& on_epoch = {});

// Parameter values only, for best-on-dev snapshots.
class ParamSnapshot {
 public:
  static ParamSnapshot take(const ConsensusModel& model);
  void restore(ConsensusModel& model) const;

 private:
  std::vector<Matrix> values_;
};

}  // namespace mstag

#endif  // MSTAG_TRAINER_HPP_

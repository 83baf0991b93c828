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

#include "mstag/trainer.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "mstag/errors.hpp"
#include "mstag/log.hpp"

namespace mstag {

void TrainConfig::validate() const {
  optimizer.validate();
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1 || patience > max_epochs) {
    throw ConfigError("patience must be in [1, max_epochs]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

ParamSnapshot ParamSnapshot::take(const ConsensusModel& model) {
  ParamSnapshot s;
  model.for_each_param([&](const Param& p) { s.values_.push_back(p.value); });
  return s;
}

void ParamSnapshot::restore(ConsensusModel& model) const {
  std::size_t i = 0;
  model.for_each_param([&](Param& p) {
    if (i >= values_.size() || !values_[i].same_shape(p.value)) {
      throw StructuralError("snapshot does not match model layout");
    }
    p.value = values_[i++];
  });
}

namespace {

// Shuffled single-source batches. With batch_size 1 this is simply a
// shuffled example order.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& source_of,
                                                   std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(source_of.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  if (batch_size == 1) {
    batches.reserve(order.size());
    for (std::size_t i : order) batches.push_back({i});
    return batches;
  }
  std::map<std::size_t, std::vector<std::size_t>> by_source;
  for (std::size_t i : order) by_source[source_of[i]].push_back(i);
  for (auto& [src, items] : by_source) {
    for (std::size_t pos = 0; pos < items.size(); pos += batch_size) {
      const std::size_t end = std::min(items.size(), pos + batch_size);
      batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(pos),
                           items.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  rng.shuffle(batches);
  return batches;
}

// Shared epoch loop: run_epoch(epoch, state) returns the summed loss.
TrainHistory run_epochs(ConsensusModel& model, const TrainConfig& config, const DevEvaluator& dev,
                        const EpochCallback& on_epoch,
                        const std::function<double(int, const OptimizerState&)>& run_epoch,
                        const char* label) {
  config.validate();
  TrainHistory history;
  std::optional<ParamSnapshot> best;
  int since_best = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    OptimizerState state = config.optimizer;
    state.epoch = epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = run_epoch(epoch, state);
    if (!std::isfinite(rec.loss)) {
      throw NumericError(std::string(label) + ": loss diverged at epoch " + std::to_string(epoch));
    }
    if (dev) rec.dev_score = dev(model);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(model, rec);
    if (log_level() >= LogLevel::kInfo) {
      std::ostringstream msg;
      msg << label << " epoch " << epoch << " loss " << rec.loss;
      if (rec.dev_score) msg << " dev " << *rec.dev_score;
      log_info(msg.str());
    }
    if (!dev) continue;
    if (!history.best_dev_score || *rec.dev_score > *history.best_dev_score) {
      history.best_dev_score = rec.dev_score;
      history.selected_epoch = epoch;
      best = ParamSnapshot::take(model);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (best) {
    best->restore(model);
  } else {
    history.selected_epoch = history.epochs.empty() ? -1 : history.epochs.back().epoch;
  }
  return history;
}

}  // namespace

TrainHistory train_decoupling(ConsensusModel& model, const std::vector<SourcedExample>& examples,
                              const TrainConfig& config, Rng& rng, const DevEvaluator& dev,
                              const EpochCallback& on_epoch) {
  if (examples.empty()) throw DataError("decoupling: no training examples");
  std::vector<std::size_t> source_of(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].source >= model.num_sources()) throw StructuralError("decoupling: unknown source");
    source_of[i] = examples[i].source;
  }
  std::vector<SequenceExample> batch;
  return run_epochs(
      model, config, dev, on_epoch,
      [&](int, const OptimizerState& state) {
        double loss = 0.0;
        for (const auto& ids : make_batches(source_of, config.batch_size, rng)) {
          batch.clear();
          for (std::size_t i : ids) batch.push_back({examples[i].sentence, examples[i].tags});
          loss += decoupling_train_step(model, batch, examples[ids.front()].source, state, rng);
        }
        return loss;
      },
      "decouple");
}

TrainHistory train_class_decoupling(ConsensusModel& model,
                                    const std::vector<SourcedClassExample>& examples,
                                    const TrainConfig& config, Rng& rng, const DevEvaluator& dev,
                                    const EpochCallback& on_epoch) {
  if (examples.empty()) throw DataError("decoupling: no training examples");
  std::vector<std::size_t> source_of(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) source_of[i] = examples[i].source;
  std::vector<ClassTrainExample> batch;
  return run_epochs(
      model, config, dev, on_epoch,
      [&](int, const OptimizerState& state) {
        double loss = 0.0;
        for (const auto& ids : make_batches(source_of, config.batch_size, rng)) {
          batch.clear();
          for (std::size_t i : ids) batch.push_back({examples[i].features, examples[i].label});
          loss += class_decoupling_train_step(model, batch, examples[ids.front()].source, state, rng);
        }
        return loss;
      },
      "decouple");
}

TrainHistory train_aggregation(ConsensusModel& model, const std::vector<FrozenFeatures>& features,
                               const std::vector<TagSeq>& pseudo, const TrainConfig& config,
                               Rng& rng, const DevEvaluator& dev, const EpochCallback& on_epoch) {
  if (features.size() != pseudo.size()) throw StructuralError("aggregation: size mismatch");
  if (features.empty()) throw DataError("aggregation: no pseudo-labeled sentences");
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return run_epochs(
      model, config, dev, on_epoch,
      [&](int, const OptimizerState& state) {
        rng.shuffle(order);
        double loss = 0.0;
        for (std::size_t i : order) loss += aggregation_train_step(model, features[i], pseudo[i], state);
        return loss;
      },
      "aggregate");
}

TrainHistory train_class_aggregation(ConsensusModel& model,
                                     const std::vector<FrozenClassFeatures>& features,
                                     const std::vector<int>& pseudo, const TrainConfig& config,
                                     Rng& rng, const DevEvaluator& dev,
                                     const EpochCallback& on_epoch) {
  if (features.size() != pseudo.size()) throw StructuralError("aggregation: size mismatch");
  if (features.empty()) throw DataError("aggregation: no pseudo-labeled examples");
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return run_epochs(
      model, config, dev, on_epoch,
      [&](int, const OptimizerState& state) {
        rng.shuffle(order);
        double loss = 0.0;
        for (std::size_t i : order) {
          loss += class_aggregation_train_step(model, features[i], pseudo[i], state);
        }
        return loss;
      },
      "aggregate");
}

}  // namespace mstag

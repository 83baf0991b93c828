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

#ifndef MSTAG_EXPERIMENT_HPP_
#define MSTAG_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mstag/aggregation.hpp"
#include "mstag/checkpoint.hpp"
#include "mstag/report.hpp"
#include "mstag/synthetic.hpp"
#include "mstag/trainer.hpp"

namespace mstag {

enum class ExperimentMode { kCrowd, kCrossDomain, kClassification };

std::string experiment_mode_name(ExperimentMode m);
ExperimentMode parse_experiment_mode(std::string_view name);

// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "MSTAG_OUTPUT_ROOT";

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::kCrowd;
  std::string manifest;
  std::string name = "experiment";
  std::string output_dir;  // empty: $MSTAG_OUTPUT_ROOT/<name>, else runs/<name>
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  ModelConfig model;
  OptimizerState optimizer;
  std::size_t batch_size = 1;
  int max_epochs = 50;
  int patience = 15;
  int aggregate_max_epochs = 50;
  int aggregate_patience = 15;

  Strategy strategy = Strategy::kAwv;
  std::vector<Strategy> baselines = {Strategy::kConcat, Strategy::kMvt, Strategy::kMvs};

  // Crowd mode: replace the manifest's sources by simulated annotators
  // trained on folds of the gold training set.
  bool simulate = false;
  std::size_t folds = 10;
  std::size_t num_select = 5;
  int annotator_max_epochs = 50;
  int annotator_patience = 15;

  bool dedup = true;
  int threads = 0;  // 0 keeps the OpenMP default
  std::vector<std::string> formats = {"json", "csv", "conll"};

  void validate() const;
  std::filesystem::path resolved_output_dir() const;
  TrainConfig decouple_config() const;
  TrainConfig aggregate_config() const;
  TrainConfig annotator_config() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j,
                                             const ExperimentConfig& base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Every top-level key of to_json(ExperimentConfig).
std::vector<std::string> experiment_config_keys();
// `value` is read as a JSON literal when it parses, as a comma list for list
// fields, and as a plain string otherwise. Unknown keys are config errors.
void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value);

// Sequence-labeling data for crowd and cross-domain modes.
struct SequenceTask {
  TagDict dict;
  // Crowd: sentences with per-annotator labels. Cross-domain: every source
  // domain's sentences, each annotated by its own domain.
  MultiSourceDataset train;
  // Sentences that receive pseudo labels. Crowd: same as train.
  // Cross-domain: the unlabeled target training split.
  std::optional<MultiSourceDataset> target;
  TaggedCorpus gold_train;  // annotator simulation input (crowd + simulate)
  TaggedCorpus dev;
  TaggedCorpus test;
  std::vector<TaggedCorpus> source_dev;  // cross-domain, per source

  const MultiSourceDataset& pseudo_set() const { return target ? *target : train; }
};

struct ClassTask {
  TagDict labels;
  int dimension = 5000;
  std::vector<SourceInfo> sources;
  std::vector<ClassificationData> source_train;
  std::vector<ClassificationData> source_dev;
  ClassificationData target_train;  // labels ignored
  ClassificationData dev;           // may be empty
  ClassificationData test;
};

SequenceTask load_sequence_task(const ExperimentConfig& config);
ClassTask load_class_task(const ExperimentConfig& config);

// Vocabulary over the labeled training sentences (and gold train when
// simulating).
Vocabularies task_vocabulary(const SequenceTask& task);

// Trains one base tagger per selected fold of `gold` and lets each label the
// whole set. Fold models train concurrently, one per worker.
MultiSourceDataset simulate_annotators(const TaggedCorpus& gold, const TagDict& dict,
                                       const TaggedCorpus& dev, std::size_t z,
                                       std::size_t num_select, const ExperimentConfig& config,
                                       Rng& rng);

// Single-source base tagger (no source matrices) trained on `examples`.
ConsensusModel train_base_tagger(const Vocabularies& vocab, const TagDict& dict,
                                 const std::vector<EncodedSentence>& sentences,
                                 const std::vector<TagSeq>& tags, const TaggedCorpus& dev,
                                 const ExperimentConfig& config, const TrainConfig& train,
                                 Rng& rng, TrainHistory* history = nullptr);

// Phase outputs for the sequence pipeline, exposed for the CLI stages.
struct DecoupleResult {
  TrainHistory history;
};
DecoupleResult run_decoupling(ConsensusModel& model, const SequenceTask& task,
                              const ExperimentConfig& config, Rng& rng);

struct AggregateResult {
  PseudoLabelSet pseudo;
  TrainHistory history;
  bool skipped = false;  // base-model-only runs have nothing to aggregate
};
AggregateResult run_aggregation(ConsensusModel& model, const SequenceTask& task,
                                const ExperimentConfig& config, Rng& rng);

// Source weights for AWV: OMV agreement in crowd mode, per-domain dev F1 in
// cross-domain mode.
SourceWeights awv_weights(const ConsensusModel& model, const SequenceTask& task,
                          const ExperimentConfig& config);

// Stage entry points shared by the full pipeline and the CLI. All RNG
// streams derive from `seed`, so running the stages one by one reproduces
// the model a full run builds. `details` receives training histories.
// Simulates annotators first when the config asks for it and `task` has no
// sources yet.
ConsensusModel decouple_sequence(const ExperimentConfig& config, SequenceTask& task,
                                 std::uint64_t seed, Json& details);
AggregateResult aggregate_sequence(ConsensusModel& model, const ExperimentConfig& config,
                                   const SequenceTask& task, std::uint64_t seed, Json& details);
// pseudo_labels.conll plus the JSON sidecar (strategy, weights, provenance).
void write_pseudo_labels(const AggregateResult& a, const SequenceTask& task,
                         const std::filesystem::path& dir);

struct ClassAggregateResult {
  std::vector<int> pseudo;
  SourceWeights weights;
  TrainHistory history;
  bool skipped = false;
};
ConsensusModel decouple_classifier(const ExperimentConfig& config, const ClassTask& task,
                                   std::uint64_t seed, Json& details);
ClassAggregateResult aggregate_classifier(ConsensusModel& model, const ExperimentConfig& config,
                                          const ClassTask& task, std::uint64_t seed,
                                          Json& details);
void write_class_pseudo_labels(const ClassAggregateResult& a, const ExperimentConfig& config,
                               const ClassTask& task, const std::filesystem::path& dir);

SeedReport run_sequence_seed(const ExperimentConfig& config, const SequenceTask& task,
                             std::uint64_t seed, const std::filesystem::path& seed_dir);
SeedReport run_class_seed(const ExperimentConfig& config, const ClassTask& task,
                          std::uint64_t seed, const std::filesystem::path& seed_dir);

// Full pipeline over every seed. Stage failures surface as StageError;
// per-seed artifacts already written stay on disk.
RunReport run_experiment(const ExperimentConfig& config);

}  // namespace mstag

#endif  // MSTAG_EXPERIMENT_HPP_

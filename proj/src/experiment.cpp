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

#include "mstag/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>

#include "mstag/errors.hpp"
#include "mstag/eval.hpp"
#include "mstag/log.hpp"
#include "mstag/parallel.hpp"

namespace mstag {

namespace fs = std::filesystem;

namespace {

// Viterbi output can break BIO constraints; chunk scoring needs valid spans.
std::vector<TagSeq> decode_tags(const ConsensusModel& model, const std::vector<EncodedSentence>& s,
                                Decoder d, Exec exec = Exec::kParallel) {
  auto out = decode_corpus(model, s, d, exec);
  if (model.labels().is_bio()) {
    for (auto& t : out) t = repair_bio(t, model.labels());
  }
  return out;
}

}  // namespace

std::string experiment_mode_name(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::kCrowd: return "crowd";
    case ExperimentMode::kCrossDomain: return "cross-domain";
    case ExperimentMode::kClassification: return "classification";
  }
  return "crowd";
}

ExperimentMode parse_experiment_mode(std::string_view name) {
  if (name == "crowd") return ExperimentMode::kCrowd;
  if (name == "cross-domain") return ExperimentMode::kCrossDomain;
  if (name == "classification") return ExperimentMode::kClassification;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  optimizer.validate();
  decouple_config().validate();
  aggregate_config().validate();
  if (simulate) annotator_config().validate();
  if (model.blstm.dropout < 0.0 || model.blstm.dropout >= 1.0 || model.mlp.dropout < 0.0 ||
      model.mlp.dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  if (model.blstm.word_dim == 0 || model.blstm.hidden == 0 || model.mlp.hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (model.blstm.use_chars && (model.blstm.char_dim == 0 || model.blstm.char_hidden == 0)) {
    throw ConfigError("character dimensions must be positive when use_chars is on");
  }
  if (strategy == Strategy::kConcat) throw ConfigError("CONCAT is a baseline, not a pseudo-label strategy");
  if (mode != ExperimentMode::kCrowd && strategy != Strategy::kAmv && strategy != Strategy::kAwv) {
    throw ConfigError(experiment_mode_name(mode) + " mode supports AMV and AWV only");
  }
  if (simulate) {
    if (mode != ExperimentMode::kCrowd) throw ConfigError("simulate applies to crowd mode only");
    if (num_select < 1 || folds < num_select) throw ConfigError("need folds >= num_select >= 1");
  }
  for (const auto& f : formats) {
    if (f != "json" && f != "csv" && f != "conll") throw ConfigError("unknown format '" + f + "'");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

fs::path ExperimentConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / name;
  }
  return fs::path("runs") / name;
}

TrainConfig ExperimentConfig::decouple_config() const {
  TrainConfig t;
  t.phase = Phase::kDecouple;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.batch_size = batch_size;
  t.optimizer = optimizer;
  return t;
}

TrainConfig ExperimentConfig::aggregate_config() const {
  TrainConfig t = decouple_config();
  t.phase = Phase::kAggregate;
  t.max_epochs = aggregate_max_epochs;
  t.patience = aggregate_patience;
  return t;
}

TrainConfig ExperimentConfig::annotator_config() const {
  TrainConfig t = decouple_config();
  t.max_epochs = annotator_max_epochs;
  t.patience = annotator_patience;
  return t;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["mode"] = experiment_mode_name(c.mode);
  j["manifest"] = c.manifest;
  j["name"] = c.name;
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["word_dim"] = c.model.blstm.word_dim;
  j["char_dim"] = c.model.blstm.char_dim;
  j["char_hidden"] = c.model.blstm.char_hidden;
  j["hidden"] = c.model.blstm.hidden;
  j["use_chars"] = c.model.blstm.use_chars;
  j["dropout"] = c.model.blstm.dropout;
  j["mlp_hidden"] = c.model.mlp.hidden;
  j["mlp_dropout"] = c.model.mlp.dropout;
  j["feature_dim"] = c.model.mlp.input_dim;
  j["variant"] = variant_name(c.model.variant);
  j["no_source_matrices"] = c.model.no_source_matrices;
  j["source_init_std"] = c.model.source_init_std;
  j["lr"] = c.optimizer.base_lr;
  j["decay"] = c.optimizer.decay_per_epoch;
  j["clip_norm"] = c.optimizer.clip_norm;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["aggregate_max_epochs"] = c.aggregate_max_epochs;
  j["aggregate_patience"] = c.aggregate_patience;
  j["strategy"] = strategy_name(c.strategy);
  std::vector<std::string> baselines;
  for (Strategy s : c.baselines) baselines.push_back(strategy_name(s));
  j["baselines"] = baselines;
  j["simulate"] = c.simulate;
  j["folds"] = c.folds;
  j["num_select"] = c.num_select;
  j["annotator_max_epochs"] = c.annotator_max_epochs;
  j["annotator_patience"] = c.annotator_patience;
  j["dedup"] = c.dedup;
  j["threads"] = c.threads;
  j["formats"] = c.formats;
  return j;
}

std::vector<std::string> experiment_config_keys() {
  const Json j = to_json(ExperimentConfig{});
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  return keys;
}

ExperimentConfig experiment_config_from_json(const Json& j, const ExperimentConfig& base) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  const auto known = experiment_config_keys();
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  ExperimentConfig c = base;
  try {
    if (j.contains("mode")) c.mode = parse_experiment_mode(j.at("mode").get<std::string>());
    c.manifest = j.value("manifest", c.manifest);
    c.name = j.value("name", c.name);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.model.blstm.word_dim = j.value("word_dim", c.model.blstm.word_dim);
    c.model.blstm.char_dim = j.value("char_dim", c.model.blstm.char_dim);
    c.model.blstm.char_hidden = j.value("char_hidden", c.model.blstm.char_hidden);
    c.model.blstm.hidden = j.value("hidden", c.model.blstm.hidden);
    c.model.blstm.use_chars = j.value("use_chars", c.model.blstm.use_chars);
    c.model.blstm.dropout = j.value("dropout", c.model.blstm.dropout);
    c.model.mlp.hidden = j.value("mlp_hidden", c.model.mlp.hidden);
    c.model.mlp.dropout = j.value("mlp_dropout", c.model.mlp.dropout);
    c.model.mlp.input_dim = j.value("feature_dim", c.model.mlp.input_dim);
    if (j.contains("variant")) c.model.variant = parse_variant(j.at("variant").get<std::string>());
    c.model.no_source_matrices = j.value("no_source_matrices", c.model.no_source_matrices);
    c.model.source_init_std = j.value("source_init_std", c.model.source_init_std);
    c.optimizer.base_lr = j.value("lr", c.optimizer.base_lr);
    c.optimizer.decay_per_epoch = j.value("decay", c.optimizer.decay_per_epoch);
    c.optimizer.clip_norm = j.value("clip_norm", c.optimizer.clip_norm);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.aggregate_max_epochs = j.value("aggregate_max_epochs", c.aggregate_max_epochs);
    c.aggregate_patience = j.value("aggregate_patience", c.aggregate_patience);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("baselines")) {
      c.baselines.clear();
      for (const auto& s : j.at("baselines")) c.baselines.push_back(parse_strategy(s.get<std::string>()));
    }
    c.simulate = j.value("simulate", c.simulate);
    c.folds = j.value("folds", c.folds);
    c.num_select = j.value("num_select", c.num_select);
    c.annotator_max_epochs = j.value("annotator_max_epochs", c.annotator_max_epochs);
    c.annotator_patience = j.value("annotator_patience", c.annotator_patience);
    c.dedup = j.value("dedup", c.dedup);
    c.threads = j.value("threads", c.threads);
    if (j.contains("formats")) c.formats = j.at("formats").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.model.mode = c.mode == ExperimentMode::kClassification ? TaskMode::kClassification
                                                           : TaskMode::kSequence;
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_config_from_json(j);
  // Relative manifest paths are taken relative to the config file.
  if (!c.manifest.empty() && fs::path(c.manifest).is_relative()) {
    c.manifest = (path.parent_path() / c.manifest).lexically_normal().string();
  }
  return c;
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
  Json j = to_json(c);
  if (!j.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  const Json& current = j.at(key);
  auto literal = [](const std::string& text) {
    Json v = Json::parse(text, nullptr, false);
    return v.is_discarded() ? Json(text) : v;
  };
  Json parsed = literal(value);
  if (current.is_string() && !parsed.is_string()) parsed = value;
  if (current.is_array() && !parsed.is_array()) {
    parsed = Json::array();
    std::size_t pos = 0;
    while (pos <= value.size()) {
      const std::size_t comma = value.find(',', pos);
      const std::string item = value.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!item.empty()) parsed.push_back(literal(item));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  j[key] = parsed;
  c = experiment_config_from_json(j);
}

// ---------------------------------------------------------------- data

namespace {

RawConll read_raw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_conll_raw(in, {}, path.filename().string());
}

void collect_tags(const RawConll& raw, std::set<std::string>& out) {
  for (const auto& seq : raw.tags) out.insert(seq.begin(), seq.end());
}

TaggedCorpus to_corpus(const RawConll& raw, const TagDict& dict, const std::string& what) {
  if (!raw.has_tags) throw DataError(what + " has no tag column");
  auto tags = map_tags(raw, dict);
  if (dict.is_bio()) {
    for (auto& t : tags) t = repair_bio(t, dict);
  }
  return {raw.sentences, std::move(tags)};
}

TagDict make_dict(const Manifest& m, const std::set<std::string>& observed) {
  if (m.tag_set) {
    TagDict d = TagDict::infer(*m.tag_set);
    for (const auto& t : observed) {
      if (!d.find(t)) throw DataError("tag '" + t + "' is not in the declared tag_set");
    }
    return d;
  }
  if (observed.empty()) throw DataError("no tags found in the dataset");
  return TagDict::infer(std::vector<std::string>(observed.begin(), observed.end()));
}

std::vector<EncodedSentence> encode_all(const Vocabularies& v, const std::vector<Sentence>& s) {
  std::vector<EncodedSentence> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(v.encode(x));
  return out;
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e, exit_code_for(e));
  } catch (const std::exception& e) {
    throw StageError(name, Error(e.what()), 1);
  }
}

Json history_json(const TrainHistory& h) {
  Json j;
  Json epochs = Json::array();
  for (const auto& e : h.epochs) {
    Json r;
    r["epoch"] = e.epoch;
    r["loss"] = e.loss;
    if (e.dev_score) r["dev"] = *e.dev_score;
    epochs.push_back(r);
  }
  j["epochs"] = epochs;
  j["selected_epoch"] = h.selected_epoch;
  if (h.best_dev_score) j["best_dev"] = *h.best_dev_score;
  return j;
}

}  // namespace

SequenceTask load_sequence_task(const ExperimentConfig& config) {
  if (config.mode == ExperimentMode::kClassification) {
    throw ConfigError("classification mode has no sequence task");
  }
  if (config.manifest.empty()) throw ConfigError("manifest path is required");
  const Manifest m = load_manifest(config.manifest);
  const bool cross = config.mode == ExperimentMode::kCrossDomain;

  std::vector<RawConll> sources;
  std::vector<std::optional<RawConll>> source_dev;
  std::optional<RawConll> gold, dev, test, target;
  std::set<std::string> observed;
  if (!config.simulate) {
    if (m.sources.empty()) throw ConfigError("manifest lists no sources");
    for (const auto& s : m.sources) {
      sources.push_back(read_raw(m.resolve(s.path)));
      if (!sources.back().has_tags) throw DataError("source " + s.id + " has no tag column");
      collect_tags(sources.back(), observed);
      if (s.dev_path) {
        source_dev.push_back(read_raw(m.resolve(*s.dev_path)));
        collect_tags(*source_dev.back(), observed);
      } else {
        source_dev.emplace_back();
      }
    }
  }
  if (m.gold_path) {
    gold = read_raw(m.resolve(*m.gold_path));
    collect_tags(*gold, observed);
  }
  if (m.dev_path) {
    dev = read_raw(m.resolve(*m.dev_path));
    collect_tags(*dev, observed);
  }
  if (m.test_path) {
    test = read_raw(m.resolve(*m.test_path));
    collect_tags(*test, observed);
  }
  if (m.target_path) target = read_raw(m.resolve(*m.target_path));

  SequenceTask task;
  task.dict = make_dict(m, observed);
  if (dev) task.dev = to_corpus(*dev, task.dict, "dev set");
  if (test) task.test = to_corpus(*test, task.dict, "test set");

  if (config.simulate) {
    if (!gold) throw ConfigError("simulate needs gold_path in the manifest");
    task.gold_train = to_corpus(*gold, task.dict, "gold set");
    task.train = MultiSourceDataset(task.dict, {});
    return task;
  }

  std::vector<SourceInfo> infos;
  for (const auto& s : m.sources) infos.push_back({s.id, s.name});
  task.train = MultiSourceDataset(task.dict, infos);
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto tags = map_tags(sources[k], task.dict);
    for (std::size_t i = 0; i < sources[k].sentences.size(); ++i) {
      // Domains never share sentences, so dedup only applies to crowds.
      const std::size_t idx = task.train.add_sentence(sources[k].sentences[i], config.dedup && !cross);
      if (task.train.annotation(k, idx) == nullptr) task.train.annotate(k, idx, tags[i]);
    }
  }
  if (gold && !cross) {
    const auto tags = map_tags(*gold, task.dict);
    for (std::size_t i = 0; i < gold->sentences.size(); ++i) {
      if (auto idx = task.train.find(gold->sentences[i].tokens)) task.train.set_gold(*idx, tags[i]);
    }
  }
  task.train.validate();

  if (cross) {
    if (!target) throw ConfigError("cross-domain mode needs target_path in the manifest");
    MultiSourceDataset t(task.dict, infos);
    for (const auto& s : target->sentences) t.add_sentence(s, false);
    task.target = std::move(t);
    for (const auto& d : source_dev) {
      task.source_dev.push_back(d ? to_corpus(*d, task.dict, "source dev set") : TaggedCorpus{});
    }
  }
  return task;
}

ClassTask load_class_task(const ExperimentConfig& config) {
  if (config.mode != ExperimentMode::kClassification) throw ConfigError("not a classification config");
  if (config.manifest.empty()) throw ConfigError("manifest path is required");
  const Manifest m = load_manifest(config.manifest);
  if (m.sources.empty()) throw ConfigError("manifest lists no sources");
  const int dim = static_cast<int>(config.model.mlp.input_dim);

  std::vector<RawSparse> train, dev;
  std::vector<bool> has_dev;
  std::optional<RawSparse> target, tdev, test;
  std::set<std::string> observed;
  auto collect = [&](const RawSparse& r) {
    for (const auto& l : r.labels) {
      if (l != "?") observed.insert(l);
    }
  };
  for (const auto& s : m.sources) {
    train.push_back(read_sparse_file(m.resolve(s.path), dim));
    collect(train.back());
    if (s.dev_path) {
      dev.push_back(read_sparse_file(m.resolve(*s.dev_path), dim));
      collect(dev.back());
    } else {
      dev.emplace_back();
    }
  }
  if (!m.target_path) throw ConfigError("classification mode needs target_path in the manifest");
  target = read_sparse_file(m.resolve(*m.target_path), dim);
  if (m.dev_path) {
    tdev = read_sparse_file(m.resolve(*m.dev_path), dim);
    collect(*tdev);
  }
  if (m.test_path) {
    test = read_sparse_file(m.resolve(*m.test_path), dim);
    collect(*test);
  }
  ClassTask task;
  task.dimension = dim;
  task.labels = m.tag_set ? TagDict::plain(*m.tag_set)
                          : TagDict::plain(std::vector<std::string>(observed.begin(), observed.end()));
  if (task.labels.size() < 2) throw DataError("classification needs at least two labels");
  for (std::size_t k = 0; k < m.sources.size(); ++k) {
    task.sources.push_back({m.sources[k].id, m.sources[k].name});
    task.source_train.push_back(to_classification(train[k], task.labels, dim));
    for (const auto& ex : task.source_train.back().examples) {
      if (ex.label < 0) throw DataError("source " + m.sources[k].id + " has unlabeled examples");
    }
    task.source_dev.push_back(to_classification(dev[k], task.labels, dim));
  }
  task.target_train = to_classification(*target, task.labels, dim);
  if (tdev) task.dev = to_classification(*tdev, task.labels, dim);
  if (test) task.test = to_classification(*test, task.labels, dim);
  return task;
}

Vocabularies task_vocabulary(const SequenceTask& task) {
  std::vector<const Sentence*> ptrs;
  for (const auto& s : task.train.sentences()) ptrs.push_back(&s);
  for (const auto& s : task.gold_train.sentences) ptrs.push_back(&s);
  return Vocabularies::build(ptrs);
}

// ---------------------------------------------------------------- training

namespace {

ModelConfig base_model_config(const ExperimentConfig& config) {
  ModelConfig mc = config.model;
  mc.variant = TransformTarget::kNone;
  mc.no_source_matrices = false;
  return mc;
}

DevEvaluator tag_dev_evaluator(const std::vector<EncodedSentence>& dev,
                               const std::vector<TagSeq>& gold, const TagDict& dict, Decoder d) {
  if (dev.empty()) return {};
  return [&dev, &gold, &dict, d](const ConsensusModel& m) {
    return label_score(decode_tags(m, dev, d, Exec::kSerial), gold, dict);
  };
}

}  // namespace

ConsensusModel train_base_tagger(const Vocabularies& vocab, const TagDict& dict,
                                 const std::vector<EncodedSentence>& sentences,
                                 const std::vector<TagSeq>& tags, const TaggedCorpus& dev,
                                 const ExperimentConfig& config, const TrainConfig& train,
                                 Rng& rng, TrainHistory* history) {
  ConsensusModel model(base_model_config(config), vocab, dict, {{"base", "base"}});
  Rng init = rng.fork(1);
  model.init(init);
  std::vector<SourcedExample> examples;
  for (std::size_t i = 0; i < sentences.size(); ++i) examples.push_back({&sentences[i], &tags[i], 0});
  const auto dev_enc = encode_all(vocab, dev.sentences);
  Rng order = rng.fork(2);
  auto h = train_decoupling(model, examples, train, order,
                            tag_dev_evaluator(dev_enc, dev.tags, dict, Decoder::base()));
  if (history) *history = std::move(h);
  return model;
}

MultiSourceDataset simulate_annotators(const TaggedCorpus& gold, const TagDict& dict,
                                       const TaggedCorpus& dev, std::size_t z,
                                       std::size_t num_select, const ExperimentConfig& config,
                                       Rng& rng) {
  if (num_select < 1 || z < num_select) throw ConfigError("simulate: need z >= num_select >= 1");
  const auto folds = split_folds(gold.sentences.size(), z, rng);
  std::vector<std::size_t> order(folds.size());
  for (std::size_t f = 0; f < order.size(); ++f) order[f] = f;
  rng.shuffle(order);
  order.resize(num_select);
  for (std::size_t f : order) {
    if (folds[f].size() < 2) {
      throw ConfigError("simulate: fold " + std::to_string(f) + " has " +
                        std::to_string(folds[f].size()) + " sentence(s), too small to train");
    }
  }
  std::vector<const Sentence*> ptrs;
  for (const auto& s : gold.sentences) ptrs.push_back(&s);
  const Vocabularies vocab = Vocabularies::build(ptrs);
  const auto encoded = encode_all(vocab, gold.sentences);
  std::vector<Rng> streams;
  for (std::size_t j = 0; j < num_select; ++j) streams.push_back(rng.fork(100 + order[j]));

  std::vector<std::vector<TagSeq>> labels(num_select);
  const TrainConfig train = config.annotator_config();
  for_each_index(num_select, Exec::kParallel, [&](std::size_t j) {
    std::vector<EncodedSentence> sents;
    std::vector<TagSeq> tags;
    for (std::size_t i : folds[order[j]]) {
      sents.push_back(encoded[i]);
      tags.push_back(gold.tags[i]);
    }
    ConsensusModel m = train_base_tagger(vocab, dict, sents, tags, dev, config, train, streams[j]);
    auto pred = decode_tags(m, encoded, Decoder::base(), Exec::kSerial);
    labels[j] = std::move(pred);
  });

  std::vector<SourceInfo> infos;
  for (std::size_t j = 0; j < num_select; ++j) {
    infos.push_back({"annotator" + std::to_string(j + 1), "fold-" + std::to_string(order[j])});
  }
  MultiSourceDataset out(dict, infos);
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const std::size_t idx = out.add_sentence(gold.sentences[i], config.dedup);
    if (out.gold(idx) == nullptr) out.set_gold(idx, gold.tags[i]);
    for (std::size_t j = 0; j < num_select; ++j) {
      if (out.annotation(j, idx) == nullptr) out.annotate(j, idx, labels[j][i]);
    }
  }
  out.validate();
  return out;
}

DecoupleResult run_decoupling(ConsensusModel& model, const SequenceTask& task,
                              const ExperimentConfig& config, Rng& rng) {
  const auto encoded = encode_all(model.vocab(), task.train.sentences());
  std::vector<SourcedExample> examples;
  for (const auto& p : concat_labels(task.train)) {
    examples.push_back({&encoded[p.sentence], task.train.annotation(p.source, p.sentence), p.source});
  }
  const auto dev = encode_all(model.vocab(), task.dev.sentences);
  std::vector<std::vector<EncodedSentence>> source_dev;
  for (const auto& d : task.source_dev) source_dev.push_back(encode_all(model.vocab(), d.sentences));

  DevEvaluator eval = tag_dev_evaluator(dev, task.dev.tags, task.dict, Decoder::base());
  if (!eval && !source_dev.empty()) {
    // Cross-domain without a target dev split: mean in-domain score.
    eval = [&](const ConsensusModel& m) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t k = 0; k < source_dev.size(); ++k) {
        if (source_dev[k].empty()) continue;
        sum += label_score(decode_tags(m, source_dev[k], Decoder::with_source(k), Exec::kSerial),
                           task.source_dev[k].tags, task.dict);
        ++n;
      }
      return n == 0 ? 0.0 : sum / static_cast<double>(n);
    };
  }
  DecoupleResult r;
  r.history = train_decoupling(model, examples, config.decouple_config(), rng, eval);
  return r;
}

SourceWeights awv_weights(const ConsensusModel& model, const SequenceTask& task,
                          const ExperimentConfig& config) {
  if (config.mode == ExperimentMode::kCrowd) return crowd_source_weights(task.train);
  Vector f1(model.num_sources(), 0.0);
  for (std::size_t k = 0; k < model.num_sources(); ++k) {
    std::vector<EncodedSentence> enc;
    std::vector<TagSeq> gold;
    if (k < task.source_dev.size() && !task.source_dev[k].sentences.empty()) {
      enc = encode_all(model.vocab(), task.source_dev[k].sentences);
      gold = task.source_dev[k].tags;
    } else {
      log_warning("source " + model.sources()[k].id + " has no dev split; weighting by training fit");
      for (std::size_t i : task.train.annotated_by(k)) {
        enc.push_back(model.vocab().encode(task.train.sentences()[i]));
        gold.push_back(*task.train.annotation(k, i));
      }
    }
    f1[k] = label_score(decode_tags(model, enc, Decoder::with_source(k)), gold, task.dict);
  }
  return source_weights_from_f1(f1);
}

AggregateResult run_aggregation(ConsensusModel& model, const SequenceTask& task,
                                const ExperimentConfig& config, Rng& rng) {
  AggregateResult r;
  if (!model.uses_sources()) {
    r.skipped = true;
    return r;
  }
  const MultiSourceDataset& set = task.pseudo_set();
  const auto encoded = encode_all(model.vocab(), set.sentences());
  std::optional<SourceWeights> weights;
  if (config.strategy == Strategy::kAwv) weights = awv_weights(model, task, config);
  r.pseudo = generate_pseudo_labels(&model, set, encoded, config.strategy, weights);

  std::vector<FrozenFeatures> features(encoded.size());
  for_each_index(encoded.size(), Exec::kParallel,
                 [&](std::size_t i) { features[i] = frozen_features(model, encoded[i]); });
  std::vector<FrozenFeatures> dev(task.dev.sentences.size());
  for_each_index(dev.size(), Exec::kParallel, [&](std::size_t i) {
    dev[i] = frozen_features(model, model.vocab().encode(task.dev.sentences[i]));
  });
  DevEvaluator eval;
  if (!dev.empty()) {
    eval = [&](const ConsensusModel& m) {
      std::vector<TagSeq> pred(dev.size());
      for (std::size_t i = 0; i < dev.size(); ++i) pred[i] = decode_with_consensus(m, dev[i]);
      return label_score(pred, task.dev.tags, task.dict);
    };
  }
  r.history = train_aggregation(model, features, r.pseudo.labels, config.aggregate_config(), rng, eval);
  return r;
}

// ---------------------------------------------------------------- seeds

namespace {

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json pseudo_sidecar(const PseudoLabelSet& p, const std::vector<SourceInfo>& sources) {
  Json j;
  j["strategy"] = strategy_name(p.strategy);
  j["provenance"] = p.provenance;
  std::vector<std::string> ids;
  for (const auto& s : sources) ids.push_back(s.id);
  j["sources"] = ids;
  j["weights"] = p.weights;
  j["sentences"] = p.labels.size();
  return j;
}

// Annotation files are not guaranteed BIO-valid, so scoring uses repaired copies held in store.
std::vector<std::vector<const TagSeq*>> annotations_vs_gold(const MultiSourceDataset& d,
                                                            const TagDict& dict,
                                                            std::vector<TagSeq>& gold_out,
                                                            std::vector<std::vector<TagSeq>>& store) {
  std::vector<std::size_t> with_gold;
  for (std::size_t i = 0; i < d.num_sentences(); ++i) {
    if (d.gold(i)) with_gold.push_back(i);
  }
  store.assign(d.num_sources(), {});
  for (auto& s : store) s.reserve(with_gold.size());
  std::vector<std::vector<const TagSeq*>> per(d.num_sources());
  for (std::size_t i : with_gold) {
    gold_out.push_back(repair_bio(*d.gold(i), dict));
    for (std::size_t k = 0; k < d.num_sources(); ++k) {
      const TagSeq* a = d.annotation(k, i);
      if (!a) {
        per[k].push_back(nullptr);
        continue;
      }
      store[k].push_back(repair_bio(*a, dict));
      per[k].push_back(&store[k].back());
    }
  }
  return per;
}

bool baseline_applies(Strategy s, ExperimentMode mode) {
  if (s == Strategy::kConcat) return true;
  return mode == ExperimentMode::kCrowd &&
         (s == Strategy::kMvt || s == Strategy::kOmv || s == Strategy::kMvs);
}

}  // namespace

ConsensusModel decouple_sequence(const ExperimentConfig& config, SequenceTask& task,
                                 std::uint64_t seed, Json& details) {
  const Rng root(seed);
  if (config.simulate && task.train.num_sources() == 0) {
    stage("simulate", [&] {
      Rng r = root.fork(1);
      task.train = simulate_annotators(task.gold_train, task.dict, task.dev, config.folds,
                                       config.num_select, config, r);
      std::vector<std::string> names;
      for (const auto& s : task.train.sources()) names.push_back(s.name);
      details["simulated_annotators"] = names;
    });
  }
  return stage("decouple", [&] {
    ConsensusModel m(config.model, task_vocabulary(task), task.dict, task.train.sources());
    Rng init = root.fork(2);
    m.init(init);
    Rng r = root.fork(3);
    details["decouple"] = history_json(run_decoupling(m, task, config, r).history);
    return m;
  });
}

AggregateResult aggregate_sequence(ConsensusModel& model, const ExperimentConfig& config,
                                   const SequenceTask& task, std::uint64_t seed, Json& details) {
  return stage("aggregate", [&] {
    Rng r = Rng(seed).fork(4);
    AggregateResult a = run_aggregation(model, task, config, r);
    if (a.skipped) {
      details["aggregate"] = "skipped: base model only";
    } else {
      details["aggregate"] = history_json(a.history);
      details["pseudo_labels"] = pseudo_sidecar(a.pseudo, task.train.sources());
    }
    return a;
  });
}

void write_pseudo_labels(const AggregateResult& a, const SequenceTask& task, const fs::path& dir) {
  if (a.skipped) return;
  write_conll_file(dir / "pseudo_labels.conll", task.pseudo_set().sentences(), a.pseudo.labels, task.dict);
  write_json(dir / "pseudo_labels.json", pseudo_sidecar(a.pseudo, task.train.sources()));
}

SeedReport run_sequence_seed(const ExperimentConfig& config, const SequenceTask& input,
                             std::uint64_t seed, const fs::path& seed_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SeedReport rep;
  rep.seed = seed;
  rep.artifact_dir = seed_dir.string();
  fs::create_directories(seed_dir);
  if (input.test.sentences.empty()) throw StageError("load", ConfigError("a test set is required"), 1);
  const Rng root(seed);

  SequenceTask task = input;
  ConsensusModel model = decouple_sequence(config, task, seed, rep.details);
  stage("decouple", [&] { save_checkpoint(model, seed_dir / "checkpoint_decouple.json", to_json(config)); });
  const AggregateResult agg = aggregate_sequence(model, config, task, seed, rep.details);
  stage("aggregate", [&] {
    write_pseudo_labels(agg, task, seed_dir);
    save_checkpoint(model, seed_dir / "checkpoint.json", to_json(config));
  });
  const Vocabularies& vocab = model.vocab();
  const auto test = encode_all(vocab, task.test.sentences);

  stage("evaluate", [&] {
    const Decoder d = model.uses_sources() ? Decoder::consensus() : Decoder::base();
    const auto pred = decode_tags(model, test, d);
    rep.methods["ConNet"] = evaluate_tags(pred, task.test.tags, task.dict);
    rep.methods["ConNet-base"] =
        evaluate_tags(decode_tags(model, test, Decoder::base()), task.test.tags, task.dict);
    write_conll_file(seed_dir / "predictions.conll", task.test.sentences, pred, task.dict);

    std::vector<std::string> names;
    for (const auto& s : task.train.sources()) names.push_back(s.id);
    if (task.dict.is_bio()) {
      std::vector<TagSeq> gold;
      std::vector<std::vector<TagSeq>> store;
      auto per = annotations_vs_gold(task.train, task.dict, gold, store);
      if (!gold.empty() && config.mode == ExperimentMode::kCrowd) {
        rep.expertise = expertise_matrix(per, gold, task.dict, names);
      } else {
        std::vector<std::vector<TagSeq>> preds(model.num_sources());
        std::vector<std::vector<const TagSeq*>> ptrs(model.num_sources());
        for (std::size_t k = 0; k < model.num_sources(); ++k) {
          preds[k] = decode_tags(model, test, Decoder::with_source(k));
          for (const auto& p : preds[k]) ptrs[k].push_back(&p);
        }
        rep.expertise = expertise_matrix(ptrs, task.test.tags, task.dict, names);
      }
    }
    if (model.uses_sources()) {
      rep.attention = average_attention_by_source(model, test, std::vector<std::size_t>(test.size(), 0),
                                                  {"test"});
    }
  });

  stage("baselines", [&] {
    const auto encoded = encode_all(vocab, task.train.sentences());
    for (std::size_t b = 0; b < config.baselines.size(); ++b) {
      const Strategy s = config.baselines[b];
      if (!baseline_applies(s, config.mode)) {
        log_warning(strategy_name(s) + "-SLM does not apply to " + experiment_mode_name(config.mode) +
                    " mode; skipped");
        continue;
      }
      std::vector<EncodedSentence> sents;
      std::vector<TagSeq> tags;
      if (s == Strategy::kConcat) {
        for (const auto& p : concat_labels(task.train)) {
          sents.push_back(encoded[p.sentence]);
          tags.push_back(*task.train.annotation(p.source, p.sentence));
        }
      } else {
        sents = encoded;
        tags = generate_pseudo_labels(nullptr, task.train, {}, s).labels;
      }
      // One stream for every baseline: they differ only in their labels.
      Rng r = root.fork(10);
      TrainHistory h;
      ConsensusModel m = train_base_tagger(vocab, task.dict, sents, tags, task.dev, config,
                                           config.decouple_config(), r, &h);
      const std::string name = strategy_name(s) + "-SLM";
      rep.methods[name] = evaluate_tags(decode_tags(m, test, Decoder::base()), task.test.tags, task.dict);
      rep.details["baselines"][name] = history_json(h);
    }
  });

  rep.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {

std::vector<const SparseFeatures*> feature_ptrs(const ClassificationData& d) {
  std::vector<const SparseFeatures*> out;
  for (const auto& ex : d.examples) out.push_back(&ex.features);
  return out;
}

std::vector<int> gold_labels(const ClassificationData& d) {
  std::vector<int> out;
  for (const auto& ex : d.examples) {
    if (ex.label < 0) throw DataError("evaluation set has unlabeled examples");
    out.push_back(ex.label);
  }
  return out;
}

double class_accuracy(const ConsensusModel& m, const ClassificationData& d, Decoder dec) {
  return evaluate_labels(classify_corpus(m, feature_ptrs(d), dec, Exec::kSerial), gold_labels(d)).accuracy;
}

std::vector<SourcedClassExample> class_examples(const ClassTask& task) {
  std::vector<SourcedClassExample> examples;
  for (std::size_t k = 0; k < task.source_train.size(); ++k) {
    for (const auto& ex : task.source_train[k].examples) examples.push_back({&ex.features, ex.label, k});
  }
  return examples;
}

ConsensusModel train_class_base(const ClassTask& task, const std::vector<SourcedClassExample>& ex,
                                const ExperimentConfig& config, Rng& rng, TrainHistory* history) {
  ConsensusModel model(base_model_config(config), Vocabularies{}, task.labels, {{"base", "base"}});
  Rng init = rng.fork(1);
  model.init(init);
  std::vector<SourcedClassExample> single = ex;
  for (auto& e : single) e.source = 0;
  DevEvaluator eval;
  if (!task.dev.examples.empty()) {
    eval = [&](const ConsensusModel& m) { return class_accuracy(m, task.dev, Decoder::base()); };
  }
  Rng order = rng.fork(2);
  auto h = train_class_decoupling(model, single, config.decouple_config(), order, eval);
  if (history) *history = std::move(h);
  return model;
}

}  // namespace

ConsensusModel decouple_classifier(const ExperimentConfig& config, const ClassTask& task,
                                   std::uint64_t seed, Json& details) {
  return stage("decouple", [&] {
    const Rng root(seed);
    const auto examples = class_examples(task);
    ConsensusModel m(config.model, Vocabularies{}, task.labels, task.sources);
    Rng init = root.fork(2);
    m.init(init);
    DevEvaluator eval;
    if (!task.dev.examples.empty()) {
      eval = [&](const ConsensusModel& x) { return class_accuracy(x, task.dev, Decoder::base()); };
    } else {
      eval = [&](const ConsensusModel& x) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < task.source_dev.size(); ++k) {
          if (task.source_dev[k].examples.empty()) continue;
          sum += class_accuracy(x, task.source_dev[k], Decoder::with_source(k));
          ++n;
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
      };
    }
    Rng r = root.fork(3);
    details["decouple"] = history_json(train_class_decoupling(m, examples, config.decouple_config(), r, eval));
    return m;
  });
}

ClassAggregateResult aggregate_classifier(ConsensusModel& model, const ExperimentConfig& config,
                                          const ClassTask& task, std::uint64_t seed, Json& details) {
  return stage("aggregate", [&] {
    ClassAggregateResult a;
    if (!model.uses_sources()) {
      a.skipped = true;
      details["aggregate"] = "skipped: base model only";
      return a;
    }
    std::optional<SourceWeights> weights;
    if (config.strategy == Strategy::kAwv) {
      Vector acc(model.num_sources(), 0.0);
      for (std::size_t k = 0; k < model.num_sources(); ++k) {
        const auto& d = task.source_dev[k].examples.empty() ? task.source_train[k] : task.source_dev[k];
        acc[k] = class_accuracy(model, d, Decoder::with_source(k));
      }
      weights = source_weights_from_f1(acc);
    }
    a.weights = weights ? *weights
                        : Vector(model.num_sources(), 1.0 / static_cast<double>(model.num_sources()));
    const auto target = feature_ptrs(task.target_train);
    a.pseudo = generate_pseudo_class_labels(model, target, config.strategy, weights);
    std::vector<FrozenClassFeatures> features(target.size());
    for_each_index(target.size(), Exec::kParallel,
                   [&](std::size_t i) { features[i] = frozen_class_features(model, *target[i]); });
    DevEvaluator eval;
    if (!task.dev.examples.empty()) {
      eval = [&](const ConsensusModel& x) { return class_accuracy(x, task.dev, Decoder::consensus()); };
    }
    Rng r = Rng(seed).fork(4);
    a.history = train_class_aggregation(model, features, a.pseudo, config.aggregate_config(), r, eval);
    details["aggregate"] = history_json(a.history);
    details["source_weights"] = a.weights;
    return a;
  });
}

void write_class_pseudo_labels(const ClassAggregateResult& a, const ExperimentConfig& config,
                               const ClassTask& task, const fs::path& dir) {
  if (a.skipped) return;
  Json side;
  side["strategy"] = strategy_name(config.strategy);
  side["weights"] = a.weights;
  std::vector<std::string> names;
  for (int l : a.pseudo) names.push_back(task.labels.tag(l));
  side["labels"] = names;
  write_json(dir / "pseudo_labels.json", side);
}

SeedReport run_class_seed(const ExperimentConfig& config, const ClassTask& task, std::uint64_t seed,
                          const fs::path& seed_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SeedReport rep;
  rep.seed = seed;
  rep.artifact_dir = seed_dir.string();
  fs::create_directories(seed_dir);
  if (task.test.examples.empty()) throw StageError("load", ConfigError("a test set is required"), 1);
  const Rng root(seed);

  ConsensusModel model = decouple_classifier(config, task, seed, rep.details);
  stage("decouple", [&] { save_checkpoint(model, seed_dir / "checkpoint_decouple.json", to_json(config)); });
  const ClassAggregateResult agg = aggregate_classifier(model, config, task, seed, rep.details);
  stage("aggregate", [&] {
    write_class_pseudo_labels(agg, config, task, seed_dir);
    save_checkpoint(model, seed_dir / "checkpoint.json", to_json(config));
  });

  stage("evaluate", [&] {
    const Decoder d = model.uses_sources() ? Decoder::consensus() : Decoder::base();
    const auto gold = gold_labels(task.test);
    const auto test = feature_ptrs(task.test);
    rep.methods["ConNet"] = evaluate_labels(classify_corpus(model, test, d), gold);
    rep.methods["ConNet-base"] = evaluate_labels(classify_corpus(model, test, Decoder::base()), gold);
    if (model.uses_sources()) {
      std::vector<Vector> q;
      for (const auto* x : test) q.push_back(attention_weights(model.bank, frozen_class_features(model, *x).hidden));
      std::vector<std::string> names;
      for (const auto& s : task.sources) names.push_back(s.id);
      rep.attention = average_attention(q, std::vector<std::size_t>(q.size(), 0), {"test"}, names);
    }
  });

  stage("baselines", [&] {
    const auto examples = class_examples(task);
    for (std::size_t b = 0; b < config.baselines.size(); ++b) {
      if (config.baselines[b] != Strategy::kConcat) {
        log_warning(strategy_name(config.baselines[b]) + " baseline does not apply to classification; skipped");
        continue;
      }
      // One stream for every baseline: they differ only in their labels.
      Rng r = root.fork(10);
      TrainHistory h;
      ConsensusModel m = train_class_base(task, examples, config, r, &h);
      rep.methods["CONCAT-MLP"] =
          evaluate_labels(classify_corpus(m, feature_ptrs(task.test), Decoder::base()), gold_labels(task.test));
      rep.details["baselines"]["CONCAT-MLP"] = history_json(h);
    }
  });

  rep.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

RunReport run_experiment(const ExperimentConfig& config) {
  stage("config", [&] { config.validate(); });
  const auto t0 = std::chrono::steady_clock::now();
  if (config.threads > 0) set_num_threads(config.threads);
  const fs::path out = config.resolved_output_dir();
  stage("output", [&] {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
  });

  RunReport report;
  report.config = to_json(config);
  report.build_id = build_id();
  report.created = utc_timestamp();
  if (config.mode == ExperimentMode::kClassification) {
    const ClassTask task = stage("load", [&] { return load_class_task(config); });
    for (std::uint64_t seed : config.seeds) {
      log_info("seed " + std::to_string(seed));
      report.seeds.push_back(run_class_seed(config, task, seed, out / ("seed-" + std::to_string(seed))));
    }
  } else {
    const SequenceTask task = stage("load", [&] { return load_sequence_task(config); });
    for (std::uint64_t seed : config.seeds) {
      log_info("seed " + std::to_string(seed));
      report.seeds.push_back(run_sequence_seed(config, task, seed, out / ("seed-" + std::to_string(seed))));
    }
  }
  report.summary = summarize(report.seeds);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mstag

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


#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "mstag/errors.hpp"
#include "mstag/experiment.hpp"
#include "mstag/parallel.hpp"
#include "support.hpp"

using namespace mstag;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mstag_test_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.model.blstm.word_dim = 8;
  c.model.blstm.hidden = 6;
  c.model.blstm.use_chars = false;
  c.model.blstm.dropout = 0.2;
  c.seeds = {1};
  c.max_epochs = 3;
  c.patience = 3;
  c.aggregate_max_epochs = 3;
  c.aggregate_patience = 3;
  c.annotator_max_epochs = 2;
  c.annotator_patience = 2;
  c.formats = {"json", "csv", "conll"};
  return c;
}

SyntheticNer small_corpus(std::size_t train = 40) {
  SyntheticNerConfig c;
  c.train = train;
  c.dev = 12;
  c.test = 15;
  c.pool_size = 30;
  return generate_ner_corpus(c);
}

SequenceTask noise_task(std::size_t noise, std::uint64_t seed) {
  const SyntheticNer c = small_corpus();
  SequenceTask t;
  t.dict = c.dict;
  Rng rng(seed);
  t.train = gold_plus_noise_sources(c.train, c.dict, noise, rng);
  t.dev = c.dev;
  t.test = c.test;
  return t;
}

std::vector<std::string> entity_types_of(const TagSeq& tags, const TagDict& dict) {
  std::vector<std::string> out;
  for (int t : tags) out.push_back(t == 0 ? "O" : dict.entity_types()[dict.entity_type(t)]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("config defaults follow the published setup") {
  const ExperimentConfig c;
  CHECK(c.model.blstm.char_dim == 30);
  CHECK(c.model.blstm.word_dim == 100);
  CHECK(c.model.blstm.hidden == 150);
  CHECK(c.model.blstm.dropout == 0.5);
  CHECK(c.optimizer.base_lr == 0.015);
  CHECK(c.optimizer.decay_per_epoch == 0.05);
  CHECK(c.optimizer.clip_norm == 5.0);
  CHECK(c.max_epochs == 50);
  CHECK(c.patience == 15);
  CHECK(c.seeds.size() == 3);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config JSON round trip and unknown keys") {
  ExperimentConfig c = tiny_config();
  c.mode = ExperimentMode::kCrossDomain;
  c.strategy = Strategy::kAmv;
  c.baselines = {Strategy::kConcat};
  c.model.variant = TransformTarget::kEmission;
  const Json j = to_json(c);
  const ExperimentConfig back = experiment_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.model.variant == TransformTarget::kEmission);

  Json bad = j;
  bad["learning_rate"] = 0.1;
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  Json wrong_type = j;
  wrong_type["max_epochs"] = "ten";
  CHECK_THROWS_AS(experiment_config_from_json(wrong_type), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(Json::array()), ConfigError);

  const auto keys = experiment_config_keys();
  CHECK(keys.size() == j.size());
}

TEST_CASE("config file loading resolves the manifest next to it") {
  const auto dir = temp_dir("load");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"manifest": "data/manifest.json", "max_epochs": 7})";
  }
  const ExperimentConfig c = load_experiment_config(dir / "c.json");
  CHECK(c.max_epochs == 7);
  CHECK(fs::path(c.manifest) == (dir / "data/manifest.json").lexically_normal());
  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_experiment_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("overrides parse literals and comma lists") {
  ExperimentConfig c;
  apply_override(c, "max_epochs", "12");
  CHECK(c.max_epochs == 12);
  apply_override(c, "lr", "0.1");
  CHECK(c.optimizer.base_lr == 0.1);
  apply_override(c, "use_chars", "false");
  CHECK_FALSE(c.model.blstm.use_chars);
  apply_override(c, "seeds", "4,5,6");
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5, 6});
  apply_override(c, "seeds", "[7]");
  CHECK(c.seeds == std::vector<std::uint64_t>{7});
  apply_override(c, "baselines", "CONCAT,MVS");
  CHECK(c.baselines == std::vector<Strategy>{Strategy::kConcat, Strategy::kMvs});
  apply_override(c, "formats", "json");
  CHECK(c.formats == std::vector<std::string>{"json"});
  apply_override(c, "name", "123");
  CHECK(c.name == "123");
  apply_override(c, "variant", "DP(2)");
  CHECK(c.model.variant == TransformTarget::kTransition);
  apply_override(c, "mode", "classification");
  CHECK(c.model.mode == TaskMode::kClassification);

  CHECK_THROWS_AS(apply_override(c, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "max_epochs", "many"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "strategy", "XYZ"), Error);
}

TEST_CASE("config validation") {
  auto fails = [](auto edit) {
    ExperimentConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  fails([](ExperimentConfig& c) { c.seeds.clear(); });
  fails([](ExperimentConfig& c) { c.strategy = Strategy::kConcat; });
  fails([](ExperimentConfig& c) { c.mode = ExperimentMode::kCrossDomain; c.strategy = Strategy::kMvt; });
  fails([](ExperimentConfig& c) { c.simulate = true; c.folds = 3; c.num_select = 5; });
  fails([](ExperimentConfig& c) { c.simulate = true; c.num_select = 0; });
  fails([](ExperimentConfig& c) { c.formats = {"xml"}; });
  fails([](ExperimentConfig& c) { c.model.blstm.dropout = 1.0; });
  fails([](ExperimentConfig& c) { c.patience = 0; });
  fails([](ExperimentConfig& c) { c.optimizer.base_lr = -1.0; });
  fails([](ExperimentConfig& c) { c.threads = -2; });
}

TEST_CASE("output directory resolution") {
  ExperimentConfig c;
  c.name = "exp";
  ::unsetenv(kOutputRootEnv);
  CHECK(c.resolved_output_dir() == fs::path("runs") / "exp");
  ::setenv(kOutputRootEnv, "/tmp/mstag-root", 1);
  CHECK(c.resolved_output_dir() == fs::path("/tmp/mstag-root") / "exp");
  c.output_dir = "/elsewhere";
  CHECK(c.resolved_output_dir() == fs::path("/elsewhere"));
  ::unsetenv(kOutputRootEnv);
}

TEST_CASE("mean and sample standard deviation") {
  auto m = mean_std({1.0, 2.0, 3.0});
  CHECK(m.mean == doctest::Approx(2.0));
  CHECK(m.std == doctest::Approx(1.0));
  m = mean_std({0.5});
  CHECK(m.mean == 0.5);
  CHECK(m.std == 0.0);
  m = mean_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  CHECK(m.mean == doctest::Approx(5.0));
  CHECK(m.std == doctest::Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("summary recomputed by hand over three seeds") {
  Rng rng(5);
  std::vector<SeedReport> seeds(3);
  std::map<std::string, std::vector<double>> f1;
  for (std::size_t s = 0; s < 3; ++s) {
    seeds[s].seed = s + 1;
    for (const std::string method : {"ConNet", "MVT-SLM"}) {
      Metrics m;
      m.precision = rng.uniform();
      m.recall = rng.uniform();
      m.f1 = rng.uniform();
      m.accuracy = rng.uniform();
      seeds[s].methods[method] = m;
      f1[method].push_back(m.f1);
    }
  }
  const RunSummary sum = summarize(seeds);
  for (const auto& [method, v] : f1) {
    const double mean = (v[0] + v[1] + v[2]) / 3.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(sum.at(method).at("f1").mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(sum.at(method).at("f1").std == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  }
}

TEST_CASE("emit_report file sets") {
  RunReport r;
  r.build_id = "test";
  r.created = "2026-01-01T00:00:00Z";
  SeedReport s;
  s.seed = 9;
  Metrics m;
  m.f1 = 0.25;
  s.methods["ConNet"] = m;
  r.seeds.push_back(s);
  r.summary = summarize(r.seeds);

  SUBCASE("empty format list writes the manifest only") {
    const auto dir = temp_dir("emit_empty");
    const auto files = emit_report(r, {}, dir);
    CHECK(files == std::vector<fs::path>{"manifest.json"});
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
      (void)e;
      ++n;
    }
    CHECK(n == 1);
  }
  SUBCASE("json and csv") {
    const auto dir = temp_dir("emit_full");
    emit_report(r, {"json", "csv"}, dir);
    for (const char* f : {"manifest.json", "report.json", "metrics.json", "metrics.csv",
                          "expertise.csv", "attention.csv"}) {
      CHECK(fs::exists(dir / f));
    }
    const RunReport back = report_from_json(Json::parse(slurp(dir / "report.json")));
    CHECK(metrics_json(back) == metrics_json(r));
    CHECK(slurp(dir / "metrics.csv").find("ConNet,9,") != std::string::npos);
  }
  SUBCASE("unknown format") {
    CHECK_THROWS_AS(emit_report(r, {"pdf"}, temp_dir("emit_bad")), ConfigError);
  }
}

TEST_CASE("synthetic corpora") {
  const SyntheticNer a = small_corpus();
  const SyntheticNer b = small_corpus();
  CHECK(a.dict.entity_types().size() == 4);
  CHECK(a.train.sentences.size() == 40);
  CHECK(a.dev.sentences.size() == 12);
  CHECK(a.test.sentences.size() == 15);
  CHECK(a.train.tags == b.train.tags);
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < a.train.tags.size(); ++i) {
    CHECK(a.train.tags[i].size() == a.train.sentences[i].size());
    CHECK(is_valid_bio(a.train.tags[i], a.dict));
    chunks += extract_chunks(a.train.tags[i], a.dict).size();
  }
  CHECK(chunks > 0);

  SyntheticNerConfig cfg;
  cfg.train = 30;
  cfg.dev = 10;
  cfg.test = 10;
  const auto d = generate_ner_domains(cfg, 3);
  CHECK(d.train.size() == 3);
  CHECK(d.dev.size() == 3);
  CHECK_FALSE(d.target_train.sentences.empty());

  SyntheticClassConfig cc;
  cc.train_per_domain = 20;
  cc.dev_per_domain = 5;
  cc.target_train = 10;
  cc.target_test = 10;
  cc.dimension = 400;
  const auto cls = generate_class_domains(cc);
  CHECK(cls.train.size() == 3);
  CHECK(cls.labels.size() == 2);
  for (const auto& ex : cls.train[0].examples) {
    for (const auto& [idx, count] : ex.features.entries) {
      CHECK(idx >= 0);
      CHECK(idx < 400);
      CHECK(count > 0.0);
    }
  }
}

TEST_CASE("shuffled-label noise keeps the label multiset") {
  const SyntheticNer c = small_corpus();
  Rng rng(3);
  for (const auto& gold : c.train.tags) {
    const TagSeq noisy = shuffled_labels(gold, c.dict, rng);
    CHECK(noisy.size() == gold.size());
    CHECK(is_valid_bio(noisy, c.dict));
    CHECK(entity_types_of(noisy, c.dict) == entity_types_of(gold, c.dict));
  }
  Rng r2(4);
  const auto data = gold_plus_noise_sources(c.train, c.dict, 2, r2);
  CHECK(data.num_sources() == 3);
  CHECK(data.num_sentences() == c.train.sentences.size());
  for (std::size_t i = 0; i < data.num_sentences(); ++i) {
    CHECK(*data.annotation(0, i) == c.train.tags[i]);
    CHECK(*data.gold(i) == c.train.tags[i]);
    CHECK(data.annotation(2, i) != nullptr);
  }
}

TEST_CASE("simulated annotators") {
  const SyntheticNer c = small_corpus(50);
  const ExperimentConfig cfg = tiny_config();

  SUBCASE("five folds, five annotators, full coverage") {
    Rng rng(11);
    const auto d = simulate_annotators(c.train, c.dict, c.dev, 5, 5, cfg, rng);
    // Repeated sentences collapse under dedup.
    const std::size_t n = d.num_sentences();
    CHECK(n <= 50);
    CHECK(n > 25);
    CHECK(d.num_sources() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(d.annotated_by(k).size() == n);
      for (std::size_t i = 0; i < n; ++i) CHECK(is_valid_bio(*d.annotation(k, i), c.dict));
    }
    CHECK(d.has_gold());
  }
  SUBCASE("one fold gives one source") {
    Rng rng(11);
    const auto d = simulate_annotators(c.train, c.dict, c.dev, 1, 1, cfg, rng);
    CHECK(d.num_sources() == 1);
    CHECK(d.annotated_by(0).size() == d.num_sentences());
  }
  SUBCASE("fixed seed reproduces the annotations") {
    Rng r1(12), r2(12);
    const auto a = simulate_annotators(c.train, c.dict, c.dev, 5, 2, cfg, r1);
    const auto b = simulate_annotators(c.train, c.dict, c.dev, 5, 2, cfg, r2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(a.sources()[k].name == b.sources()[k].name);
      for (std::size_t i = 0; i < a.num_sentences(); ++i) CHECK(*a.annotation(k, i) == *b.annotation(k, i));
    }
  }
  SUBCASE("errors") {
    Rng rng(1);
    CHECK_THROWS_AS(simulate_annotators(c.train, c.dict, c.dev, 2, 3, cfg, rng), ConfigError);
    CHECK_THROWS_AS(simulate_annotators(c.train, c.dict, c.dev, 5, 0, cfg, rng), ConfigError);
    CHECK_THROWS_AS(simulate_annotators(c.train, c.dict, c.dev, 40, 40, cfg, rng), ConfigError);
  }
}

TEST_CASE("sequence pipeline is deterministic and writes parseable artifacts") {
  const SequenceTask task = noise_task(2, 21);
  const ExperimentConfig cfg = tiny_config();
  const auto dir = temp_dir("pipeline");
  RunReport a, b;
  a.seeds.push_back(run_sequence_seed(cfg, task, 5, dir / "a"));
  b.seeds.push_back(run_sequence_seed(cfg, task, 5, dir / "b"));
  a.summary = summarize(a.seeds);
  b.summary = summarize(b.seeds);
  CHECK(metrics_json(a).dump() == metrics_json(b).dump());
  CHECK(slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json"));

  const SeedReport& s = a.seeds[0];
  for (const char* m : {"ConNet", "ConNet-base", "CONCAT-SLM", "MVT-SLM", "MVS-SLM"}) {
    CHECK(s.methods.count(m) == 1);
  }
  REQUIRE(s.expertise);
  CHECK(s.expertise->sources.size() == 3);
  // Source 0 copies gold.
  for (std::size_t t = 0; t < s.expertise->types.size(); ++t) CHECK(s.expertise->f1(0, t) == 1.0);
  REQUIRE(s.attention);
  double row = 0.0;
  for (std::size_t k = 0; k < 3; ++k) row += s.attention->mean(0, k);
  CHECK(row == doctest::Approx(1.0));

  for (const char* f : {"predictions.conll", "pseudo_labels.conll"}) {
    std::ifstream in(dir / "a" / f);
    const ConllData parsed = parse_conll(in, {}, &task.dict, f);
    CHECK(parsed.has_tags);
    for (const auto& t : parsed.tags) CHECK(is_valid_bio(t, task.dict));
  }

  const auto out = temp_dir("pipeline_report");
  a.config = to_json(cfg);
  const auto files = emit_report(a, cfg.formats, out);
  CHECK(fs::exists(out / "predictions_seed5.conll"));
  CHECK(fs::exists(out / "pseudo_labels_seed5.json"));
  CHECK(files.size() == 9);
}

TEST_CASE("a single source collapses every method to one model") {
  const SequenceTask task = noise_task(0, 22);
  const ExperimentConfig cfg = tiny_config();
  const auto dir = temp_dir("k1");
  const SeedReport s = run_sequence_seed(cfg, task, 3, dir);

  // Attention over one source is 1, so the consensus matrix is that source's.
  const ConsensusModel model = load_checkpoint(dir / "checkpoint.json");
  std::vector<EncodedSentence> enc;
  for (const auto& sent : task.test.sentences) enc.push_back(model.vocab().encode(sent));
  auto via_source = decode_corpus(model, enc, Decoder::with_source(0));
  for (auto& t : via_source) t = repair_bio(t, task.dict);
  const Metrics single = evaluate_tags(via_source, task.test.tags, task.dict);
  CHECK(to_json(s.methods.at("ConNet")) == to_json(single));

  // With one annotator CONCAT, MVT and MVS see identical labels.
  CHECK(to_json(s.methods.at("CONCAT-SLM")) == to_json(s.methods.at("MVT-SLM")));
  CHECK(to_json(s.methods.at("CONCAT-SLM")) == to_json(s.methods.at("MVS-SLM")));
}

TEST_CASE("base-model-only runs skip aggregation") {
  const SequenceTask task = noise_task(2, 23);
  ExperimentConfig cfg = tiny_config();
  cfg.model.no_source_matrices = true;
  cfg.baselines.clear();
  const auto dir = temp_dir("base_only");
  const SeedReport s = run_sequence_seed(cfg, task, 2, dir);
  CHECK(to_json(s.methods.at("ConNet")) == to_json(s.methods.at("ConNet-base")));
  CHECK(s.details.at("aggregate") == "skipped: base model only");
  CHECK_FALSE(fs::exists(dir / "pseudo_labels.conll"));
  CHECK_FALSE(s.attention.has_value());
}

TEST_CASE("classification pipeline is deterministic") {
  SyntheticClassConfig cc;
  cc.train_per_domain = 40;
  cc.dev_per_domain = 10;
  cc.target_train = 30;
  cc.target_test = 30;
  cc.dimension = 400;
  const auto data = generate_class_domains(cc);
  ClassTask task;
  task.labels = data.labels;
  task.dimension = 400;
  for (std::size_t d = 0; d < data.train.size(); ++d) {
    task.sources.push_back({"domain" + std::to_string(d), "domain" + std::to_string(d)});
  }
  task.source_train = data.train;
  task.source_dev = data.dev;
  task.target_train = data.target_train;
  task.test = data.target_test;

  ExperimentConfig cfg = tiny_config();
  cfg.mode = ExperimentMode::kClassification;
  cfg.model.mode = TaskMode::kClassification;
  cfg.model.mlp.input_dim = 400;
  cfg.model.mlp.hidden = 8;
  cfg.baselines = {Strategy::kConcat};
  const auto dir = temp_dir("class");
  const SeedReport a = run_class_seed(cfg, task, 4, dir / "a");
  const SeedReport b = run_class_seed(cfg, task, 4, dir / "b");
  REQUIRE(a.methods.count("ConNet") == 1);
  CHECK(to_json(a.methods.at("ConNet")) == to_json(b.methods.at("ConNet")));
  CHECK(a.methods.at("ConNet").accuracy >= 0.0);
  CHECK(a.methods.at("ConNet").accuracy <= 1.0);
  REQUIRE(a.attention);
  CHECK(a.attention->sources.size() == 3);
}

TEST_CASE("bundled configs load against the bundled data") {
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(fs::path(MSTAG_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    ++seen;
    CAPTURE(e.path().string());
    const ExperimentConfig c = load_experiment_config(e.path());
    CHECK_NOTHROW(c.validate());
    REQUIRE(fs::exists(c.manifest));
    if (c.mode == ExperimentMode::kClassification) {
      const ClassTask t = load_class_task(c);
      CHECK(t.sources.size() == 3);
      CHECK_FALSE(t.test.examples.empty());
    } else {
      const SequenceTask t = load_sequence_task(c);
      CHECK(t.dict.entity_types().size() == 4);
      CHECK_FALSE(t.test.sentences.empty());
    }
  }
  CHECK(seen >= 3);
}

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

// mstag command-line driver.
//
//   mstag run --config exp.json [--<key> value ...]
//   mstag simulate | train-decouple | train-aggregate   (pipeline stages)
//   mstag predict --checkpoint ckpt.json --input in.conll --out out.conll
//   mstag evaluate --pred pred.conll --gold gold.conll
//   mstag report --input runs/x/report.json --formats json,csv
//
// Exit codes: 0 success, 1 configuration or usage error, 2 data error,
// 3 numeric failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mstag/checkpoint.hpp"
#include "mstag/errors.hpp"
#include "mstag/eval.hpp"
#include "mstag/experiment.hpp"
#include "mstag/log.hpp"
#include "mstag/parallel.hpp"
#include "mstag/report.hpp"

namespace fs = std::filesystem;
using namespace mstag;

namespace {

// --config plus one --<key> option per experiment config field.
struct ConfigOptions {
  std::string path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "experiment config (JSON)");
    for (const auto& key : experiment_config_keys()) {
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      options[key] = app->add_option(names, values[key], "override config field '" + key + "'");
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) apply_override(c, key, values.at(key));
    }
    c.validate();
    if (c.threads > 0) set_num_threads(c.threads);
    return c;
  }
};

void write_json_file(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}


std::uint64_t pick_seed(const ExperimentConfig& c, const std::optional<std::uint64_t>& seed) {
  return seed ? *seed : c.seeds.front();
}

Decoder parse_decoder(const std::string& spec, const ConsensusModel& model) {
  if (spec == "consensus") return model.uses_sources() ? Decoder::consensus() : Decoder::base();
  if (spec == "base") return Decoder::base();
  if (spec.rfind("source:", 0) == 0) {
    const std::string id = spec.substr(7);
    for (std::size_t k = 0; k < model.sources().size(); ++k) {
      if (model.sources()[k].id == id) return Decoder::with_source(k);
    }
    try {
      const std::size_t k = std::stoul(id);
      if (k < model.num_sources()) return Decoder::with_source(k);
    } catch (const std::exception&) {
    }
    throw ConfigError("unknown source '" + id + "'");
  }
  throw ConfigError("decoder must be consensus, base or source:<id>");
}

int cmd_simulate(const ExperimentConfig& c, std::optional<std::uint64_t> seed_opt) {
  if (c.mode != ExperimentMode::kCrowd) throw ConfigError("simulate runs in crowd mode");
  ExperimentConfig sim = c;
  sim.simulate = true;
  SequenceTask task = load_sequence_task(sim);
  const std::uint64_t seed = pick_seed(c, seed_opt);
  Rng rng = Rng(seed).fork(1);
  const auto data = simulate_annotators(task.gold_train, task.dict, task.dev, sim.folds,
                                        sim.num_select, sim, rng);
  const fs::path out = c.resolved_output_dir();
  fs::create_directories(out);
  const Manifest in = load_manifest(c.manifest);
  Manifest m;
  m.tag_set = task.dict.tags();
  for (std::size_t k = 0; k < data.num_sources(); ++k) {
    const std::string file = data.sources()[k].id + ".conll";
    std::vector<TagSeq> tags;
    for (std::size_t i = 0; i < data.num_sentences(); ++i) tags.push_back(*data.annotation(k, i));
    write_conll_file(out / file, data.sentences(), tags, task.dict);
    m.sources.push_back({data.sources()[k].id, data.sources()[k].name, file, std::nullopt});
  }
  auto absolute = [&](const std::optional<std::string>& p) -> std::optional<std::string> {
    if (!p) return std::nullopt;
    return fs::absolute(in.resolve(*p)).lexically_normal().string();
  };
  m.gold_path = absolute(in.gold_path);
  m.dev_path = absolute(in.dev_path);
  m.test_path = absolute(in.test_path);
  save_manifest(m, out / "manifest.json");
  std::cout << "wrote " << data.num_sources() << " simulated sources to " << out.string() << "\n";
  return 0;
}

int cmd_train_decouple(const ExperimentConfig& c, std::optional<std::uint64_t> seed_opt,
                       std::string output) {
  const std::uint64_t seed = pick_seed(c, seed_opt);
  if (output.empty()) output = (c.resolved_output_dir() / "checkpoint_decouple.json").string();
  Json details = Json::object();
  ConsensusModel model;
  if (c.mode == ExperimentMode::kClassification) {
    model = decouple_classifier(c, load_class_task(c), seed, details);
  } else {
    SequenceTask task = load_sequence_task(c);
    model = decouple_sequence(c, task, seed, details);
  }
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  save_checkpoint(model, output, {{"experiment", to_json(c)}, {"seed", seed}, {"details", details}});
  std::cout << "decoupling checkpoint: " << output << "\n";
  return 0;
}

int cmd_train_aggregate(const ExperimentConfig& c, std::optional<std::uint64_t> seed_opt,
                        const std::string& checkpoint, std::string output) {
  const std::uint64_t seed = pick_seed(c, seed_opt);
  const fs::path dir = c.resolved_output_dir();
  if (output.empty()) output = (dir / "checkpoint.json").string();
  ConsensusModel model = load_checkpoint(checkpoint);
  Json details = Json::object();
  fs::create_directories(dir);
  if (c.mode == ExperimentMode::kClassification) {
    const ClassTask task = load_class_task(c);
    const auto a = aggregate_classifier(model, c, task, seed, details);
    write_class_pseudo_labels(a, c, task, dir);
  } else {
    SequenceTask task = load_sequence_task(c);
    if (c.simulate) {
      Rng r = Rng(seed).fork(1);
      task.train = simulate_annotators(task.gold_train, task.dict, task.dev, c.folds, c.num_select, c, r);
    }
    const auto a = aggregate_sequence(model, c, task, seed, details);
    write_pseudo_labels(a, task, dir);
  }
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  save_checkpoint(model, output, {{"experiment", to_json(c)}, {"seed", seed}, {"details", details}});
  std::cout << "aggregation checkpoint: " << output << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& input, const std::string& output,
                const std::string& decoder) {
  const ConsensusModel model = load_checkpoint(checkpoint);
  const Decoder d = parse_decoder(decoder, model);
  std::ofstream out_file;
  if (!output.empty()) {
    out_file.open(output);
    if (!out_file) throw ConfigError("cannot write " + output);
  }
  std::ostream& out = output.empty() ? std::cout : out_file;
  if (model.mode() == TaskMode::kClassification) {
    const RawSparse raw = read_sparse_file(input, static_cast<int>(model.config().mlp.input_dim));
    std::vector<const SparseFeatures*> ptrs;
    for (const auto& f : raw.features) ptrs.push_back(&f);
    for (int label : classify_corpus(model, ptrs, d)) out << model.labels().tag(label) << '\n';
    return 0;
  }
  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  const RawConll raw = parse_conll_raw(in, {}, fs::path(input).filename().string());
  std::vector<EncodedSentence> enc;
  for (const auto& s : raw.sentences) enc.push_back(model.vocab().encode(s));
  auto pred = decode_corpus(model, enc, d);
  for (auto& p : pred) {
    if (model.labels().is_bio()) p = repair_bio(p, model.labels());
  }
  write_conll(out, raw.sentences, pred, model.labels());
  return 0;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path, bool labels,
                 const std::string& output) {
  Metrics m;
  if (labels) {
    const auto pred = read_lines(pred_path);
    const auto gold = read_lines(gold_path);
    if (pred.size() != gold.size()) throw DataError("prediction and gold label counts differ");
    std::vector<std::string> all(pred);
    all.insert(all.end(), gold.begin(), gold.end());
    const TagDict dict = TagDict::plain(all);
    std::vector<int> p, g;
    for (const auto& x : pred) p.push_back(dict.id(x));
    for (const auto& x : gold) g.push_back(dict.id(x));
    m = evaluate_labels(p, g);
  } else {
    std::ifstream pin(pred_path), gin(gold_path);
    if (!pin) throw DataError("cannot open " + pred_path);
    if (!gin) throw DataError("cannot open " + gold_path);
    const RawConll p = parse_conll_raw(pin, {}, "pred");
    const RawConll g = parse_conll_raw(gin, {}, "gold");
    if (!p.has_tags || !g.has_tags) throw DataError("both files need a tag column");
    if (p.sentences.size() != g.sentences.size()) throw DataError("sentence counts differ");
    for (std::size_t i = 0; i < p.sentences.size(); ++i) {
      if (p.sentences[i].tokens != g.sentences[i].tokens) {
        throw DataError("sentence " + std::to_string(i + 1) + " differs between files");
      }
    }
    std::vector<std::string> observed;
    for (const auto* raw : {&p, &g}) {
      for (const auto& seq : raw->tags) observed.insert(observed.end(), seq.begin(), seq.end());
    }
    const TagDict dict = TagDict::infer(observed);
    auto pt = map_tags(p, dict);
    for (auto& t : pt) {
      if (dict.is_bio()) t = repair_bio(t, dict);
    }
    auto gt = map_tags(g, dict);
    for (auto& t : gt) {
      if (dict.is_bio()) t = repair_bio(t, dict);
    }
    m = evaluate_tags(pt, gt, dict);
  }
  const Json j = to_json(m);
  if (output.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json_file(output, j);
  }
  return 0;
}

int cmd_run(const ExperimentConfig& c) {
  const RunReport report = run_experiment(c);
  const fs::path dir = c.resolved_output_dir();
  emit_report(report, c.formats, dir);
  for (const auto& [method, stats] : report.summary) {
    std::cout << method << ": f1 " << stats.at("f1").mean << " +- " << stats.at("f1").std
              << ", accuracy " << stats.at("accuracy").mean << " +- " << stats.at("accuracy").std
              << "\n";
  }
  std::cout << "report written to " << dir.string() << "\n";
  return 0;
}

int cmd_report(const std::string& input, const std::vector<std::string>& formats, std::string dir) {
  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open " + input);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(input + ": " + e.what());
  }
  const RunReport report = report_from_json(j);
  if (dir.empty()) dir = fs::path(input).parent_path().string();
  for (const auto& f : emit_report(report, formats, dir)) std::cout << (fs::path(dir) / f).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mstag: multi-source sequence labeling with source matrices and attention"};
  app.require_subcommand(1);
  std::string log_level = "warning";
  app.add_option("--log-level", log_level, "quiet, warning or info")
      ->check(CLI::IsMember({"quiet", "warning", "info"}));

  ConfigOptions sim_cfg, dec_cfg, agg_cfg, run_cfg;
  std::optional<std::uint64_t> seed;
  std::string checkpoint, input, output, decoder = "consensus", pred, gold, report_dir;
  bool labels = false;
  std::vector<std::string> formats = {"json", "csv"};

  auto* sim = app.add_subcommand("simulate", "train fold taggers and write simulated annotator files");
  sim_cfg.attach(sim);
  sim->add_option("--seed", seed, "seed (default: first config seed)");

  auto* dec = app.add_subcommand("train-decouple", "train the shared model and source matrices");
  dec_cfg.attach(dec);
  dec->add_option("--seed", seed, "seed (default: first config seed)");
  dec->add_option("--out", output, "checkpoint path");

  auto* agg = app.add_subcommand("train-aggregate", "pseudo-label and train the attention module");
  agg_cfg.attach(agg);
  agg->add_option("--seed", seed, "seed (default: first config seed)");
  agg->add_option("--checkpoint", checkpoint, "decoupling checkpoint")->required();
  agg->add_option("--out", output, "checkpoint path");

  auto* pre = app.add_subcommand("predict", "tag a CoNLL file (or label a sparse file)");
  pre->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  pre->add_option("--input", input, "input file")->required();
  pre->add_option("--out", output, "output file (default stdout)");
  pre->add_option("--decoder", decoder, "consensus, base or source:<id>");

  auto* ev = app.add_subcommand("evaluate", "score predictions against gold");
  ev->add_option("--pred", pred, "predicted CoNLL or label file")->required();
  ev->add_option("--gold", gold, "gold CoNLL or label file")->required();
  ev->add_flag("--labels", labels, "files hold one class label per line");
  ev->add_option("--out", output, "metrics JSON (default stdout)");

  auto* run = app.add_subcommand("run", "full pipeline over all seeds, then emit the report");
  run_cfg.attach(run);

  auto* rep = app.add_subcommand("report", "re-emit report files from a report.json");
  rep->add_option("--input", input, "report.json")->required();
  rep->add_option("--formats", formats, "json, csv, conll")->delimiter(',');
  rep->add_option("--out-dir", report_dir, "output directory (default: next to the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  set_log_level(log_level == "quiet" ? LogLevel::kQuiet
                : log_level == "info" ? LogLevel::kInfo
                                      : LogLevel::kWarning);
  try {
    if (*sim) return cmd_simulate(sim_cfg.resolve(), seed);
    if (*dec) return cmd_train_decouple(dec_cfg.resolve(), seed, output);
    if (*agg) return cmd_train_aggregate(agg_cfg.resolve(), seed, checkpoint, output);
    if (*pre) return cmd_predict(checkpoint, input, output, decoder);
    if (*ev) return cmd_evaluate(pred, gold, labels, output);
    if (*run) return cmd_run(run_cfg.resolve());
    if (*rep) return cmd_report(input, formats, report_dir);
  } catch (const StageError& e) {
    std::cerr << "mstag: " << e.what() << "\n";
    return e.exit_code();
  } catch (const Error& e) {
    std::cerr << "mstag: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "mstag: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

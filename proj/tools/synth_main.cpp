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

// Writes the bundled synthetic corpora:
//   <out>/ner/             gold train/dev/test for annotator simulation
//   <out>/ner-domains/     per-domain labeled splits plus a target domain
//   <out>/classification/  per-domain sparse count files plus a target domain

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mstag/errors.hpp"
#include "mstag/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mstag;

namespace {

void write_corpus(const fs::path& path, const TaggedCorpus& c, const TagDict& dict) {
  write_conll_file(path, c.sentences, c.tags, dict);
}

void write_sparse_file(const fs::path& path, const ClassificationData& d, bool hide_labels) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  if (!hide_labels) {
    write_sparse(out, d);
    return;
  }
  ClassificationData copy = d;
  for (auto& ex : copy.examples) ex.label = -1;
  write_sparse(out, copy);
}

void ner(const fs::path& dir, const SyntheticNerConfig& cfg) {
  fs::create_directories(dir);
  const SyntheticNer c = generate_ner_corpus(cfg);
  write_corpus(dir / "train.conll", c.train, c.dict);
  write_corpus(dir / "dev.conll", c.dev, c.dict);
  write_corpus(dir / "test.conll", c.test, c.dict);
  Manifest m;
  m.gold_path = "train.conll";
  m.dev_path = "dev.conll";
  m.test_path = "test.conll";
  m.tag_set = c.dict.tags();
  save_manifest(m, dir / "manifest.json");
}

void ner_domains(const fs::path& dir, const SyntheticNerConfig& cfg, std::size_t domains) {
  fs::create_directories(dir);
  const SyntheticNerDomains c = generate_ner_domains(cfg, domains);
  Manifest m;
  for (std::size_t d = 0; d < domains; ++d) {
    const std::string name = "domain" + std::to_string(d);
    write_corpus(dir / (name + "-train.conll"), c.train[d], c.dict);
    write_corpus(dir / (name + "-dev.conll"), c.dev[d], c.dict);
    m.sources.push_back({name, name, name + "-train.conll", name + "-dev.conll"});
  }
  // The target training split is written without tags.
  std::ofstream target(dir / "target-train.conll");
  for (const auto& s : c.target_train.sentences) {
    for (const auto& t : s.tokens) target << t << '\n';
    target << '\n';
  }
  write_corpus(dir / "target-dev.conll", c.target_dev, c.dict);
  write_corpus(dir / "target-test.conll", c.target_test, c.dict);
  m.target_path = "target-train.conll";
  m.dev_path = "target-dev.conll";
  m.test_path = "target-test.conll";
  m.tag_set = c.dict.tags();
  save_manifest(m, dir / "manifest.json");
}

void classification(const fs::path& dir, const SyntheticClassConfig& cfg) {
  fs::create_directories(dir);
  const SyntheticClassDomains c = generate_class_domains(cfg);
  Manifest m;
  for (std::size_t d = 0; d < c.train.size(); ++d) {
    const std::string name = "domain" + std::to_string(d);
    write_sparse_file(dir / (name + "-train.txt"), c.train[d], false);
    write_sparse_file(dir / (name + "-dev.txt"), c.dev[d], false);
    m.sources.push_back({name, name, name + "-train.txt", name + "-dev.txt"});
  }
  write_sparse_file(dir / "target-train.txt", c.target_train, true);
  write_sparse_file(dir / "target-test.txt", c.target_test, false);
  m.target_path = "target-train.txt";
  m.test_path = "target-test.txt";
  m.tag_set = c.labels.tags();
  save_manifest(m, dir / "manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mstag-synth: write the synthetic corpora"};
  std::string out = "data/synthetic";
  SyntheticNerConfig ner_cfg;
  SyntheticClassConfig cls_cfg;
  std::size_t domains = 3;
  app.add_option("--out", out, "output directory");
  app.add_option("--train", ner_cfg.train, "NER training sentences");
  app.add_option("--dev", ner_cfg.dev, "NER dev sentences");
  app.add_option("--test", ner_cfg.test, "NER test sentences");
  app.add_option("--seed", ner_cfg.seed, "NER generator seed");
  app.add_option("--domains", domains, "number of NER source domains (1-4)");
  app.add_option("--class-seed", cls_cfg.seed, "classification generator seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    ner(fs::path(out) / "ner", ner_cfg);
    SyntheticNerConfig dom = ner_cfg;
    dom.train = 400;
    dom.dev = 80;
    ner_domains(fs::path(out) / "ner-domains", dom, domains);
    classification(fs::path(out) / "classification", cls_cfg);
  } catch (const Error& e) {
    std::cerr << "mstag-synth: " << e.what() << "\n";
    return exit_code_for(e);
  }
  std::cout << "wrote synthetic corpora under " << out << "\n";
  return 0;
}

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

#include "mstag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "mstag/errors.hpp"

namespace mstag {

namespace {

constexpr std::array<const char*, 4> kTypes = {"PER", "LOC", "ORG", "MISC"};

const std::vector<std::string> kSyllables = {
    "ka", "lo", "mi", "ren", "ta", "vo", "sel", "dar", "bri", "nu", "fen", "gor", "hal", "is",
    "jun", "mar", "tor", "ul", "zen", "pa", "qui", "ros", "te", "vin", "wal", "ya", "el", "or"};

const std::vector<std::vector<std::string>> kSuffixes = {
    {"son", "sen", "ova", "ski", "ez"},
    {"burg", "ville", "stad", "ford", "holm"},
    {"tex", "corp", "tron", "ware", "lab"},
    {"ian", "ese", "ish", "ic", "an"}};

// Second tokens that make a two-token entity.
const std::vector<std::vector<std::string>> kTails = {
    {},
    {"River", "Valley", "Bay"},
    {"Group", "Bank", "Union", "Partners"},
    {"Cup", "Open", "Games"}};

struct Template {
  int style;
  std::vector<std::string> tokens;  // <PER>, <LOC>, <ORG>, <MISC> are slots
};

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> t = [] {
    const std::vector<std::pair<int, const char*>> raw = {
        {0, "<PER> visited <LOC> on Monday ."},
        {0, "Mr. <PER> met <PER> in <LOC> ."},
        {0, "<PER> , a spokesman for <ORG> , said the deal was fair ."},
        {0, "the minister <PER> arrived in <LOC> late on Friday ."},
        {0, "<PER> told reporters that <ORG> would appeal ."},
        {0, "Dr. <PER> said <PER> had left <LOC> ."},
        {1, "shares of <ORG> rose 3 percent in <LOC> trading ."},
        {1, "<ORG> said profits fell in the third quarter ."},
        {1, "<ORG> agreed to buy <ORG> for 40 million dollars ."},
        {1, "analysts expect <ORG> to report higher sales ."},
        {1, "the <MISC> company <ORG> opened an office in <LOC> ."},
        {1, "<ORG> shares closed lower on Tuesday ."},
        {2, "<PER> won the <MISC> in <LOC> ."},
        {2, "the <MISC> team beat <ORG> 2 - 1 ."},
        {2, "<PER> scored twice as <ORG> beat <ORG> ."},
        {2, "<MISC> striker <PER> was injured ."},
        {2, "the match in <LOC> ended in a draw ."},
        {2, "<PER> finished second behind <PER> ."},
        {3, "heavy rain hit <LOC> and <LOC> overnight ."},
        {3, "the <MISC> government rejected the plan ."},
        {3, "talks between <LOC> and <LOC> resumed in <LOC> ."},
        {3, "<MISC> officials said the border was closed ."},
        {3, "the river flooded parts of <LOC> ."},
        {3, "no agreement was reached on Sunday ."},
        {3, "prices were unchanged in quiet trading ."},
    };
    std::vector<Template> out;
    for (const auto& [style, text] : raw) out.push_back({style, split_words(text)});
    return out;
  }();
  return t;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

using Name = std::vector<std::string>;

Name make_name(int type, bool bare, Rng& rng) {
  std::string stem;
  const std::size_t syl = 2 + rng.below(2);
  for (std::size_t i = 0; i < syl; ++i) stem += kSyllables[rng.below(kSyllables.size())];
  if (!bare) {
    const auto& sfx = kSuffixes[static_cast<std::size_t>(type)];
    stem += sfx[rng.below(sfx.size())];
  }
  Name name{capitalize(stem)};
  if (type == 2 && rng.uniform() < 0.3) {
    std::string acr;
    for (std::size_t i = 0; i < 3; ++i) acr += static_cast<char>('A' + rng.below(26));
    return {acr};
  }
  const auto& tails = kTails[static_cast<std::size_t>(type)];
  if (!tails.empty() && rng.uniform() < 0.35) name.push_back(tails[rng.below(tails.size())]);
  if (type == 0 && rng.uniform() < 0.3) {
    std::string first;
    for (std::size_t i = 0; i < 2; ++i) first += kSyllables[rng.below(kSyllables.size())];
    name.insert(name.begin(), capitalize(first));
  }
  return name;
}

struct Pools {
  std::vector<std::vector<Name>> names;  // [type][i]
};

Pools make_pools(const SyntheticNerConfig& config, Rng& rng) {
  Pools p;
  p.names.resize(kTypes.size());
  for (std::size_t t = 0; t < kTypes.size(); ++t) {
    std::set<Name> seen;
    while (p.names[t].size() < config.pool_size) {
      Name n = make_name(static_cast<int>(t), rng.uniform() < config.bare_name_rate, rng);
      if (seen.insert(n).second) p.names[t].push_back(std::move(n));
    }
  }
  return p;
}

// Heavy-headed draw so frequent names recur and the tail stays rare.
const Name& draw_name(const Pools& pools, std::size_t type, Rng& rng) {
  const auto& pool = pools.names[type];
  const double u = rng.uniform();
  const auto idx = static_cast<std::size_t>(std::pow(u, 2.0) * static_cast<double>(pool.size()));
  return pool[std::min(idx, pool.size() - 1)];
}

TagDict ner_dict() {
  std::vector<std::string> tags;
  for (const char* t : kTypes) tags.push_back(std::string("B-") + t);
  return TagDict::bio(tags);
}

void emit_sentence(const Template& tpl, const Pools& pools, const TagDict& dict,
                   const std::string& id, Rng& rng, TaggedCorpus& out) {
  Sentence s;
  s.id = id;
  TagSeq tags;
  for (const auto& tok : tpl.tokens) {
    std::size_t type = kTypes.size();
    for (std::size_t t = 0; t < kTypes.size(); ++t) {
      if (tok == std::string("<") + kTypes[t] + ">") type = t;
    }
    if (type == kTypes.size()) {
      s.tokens.push_back(tok);
      tags.push_back(dict.id("O"));
      continue;
    }
    const Name& name = draw_name(pools, type, rng);
    for (std::size_t i = 0; i < name.size(); ++i) {
      s.tokens.push_back(name[i]);
      tags.push_back(dict.id((i == 0 ? "B-" : "I-") + std::string(kTypes[type])));
    }
  }
  out.sentences.push_back(std::move(s));
  out.tags.push_back(std::move(tags));
}

// Template choice: with probability `focus` from the favoured style, else
// uniformly from all templates.
TaggedCorpus make_split(std::size_t n, const Pools& pools, const TagDict& dict,
                        const std::string& prefix, int style, double focus, Rng& rng) {
  const auto& all = templates();
  std::vector<std::size_t> favoured;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].style == style) favoured.push_back(i);
  }
  TaggedCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t t = rng.below(all.size());
    if (!favoured.empty() && rng.uniform() < focus) t = favoured[rng.below(favoured.size())];
    emit_sentence(all[t], pools, dict, prefix + ":" + std::to_string(i), rng, c);
  }
  return c;
}

}  // namespace

SyntheticNer generate_ner_corpus(const SyntheticNerConfig& config) {
  Rng rng(config.seed);
  SyntheticNer out;
  out.dict = ner_dict();
  const Pools pools = make_pools(config, rng);
  out.train = make_split(config.train, pools, out.dict, "train", -1, 0.0, rng);
  out.dev = make_split(config.dev, pools, out.dict, "dev", -1, 0.0, rng);
  out.test = make_split(config.test, pools, out.dict, "test", -1, 0.0, rng);
  return out;
}

SyntheticNerDomains generate_ner_domains(const SyntheticNerConfig& config, std::size_t domains) {
  if (domains == 0 || domains > 4) throw ConfigError("synthetic domains must be in [1, 4]");
  Rng rng(config.seed);
  SyntheticNerDomains out;
  out.dict = ner_dict();
  const Pools pools = make_pools(config, rng);
  for (std::size_t d = 0; d < domains; ++d) {
    const std::string name = "domain" + std::to_string(d);
    const int style = static_cast<int>(d);
    out.train.push_back(make_split(config.train, pools, out.dict, name + "-train", style, 0.8, rng));
    out.dev.push_back(make_split(config.dev, pools, out.dict, name + "-dev", style, 0.8, rng));
  }
  out.target_train = make_split(config.train, pools, out.dict, "target-train", -1, 0.0, rng);
  out.target_dev = make_split(config.dev, pools, out.dict, "target-dev", -1, 0.0, rng);
  out.target_test = make_split(config.test, pools, out.dict, "target-test", -1, 0.0, rng);
  return out;
}

TagSeq shuffled_labels(const TagSeq& gold, const TagDict& dict, Rng& rng) {
  TagSeq t = gold;
  rng.shuffle(t);
  return repair_bio(t, dict);
}

MultiSourceDataset gold_plus_noise_sources(const TaggedCorpus& corpus, const TagDict& dict,
                                           std::size_t noise_sources, Rng& rng) {
  std::vector<SourceInfo> sources{{"gold", "gold-copy"}};
  for (std::size_t k = 0; k < noise_sources; ++k) {
    sources.push_back({"noise" + std::to_string(k + 1), "shuffled-" + std::to_string(k + 1)});
  }
  MultiSourceDataset data(dict, sources);
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const std::size_t idx = data.add_sentence(corpus.sentences[i], false);
    data.set_gold(idx, corpus.tags[i]);
    data.annotate(0, idx, corpus.tags[i]);
    for (std::size_t k = 1; k <= noise_sources; ++k) {
      data.annotate(k, idx, shuffled_labels(corpus.tags[i], dict, rng));
    }
  }
  return data;
}

namespace {

ClassExample class_example(int label, const std::vector<int>& shared_pos,
                           const std::vector<int>& shared_neg, const std::vector<int>& own_pos,
                           const std::vector<int>& own_neg, int dimension, Rng& rng) {
  std::map<int, double> counts;
  const auto& sp = label == 1 ? shared_pos : shared_neg;
  const auto& op = label == 1 ? own_pos : own_neg;
  const std::size_t words = 20 + rng.below(20);
  for (std::size_t w = 0; w < words; ++w) {
    const double u = rng.uniform();
    int f;
    if (u < 0.12) {
      f = sp[rng.below(sp.size())];
    } else if (u < 0.27) {
      f = op[rng.below(op.size())];
    } else {
      f = 200 + static_cast<int>(rng.below(static_cast<std::uint64_t>(dimension - 200)));
    }
    counts[f] += 1.0;
  }
  ClassExample ex;
  ex.label = label;
  for (const auto& [f, c] : counts) ex.features.entries.emplace_back(f, c);
  return ex;
}

}  // namespace

SyntheticClassDomains generate_class_domains(const SyntheticClassConfig& config) {
  if (config.dimension < 400) throw ConfigError("synthetic classification needs dimension >= 400");
  if (config.domains == 0) throw ConfigError("synthetic classification needs a domain");
  Rng rng(config.seed);
  SyntheticClassDomains out;
  out.labels = TagDict::plain({"neg", "pos"});
  // Features 0-19 are shared cues, 20-199 are split into per-domain cues.
  std::vector<int> shared_pos, shared_neg;
  for (int f = 0; f < 10; ++f) shared_pos.push_back(f);
  for (int f = 10; f < 20; ++f) shared_neg.push_back(f);
  const std::size_t groups = config.domains + 1;  // the target gets its own cues too
  const int width = static_cast<int>(180 / groups) / 2;
  std::vector<std::vector<int>> own_pos(groups), own_neg(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const int base = 20 + static_cast<int>(g) * 2 * width;
    for (int f = 0; f < width; ++f) {
      own_pos[g].push_back(base + f);
      own_neg[g].push_back(base + width + f);
    }
  }
  auto make = [&](std::size_t n, const std::vector<std::size_t>& cue_groups) {
    ClassificationData d;
    d.labels = out.labels;
    d.dimension = config.dimension;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng.below(2));
      const std::size_t g = cue_groups[rng.below(cue_groups.size())];
      d.examples.push_back(class_example(label, shared_pos, shared_neg, own_pos[g], own_neg[g],
                                         config.dimension, rng));
    }
    return d;
  };
  for (std::size_t d = 0; d < config.domains; ++d) {
    out.train.push_back(make(config.train_per_domain, {d}));
    out.dev.push_back(make(config.dev_per_domain, {d}));
  }
  // The target leans on domain cues from every source plus its own.
  std::vector<std::size_t> target_groups;
  for (std::size_t g = 0; g < groups; ++g) target_groups.push_back(g);
  out.target_train = make(config.target_train, target_groups);
  out.target_test = make(config.target_test, target_groups);
  return out;
}

}  // namespace mstag

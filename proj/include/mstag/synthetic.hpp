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

#ifndef MSTAG_SYNTHETIC_HPP_
#define MSTAG_SYNTHETIC_HPP_

#include <cstdint>
#include <vector>

#include "mstag/data.hpp"

namespace mstag {

// Template-based NER corpus with PER, LOC, ORG and MISC entities. Names are
// drawn from per-type pools built from syllables; most carry a type-specific
// suffix and a fraction are bare, so their type is only recoverable from
// context.
struct SyntheticNerConfig {
  std::size_t train = 1200;
  std::size_t dev = 200;
  std::size_t test = 300;
  std::size_t pool_size = 250;
  double bare_name_rate = 0.25;
  std::uint64_t seed = 20260;
};

struct TaggedCorpus {
  std::vector<Sentence> sentences;
  std::vector<TagSeq> tags;
};

struct SyntheticNer {
  TagDict dict;
  TaggedCorpus train;
  TaggedCorpus dev;
  TaggedCorpus test;
};

SyntheticNer generate_ner_corpus(const SyntheticNerConfig& config);

// One corpus per domain plus an unlabeled-in-use target corpus. Domains
// differ in which templates they favour; the target mixes all of them.
struct SyntheticNerDomains {
  TagDict dict;
  std::vector<TaggedCorpus> train;  // per domain
  std::vector<TaggedCorpus> dev;    // per domain
  TaggedCorpus target_train;
  TaggedCorpus target_dev;
  TaggedCorpus target_test;
};

SyntheticNerDomains generate_ner_domains(const SyntheticNerConfig& config, std::size_t domains);

// Gold tags with token positions permuted inside each sentence, then
// BIO-repaired. Keeps the label distribution and destroys alignment.
TagSeq shuffled_labels(const TagSeq& gold, const TagDict& dict, Rng& rng);

// Crowd dataset whose first source copies gold and whose remaining sources
// are shuffled-label noise.
MultiSourceDataset gold_plus_noise_sources(const TaggedCorpus& corpus, const TagDict& dict,
                                           std::size_t noise_sources, Rng& rng);

// Bag-of-words sentiment-style data over `dimension` features. Every domain
// shares a core of indicative features and adds its own.
struct SyntheticClassConfig {
  std::size_t domains = 3;
  std::size_t train_per_domain = 300;
  std::size_t dev_per_domain = 60;
  std::size_t target_train = 300;
  std::size_t target_test = 300;
  int dimension = 5000;
  std::uint64_t seed = 20261;
};

struct SyntheticClassDomains {
  TagDict labels;
  std::vector<ClassificationData> train;
  std::vector<ClassificationData> dev;
  ClassificationData target_train;
  ClassificationData target_test;
};

SyntheticClassDomains generate_class_domains(const SyntheticClassConfig& config);

}  // namespace mstag

#endif  // MSTAG_SYNTHETIC_HPP_

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

#include "doctest.h"
#include "mstag/crf.hpp"
#include "mstag/parallel.hpp"
#include "support.hpp"

using namespace mstag;
using namespace mstag::testing;

namespace {

std::vector<EncodedSentence> random_corpus(const Vocabularies& v, std::size_t n, Rng& rng) {
  const auto base = toy_sentences();
  std::vector<EncodedSentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s{"r" + std::to_string(i), {}};
    const std::size_t len = 1 + rng.below(9);
    for (std::size_t t = 0; t < len; ++t) {
      const auto& src = base[rng.below(base.size())].tokens;
      s.tokens.push_back(src[rng.below(src.size())]);
    }
    out.push_back(v.encode(s));
  }
  return out;
}

}  // namespace

TEST_CASE("parallel decoding equals the serial reference") {
  ConsensusModel m = tiny_model(3, 4, true, 1);
  Rng rng(2);
  for (auto& a : m.bank.matrices) a.value = Matrix::identity(7) + random_matrix(7, 7, rng, 1.0);
  const auto corpus = random_corpus(m.vocab(), 200, rng);
  for (Decoder d : {Decoder::base(), Decoder::with_source(0), Decoder::with_source(2),
                    Decoder::consensus()}) {
    const auto a = serial::decode_corpus(m, corpus, d);
    const auto b = omp::decode_corpus(m, corpus, d);
    CHECK(a == b);
    CHECK(decode_corpus(m, corpus, d, Exec::kSerial) == a);
    CHECK(decode_corpus(m, corpus, d, Exec::kParallel) == a);
    for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(a[i] == decode_one(m, corpus[i], d));
  }
}

TEST_CASE("parallel log partition equals the serial reference") {
  Rng rng(3);
  std::vector<Matrix> emissions;
  for (int i = 0; i < 300; ++i) emissions.push_back(random_matrix(1 + rng.below(12), 5, rng, 3.0));
  const Matrix trans = random_matrix(5, 5, rng);
  const Vector start = random_vector(5, rng), end = random_vector(5, rng);
  const auto a = serial::log_partition_corpus(emissions, trans, start, end);
  const auto b = omp::log_partition_corpus(emissions, trans, start, end);
  CHECK(a == b);
  for (std::size_t i = 0; i < emissions.size(); ++i) {
    CHECK(a[i] == log_partition(ChainView{emissions[i], trans, start, end}));
  }
}

TEST_CASE("parallel classification equals serial") {
  ConsensusModel m = tiny_classifier(2, 8, 3, 3, 4);
  Rng rng(5);
  std::vector<SparseFeatures> xs(100);
  for (auto& x : xs) {
    for (int j = 0; j < 8; ++j) {
      if (rng.uniform() < 0.4) x.entries.emplace_back(j, static_cast<double>(1 + rng.below(3)));
    }
  }
  std::vector<const SparseFeatures*> p;
  for (const auto& x : xs) p.push_back(&x);
  for (Decoder d : {Decoder::base(), Decoder::with_source(1), Decoder::consensus()}) {
    CHECK(classify_corpus(m, p, d, Exec::kSerial) == classify_corpus(m, p, d, Exec::kParallel));
  }
}

TEST_CASE("for_each_index propagates exceptions") {
  for (Exec e : {Exec::kSerial, Exec::kParallel}) {
    CHECK_THROWS_AS(for_each_index(50, e,
                                   [](std::size_t i) {
                                     if (i == 17) throw std::runtime_error("boom");
                                   }),
                    std::runtime_error);
  }
  std::vector<int> hits(64, 0);
  for_each_index(hits.size(), Exec::kParallel, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  set_num_threads(2);
  CHECK(num_threads() >= 1);
  set_num_threads(0);
}

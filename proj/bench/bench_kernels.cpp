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

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "mstag/parallel.hpp"
#include "mstag/synthetic.hpp"

namespace {

using namespace mstag;

struct Fixture {
  Fixture() {
    SyntheticNerConfig sc;
    sc.train = 400;
    sc.dev = 0;
    sc.test = 0;
    corpus = generate_ner_corpus(sc);
    std::vector<const Sentence*> ptrs;
    for (const auto& s : corpus.train.sentences) ptrs.push_back(&s);
    ModelConfig mc;
    mc.blstm.word_dim = 50;
    mc.blstm.hidden = 50;
    mc.blstm.char_dim = 16;
    mc.blstm.char_hidden = 16;
    model = ConsensusModel(mc, Vocabularies::build(ptrs), corpus.dict,
                           {{"a", "a"}, {"b", "b"}, {"c", "c"}});
    Rng rng(7);
    model.init(rng);
    for (const auto& s : corpus.train.sentences) encoded.push_back(model.vocab().encode(s));
    for (const auto& e : encoded) emissions.push_back(frozen_features(model, e).emit);
  }
  SyntheticNer corpus;
  ConsensusModel model;
  std::vector<EncodedSentence> encoded;
  std::vector<Matrix> emissions;
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_DecodeSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(serial::decode_corpus(f.model, f.encoded, Decoder::consensus()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.encoded.size()));
}

void BM_DecodeOmp(benchmark::State& state) {
  auto& f = fixture();
  set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(omp::decode_corpus(f.model, f.encoded, Decoder::consensus()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.encoded.size()));
}

void BM_LogPartitionSerial(benchmark::State& state) {
  auto& f = fixture();
  const auto& crf = f.model.crf;
  for (auto _ : state) {
    benchmark::DoNotOptimize(serial::log_partition_corpus(f.emissions, crf.trans.value,
                                                          crf.start.value.data(), crf.end.value.data()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.emissions.size()));
}

void BM_LogPartitionOmp(benchmark::State& state) {
  auto& f = fixture();
  set_num_threads(static_cast<int>(state.range(0)));
  const auto& crf = f.model.crf;
  for (auto _ : state) {
    benchmark::DoNotOptimize(omp::log_partition_corpus(f.emissions, crf.trans.value,
                                                       crf.start.value.data(), crf.end.value.data()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.emissions.size()));
}

BENCHMARK(BM_DecodeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogPartitionSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LogPartitionOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

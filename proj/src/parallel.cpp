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

#include "mstag/parallel.hpp"

#include "mstag/crf.hpp"

namespace mstag {

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

TagSeq decode_one(const ConsensusModel& model, const EncodedSentence& s, Decoder d) {
  switch (d.kind) {
    case Decoder::Kind::kBase:
      return predict_base(model, s);
    case Decoder::Kind::kSource:
      return predict_with_source(model, s, d.source);
    case Decoder::Kind::kConsensus:
      break;
  }
  return predict_with_consensus(model, s);
}

namespace serial {

std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d) {
  std::vector<TagSeq> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(decode_one(model, s, d));
  return out;
}

std::vector<double> log_partition_corpus(const std::vector<Matrix>& emissions,
                                         const Matrix& trans, std::span<const double> start,
                                         std::span<const double> end) {
  std::vector<double> out;
  out.reserve(emissions.size());
  for (const auto& u : emissions) out.push_back(log_partition(ChainView{u, trans, start, end}));
  return out;
}

}  // namespace serial

namespace omp {

std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d) {
  std::vector<TagSeq> out(sentences.size());
  for_each_index(sentences.size(), Exec::kParallel,
                 [&](std::size_t i) { out[i] = decode_one(model, sentences[i], d); });
  return out;
}

std::vector<double> log_partition_corpus(const std::vector<Matrix>& emissions,
                                         const Matrix& trans, std::span<const double> start,
                                         std::span<const double> end) {
  std::vector<double> out(emissions.size());
  for_each_index(emissions.size(), Exec::kParallel, [&](std::size_t i) {
    out[i] = log_partition(ChainView{emissions[i], trans, start, end});
  });
  return out;
}

}  // namespace omp

std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d,
                                  Exec exec) {
  return exec == Exec::kSerial ? serial::decode_corpus(model, sentences, d)
                               : omp::decode_corpus(model, sentences, d);
}

std::vector<int> classify_corpus(const ConsensusModel& model,
                                 const std::vector<const SparseFeatures*>& examples, Decoder d,
                                 Exec exec) {
  std::vector<int> out(examples.size());
  for_each_index(examples.size(), exec, [&](std::size_t i) {
    switch (d.kind) {
      case Decoder::Kind::kBase:
        out[i] = classify_base(model, *examples[i]).label;
        break;
      case Decoder::Kind::kSource:
        out[i] = classify_with_source(model, *examples[i], d.source).label;
        break;
      case Decoder::Kind::kConsensus:
        out[i] = classify_with_consensus(model, *examples[i]).label;
        break;
    }
  });
  return out;
}

}  // namespace mstag

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

#ifndef MSTAG_PARALLEL_HPP_
#define MSTAG_PARALLEL_HPP_

#include <exception>
#include <mutex>
#include <vector>

#include "mstag/consensus.hpp"
#include "mstag/data.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mstag {

// Corpus-level kernels come in a serial reference form and an OpenMP form.
// Each item is computed independently, so both produce identical results.
enum class Exec { kSerial, kParallel };

void set_num_threads(int n);  // 0 keeps the OpenMP default
int num_threads();

// Runs fn(i) for i in [0, n). In parallel mode the first exception thrown by
// any iteration is rethrown after the loop.
template <typename F>
void for_each_index(std::size_t n, Exec exec, F&& fn) {
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

struct Decoder {
  enum class Kind { kBase, kSource, kConsensus };
  Kind kind = Kind::kConsensus;
  std::size_t source = 0;

  static Decoder base() { return {Kind::kBase, 0}; }
  static Decoder with_source(std::size_t k) { return {Kind::kSource, k}; }
  static Decoder consensus() { return {Kind::kConsensus, 0}; }
};

TagSeq decode_one(const ConsensusModel& model, const EncodedSentence& s, Decoder d);

namespace serial {
std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d);
std::vector<double> log_partition_corpus(const std::vector<Matrix>& emissions,
                                         const Matrix& trans, std::span<const double> start,
                                         std::span<const double> end);
}  // namespace serial

namespace omp {
std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d);
std::vector<double> log_partition_corpus(const std::vector<Matrix>& emissions,
                                         const Matrix& trans, std::span<const double> start,
                                         std::span<const double> end);
}  // namespace omp

std::vector<TagSeq> decode_corpus(const ConsensusModel& model,
                                  const std::vector<EncodedSentence>& sentences, Decoder d,
                                  Exec exec = Exec::kParallel);

std::vector<int> classify_corpus(const ConsensusModel& model,
                                 const std::vector<const SparseFeatures*>& examples, Decoder d,
                                 Exec exec = Exec::kParallel);

}  // namespace mstag

#endif  // MSTAG_PARALLEL_HPP_

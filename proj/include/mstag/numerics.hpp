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

#ifndef MSTAG_NUMERICS_HPP_
#define MSTAG_NUMERICS_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mstag/matrix.hpp"

namespace mstag {

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; all derived draws (uniform, normal,
// integer ranges, shuffles) are implemented here rather than through the
// implementation-defined <random> distributions so that a seed reproduces
// the same values with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller; one draw per call, no cached second value.
  double normal(double mean, double stddev);
  // Uniform integer in [0, n), n > 0, unbiased.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  // Independent child stream; used to give each worker or fold its own Rng.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct OptimizerState {
  double base_lr = 0.015;
  double decay_per_epoch = 0.05;
  int epoch = 0;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const;
};

double lr_at_epoch(const OptimizerState& state, int epoch);

// A trainable tensor and its gradient accumulator. Embedding tables set
// row_sparse so that clearing and updating touch only the rows that
// received gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool row_sparse = false;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols, bool sparse = false)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), row_sparse(sparse) {
    if (row_sparse) touched_flag_.assign(rows, 0);
  }

  void mark_row(std::size_t r) {
    if (row_sparse && !touched_flag_[r]) {
      touched_flag_[r] = 1;
      touched_.push_back(r);
    }
  }
  const std::vector<std::size_t>& touched_rows() const { return touched_; }
  void zero_grad();
  double grad_squared_norm() const;
  void scale_grad(double s);
  void apply_grad(double lr);

 private:
  std::vector<std::size_t> touched_;
  std::vector<char> touched_flag_;
};

// Dense form of one SGD update: clip the global gradient norm to
// state.clip_norm, then param -= lr_at_epoch(state, state.epoch) * grad.
void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads,
              const OptimizerState& state);

// Same update over Param accumulators; clears the gradients afterwards.
// Returns the pre-clip global gradient norm.
double sgd_step(std::span<Param* const> params, const OptimizerState& state);

Vector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);

// Inverted-dropout mask with entries in {0, 1/(1-p)}; all ones when
// training is false.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng,
                    bool training = true);

// Central differences of a scalar function, one entry at a time.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f,
                        const Matrix& at, double eps = 1e-5);

// Largest entrywise |a - b| / max(|a|, |b|, floor). The floor turns the
// check into an absolute one for entries that are essentially zero.
double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6);

// FNV-1a over the raw bytes; used for parameter checksums.
std::uint64_t checksum(const Matrix& m);

}  // namespace mstag

#endif  // MSTAG_NUMERICS_HPP_

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

#ifndef MSTAG_CRF_HPP_
#define MSTAG_CRF_HPP_

#include <span>
#include <utility>

#include "mstag/data.hpp"
#include "mstag/matrix.hpp"
#include "mstag/numerics.hpp"

namespace mstag {

// Read-only view of the potentials of one linear chain:
//   s(y) = start[y_1] + sum_t emit(t, y_t) + sum_{t>=2} trans(y_{t-1}, y_t) + end[y_n]
struct ChainView {
  const Matrix& emit;   // n x L
  const Matrix& trans;  // L x L
  std::span<const double> start;
  std::span<const double> end;

  std::size_t length() const { return emit.rows(); }
  std::size_t num_tags() const { return emit.cols(); }
};

double score_sequence(const ChainView& chain, std::span<const int> tags);

// log of the sum over all L^n tag sequences, by a forward pass in log space.
double log_partition(const ChainView& chain);

double nll(const ChainView& chain, std::span<const int> tags);

// Highest scoring sequence. Ties go to the lowest tag id.
TagSeq viterbi_decode(const ChainView& chain);

struct ChainGradient {
  double nll = 0.0;
  Matrix emit;   // expected minus observed emission counts
  Matrix trans;  // expected minus observed transition counts
  Vector start;
  Vector end;
};

// Gradient of the NLL with respect to every potential (forward-backward).
ChainGradient chain_gradient(const ChainView& chain, std::span<const int> tags);

// Which of the emission and transition scores a source matrix multiplies.
enum class TransformTarget { kNone, kEmission, kTransition, kBoth };

inline bool transforms_emission(TransformTarget t) {
  return t == TransformTarget::kEmission || t == TransformTarget::kBoth;
}
inline bool transforms_transition(TransformTarget t) {
  return t == TransformTarget::kTransition || t == TransformTarget::kBoth;
}

// (U A, M A). Start and end transitions are not transformed.
std::pair<Matrix, Matrix> transform_scores(const Matrix& emit, const Matrix& trans,
                                           const Matrix& source);

struct CrfGradients {
  double nll = 0.0;
  Matrix emit;
  Matrix trans;
  Vector start;
  Vector end;
  Matrix source;  // empty when no source matrix was given
};

// NLL gradients with respect to the untransformed U, M, start, end and,
// when given, the source matrix A applied according to target.
CrfGradients crf_gradients(const Matrix& emit, const Matrix& trans, std::span<const double> start,
                           std::span<const double> end, std::span<const int> tags,
                           const Matrix* source = nullptr,
                           TransformTarget target = TransformTarget::kBoth);

// Trainable CRF head: emission projection plus transition parameters.
class CrfLayer {
 public:
  CrfLayer() = default;
  CrfLayer(std::size_t input_dim, std::size_t num_tags);

  void init(Rng& rng);

  std::size_t input_dim() const { return emit_w.value.rows(); }
  std::size_t num_tags() const { return emit_w.value.cols(); }

  // U = H W + b row-wise.
  Matrix emissions(const Matrix& hidden) const;
  // Accumulates into emit_w/emit_b and returns dL/dH.
  Matrix emissions_backward(const Matrix& hidden, const Matrix& d_emit);
  void accumulate_chain(const Vector& d_start, const Vector& d_end, const Matrix& d_trans);

  ChainView view(const Matrix& emit) const {
    return ChainView{emit, trans.value, start.value.data(), end.value.data()};
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(emit_w);
    f(emit_b);
    f(trans);
    f(start);
    f(end);
  }

  Param emit_w;
  Param emit_b;
  Param trans;
  Param start;
  Param end;
};

// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
void glorot_uniform(Matrix& m, Rng& rng);

}  // namespace mstag

#endif  // MSTAG_CRF_HPP_

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

#ifndef MSTAG_ENCODERS_HPP_
#define MSTAG_ENCODERS_HPP_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mstag/data.hpp"
#include "mstag/numerics.hpp"

namespace mstag {

// Everything the backward pass of one LSTM direction needs.
struct LstmTrace {
  Matrix input;      // n x in
  Matrix gates;      // n x 4h, activated [i | f | g | o]
  Matrix cell;       // n x h
  Matrix cell_tanh;  // n x h
  Matrix hidden;     // n x h, indexed by token position
  bool reverse = false;
};

class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

  void init(Rng& rng);
  std::size_t input_dim() const { return w.value.rows(); }
  std::size_t hidden_dim() const { return u.value.rows(); }

  // Runs right-to-left when reverse is set; outputs stay aligned to positions.
  LstmTrace forward(const Matrix& input, bool reverse) const;
  // Accumulates parameter gradients, returns dL/dinput.
  Matrix backward(const LstmTrace& trace, const Matrix& d_hidden);

  template <typename F>
  void for_each_param(F&& f) {
    f(w);
    f(u);
    f(b);
  }

  Param w;  // in x 4h
  Param u;  // h x 4h
  Param b;  // 1 x 4h
};

struct BlstmConfig {
  std::size_t word_dim = 100;
  std::size_t char_dim = 30;
  std::size_t char_hidden = 30;
  std::size_t hidden = 150;  // per direction
  bool use_chars = true;
  double dropout = 0.5;
};

struct EncoderTrace {
  EncodedSentence sentence;
  std::vector<LstmTrace> char_fwd;
  std::vector<LstmTrace> char_bwd;
  LstmTrace fwd;
  LstmTrace bwd;
  Matrix input_mask;
  Matrix output_mask;
};

struct EncodingResult {
  Matrix hidden;    // n x 2d, after output dropout
  Vector sentence;  // [fwd final state; bwd final state], 2d
  std::shared_ptr<const EncoderTrace> trace;

  void release_trace() { trace.reset(); }
};

// Word-level BLSTM over [word embedding; char-BLSTM summary] inputs.
class BlstmEncoder {
 public:
  BlstmEncoder() = default;
  BlstmEncoder(const BlstmConfig& config, std::size_t vocab_size, std::size_t char_vocab_size);

  void init(Rng& rng);
  const BlstmConfig& config() const { return config_; }
  std::size_t output_dim() const { return 2 * config_.hidden; }
  std::size_t input_dim() const;

  // Dropout on the LSTM inputs and outputs only in training mode; rng may
  // be null in eval mode. Throws StructuralError on an empty sentence.
  EncodingResult encode(const EncodedSentence& sentence, bool training, Rng* rng) const;

  // d_sentence may be empty. Throws StructuralError if the trace was released.
  void backward(const EncodingResult& result, const Matrix& d_hidden,
                std::span<const double> d_sentence);

  template <typename F>
  void for_each_param(F&& f) {
    f(word_emb);
    if (config_.use_chars) {
      f(char_emb);
      char_fwd.for_each_param(f);
      char_bwd.for_each_param(f);
    }
    fwd.for_each_param(f);
    bwd.for_each_param(f);
  }

  Param word_emb;
  Param char_emb;
  LstmLayer char_fwd;
  LstmLayer char_bwd;
  LstmLayer fwd;
  LstmLayer bwd;

 private:
  BlstmConfig config_;
};

inline const Vector& sentence_embedding(const EncodingResult& result) { return result.sentence; }

// Copies every forward-direction weight onto the backward direction.
void tie_directions(BlstmEncoder& encoder);

struct MlpConfig {
  std::size_t input_dim = 5000;
  std::size_t hidden = 100;
  double dropout = 0.5;
};

struct MlpResult {
  Vector hidden;     // after dropout
  Vector embedding;  // ReLU output before dropout; used for attention
  Vector mask;
};

// One ReLU hidden layer over sparse count features.
class MlpEncoder {
 public:
  MlpEncoder() = default;
  explicit MlpEncoder(const MlpConfig& config);

  void init(Rng& rng);
  const MlpConfig& config() const { return config_; }
  std::size_t output_dim() const { return config_.hidden; }

  MlpResult encode(const SparseFeatures& x, bool training, Rng* rng) const;
  void backward(const SparseFeatures& x, const MlpResult& result, std::span<const double> d_hidden,
                std::span<const double> d_embedding);

  template <typename F>
  void for_each_param(F&& f) {
    f(w);
    f(b);
  }

  Param w;  // input_dim x hidden, row-sparse
  Param b;

 private:
  MlpConfig config_;
};

constexpr double kEmbeddingInitStd = 0.01;

}  // namespace mstag

#endif  // MSTAG_ENCODERS_HPP_

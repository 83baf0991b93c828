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

// Generators and brute-force oracles shared by the test suites.

#ifndef MSTAG_TESTS_SUPPORT_HPP_
#define MSTAG_TESTS_SUPPORT_HPP_

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mstag/consensus.hpp"
#include "mstag/crf.hpp"
#include "mstag/data.hpp"
#include "mstag/numerics.hpp"

namespace mstag::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.uniform(-scale, scale);
  return m;
}

inline Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline TagSeq random_tags(std::size_t n, std::size_t L, Rng& rng) {
  TagSeq t(n);
  for (auto& x : t) x = static_cast<int>(rng.below(L));
  return t;
}

// Every tag sequence of length n over L tags, in lexicographic order.
inline std::vector<TagSeq> all_sequences(std::size_t n, std::size_t L) {
  std::vector<TagSeq> out;
  TagSeq cur(n, 0);
  while (true) {
    out.push_back(cur);
    std::size_t pos = n;
    while (pos > 0) {
      --pos;
      if (static_cast<std::size_t>(++cur[pos]) < L) break;
      cur[pos] = 0;
      if (pos == 0) return out;
    }
    if (n == 0) return out;
  }
}

// Linear-chain score written out independently of the library.
inline double brute_score(const Matrix& U, const Matrix& M, const Vector& start, const Vector& end,
                          const TagSeq& y) {
  double s = start[static_cast<std::size_t>(y.front())] + end[static_cast<std::size_t>(y.back())];
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += U(t, static_cast<std::size_t>(y[t]));
    if (t > 0) s += M(static_cast<std::size_t>(y[t - 1]), static_cast<std::size_t>(y[t]));
  }
  return s;
}

struct BruteForce {
  double log_z = 0.0;
  TagSeq argmax;  // first maximal sequence in lexicographic order
  std::vector<double> probs;
  std::vector<TagSeq> sequences;
};

inline BruteForce brute_force(const Matrix& U, const Matrix& M, const Vector& start,
                              const Vector& end) {
  BruteForce b;
  b.sequences = all_sequences(U.rows(), U.cols());
  std::vector<double> scores;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& y : b.sequences) {
    const double s = brute_score(U, M, start, end, y);
    scores.push_back(s);
    if (s > best) {
      best = s;
      b.argmax = y;
    }
  }
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - best);
  b.log_z = best + std::log(sum);
  for (double s : scores) b.probs.push_back(std::exp(s - b.log_z));
  return b;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<Sentence> toy_sentences() {
  const std::vector<std::vector<std::string>> raw = {
      {"John", "lives", "in", "Paris"}, {"Acme", "Corp", "hired", "Mary"},
      {"the", "cat", "sat"},           {"Berlin", "is", "big"},
      {"Mary", "met", "John"},         {"IBM", "sold", "shares"},
      {"rain", "in", "Rome"},          {"Ann", "joined", "Acme", "Corp"},
      {"a", "quiet", "day"},           {"Oslo", "and", "Rome"}};
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back({"toy:" + std::to_string(i), raw[i]});
  return out;
}

inline TagDict toy_dict() { return TagDict::bio({"B-PER", "B-LOC", "B-ORG"}); }

inline std::vector<TagSeq> toy_gold(const TagDict& d) {
  auto t = [&](std::initializer_list<const char*> tags) {
    TagSeq s;
    for (const char* x : tags) s.push_back(d.id(x));
    return s;
  };
  return {t({"B-PER", "O", "O", "B-LOC"}), t({"B-ORG", "I-ORG", "O", "B-PER"}), t({"O", "O", "O"}),
          t({"B-LOC", "O", "O"}),          t({"B-PER", "O", "B-PER"}),         t({"B-ORG", "O", "O"}),
          t({"O", "O", "B-LOC"}),          t({"B-PER", "O", "B-ORG", "I-ORG"}), t({"O", "O", "O"}),
          t({"B-LOC", "O", "B-LOC"})};
}

inline Vocabularies toy_vocab() {
  static const auto sentences = toy_sentences();
  std::vector<const Sentence*> ptrs;
  for (const auto& s : sentences) ptrs.push_back(&s);
  return Vocabularies::build(ptrs);
}

// Tiny sequence model for gradient checks and contracts.
inline ConsensusModel tiny_model(std::size_t K, std::size_t hidden, bool chars, std::uint64_t seed,
                                 TransformTarget variant = TransformTarget::kBoth,
                                 double dropout = 0.0) {
  ModelConfig c;
  c.blstm.word_dim = 3;
  c.blstm.char_dim = 2;
  c.blstm.char_hidden = 2;
  c.blstm.hidden = hidden;
  c.blstm.use_chars = chars;
  c.blstm.dropout = dropout;
  c.variant = variant;
  std::vector<SourceInfo> sources;
  for (std::size_t k = 0; k < K; ++k) sources.push_back({"s" + std::to_string(k), "s" + std::to_string(k)});
  ConsensusModel m(c, toy_vocab(), toy_dict(), sources);
  Rng rng(seed);
  m.init(rng);
  return m;
}

inline ConsensusModel tiny_classifier(std::size_t K, std::size_t dim, std::size_t hidden,
                                      std::size_t classes, std::uint64_t seed, double dropout = 0.0) {
  ModelConfig c;
  c.mode = TaskMode::kClassification;
  c.mlp.input_dim = dim;
  c.mlp.hidden = hidden;
  c.mlp.dropout = dropout;
  std::vector<SourceInfo> sources;
  for (std::size_t k = 0; k < K; ++k) sources.push_back({"d" + std::to_string(k), "d" + std::to_string(k)});
  std::vector<std::string> labels;
  for (std::size_t l = 0; l < classes; ++l) labels.push_back("c" + std::to_string(l));
  ConsensusModel m(c, Vocabularies{}, TagDict::plain(labels), sources);
  Rng rng(seed);
  m.init(rng);
  return m;
}

// Copies of every accumulated gradient, keyed by parameter name. Take it
// before probing: accumulating losses keep adding into the grads.
inline std::map<std::string, Matrix> grad_snapshot(ConsensusModel& m) {
  std::map<std::string, Matrix> out;
  m.for_each_param([&](Param& p) { out[p.name] = p.grad; });
  return out;
}

// Central-difference check of one parameter's accumulated gradient.
// `loss` recomputes the objective from the current parameter values and
// `grad` returns the analytic gradient for the same objective.
inline double param_grad_error(Param& p, const std::function<double()>& loss,
                               const Matrix& analytic, double eps = 1e-6) {
  Matrix numeric(p.value.rows(), p.value.cols());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double keep = p.value[i];
    p.value[i] = keep + eps;
    const double up = loss();
    p.value[i] = keep - eps;
    const double down = loss();
    p.value[i] = keep;
    numeric[i] = (up - down) / (2.0 * eps);
  }
  return max_relative_error(analytic, numeric, 1e-4);
}

}  // namespace mstag::testing

#endif  // MSTAG_TESTS_SUPPORT_HPP_

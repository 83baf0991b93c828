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

#include "mstag/crf.hpp"

#include <cmath>
#include <limits>

#include "mstag/errors.hpp"

namespace mstag {

namespace {

void check_chain(const ChainView& c) {
  const std::size_t L = c.num_tags();
  if (c.length() == 0) throw StructuralError("CRF: empty sequence");
  if (c.trans.rows() != L || c.trans.cols() != L || c.start.size() != L || c.end.size() != L) {
    throw StructuralError("CRF: potential shapes disagree with tag count");
  }
  if (!c.emit.all_finite() || !c.trans.all_finite()) {
    throw NumericError("CRF: non-finite scores");
  }
  for (std::size_t j = 0; j < L; ++j) {
    if (!std::isfinite(c.start[j]) || !std::isfinite(c.end[j])) {
      throw NumericError("CRF: non-finite start/end transitions");
    }
  }
}

void check_tags(const ChainView& c, std::span<const int> tags) {
  if (tags.size() != c.length()) throw StructuralError("CRF: tag sequence length mismatch");
  for (int y : tags) {
    if (y < 0 || static_cast<std::size_t>(y) >= c.num_tags()) {
      throw StructuralError("CRF: tag id " + std::to_string(y) + " out of range");
    }
  }
}

// alpha(t, j): log-sum of scores of all prefixes ending in tag j at t.
Matrix forward_scores(const ChainView& c) {
  const std::size_t n = c.length(), L = c.num_tags();
  Matrix alpha(n, L);
  for (std::size_t j = 0; j < L; ++j) alpha(0, j) = c.start[j] + c.emit(0, j);
  Vector buf(L);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t i = 0; i < L; ++i) buf[i] = alpha(t - 1, i) + c.trans(i, j);
      alpha(t, j) = log_sum_exp(buf) + c.emit(t, j);
    }
  }
  return alpha;
}

// beta(t, i): log-sum of scores of all suffixes after position t given tag i.
Matrix backward_scores(const ChainView& c) {
  const std::size_t n = c.length(), L = c.num_tags();
  Matrix beta(n, L);
  for (std::size_t i = 0; i < L; ++i) beta(n - 1, i) = c.end[i];
  Vector buf(L);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) buf[j] = c.trans(i, j) + c.emit(t + 1, j) + beta(t + 1, j);
      beta(t, i) = log_sum_exp(buf);
    }
  }
  return beta;
}

double final_log_z(const ChainView& c, const Matrix& alpha) {
  const std::size_t L = c.num_tags();
  Vector buf(L);
  for (std::size_t j = 0; j < L; ++j) buf[j] = alpha(c.length() - 1, j) + c.end[j];
  return log_sum_exp(buf);
}

}  // namespace

double score_sequence(const ChainView& chain, std::span<const int> tags) {
  check_chain(chain);
  check_tags(chain, tags);
  const std::size_t n = chain.length();
  double s = chain.start[static_cast<std::size_t>(tags[0])];
  for (std::size_t t = 0; t < n; ++t) {
    s += chain.emit(t, static_cast<std::size_t>(tags[t]));
    if (t > 0) {
      s += chain.trans(static_cast<std::size_t>(tags[t - 1]), static_cast<std::size_t>(tags[t]));
    }
  }
  return s + chain.end[static_cast<std::size_t>(tags[n - 1])];
}

double log_partition(const ChainView& chain) {
  check_chain(chain);
  return final_log_z(chain, forward_scores(chain));
}

double nll(const ChainView& chain, std::span<const int> tags) {
  const double v = log_partition(chain) - score_sequence(chain, tags);
  // Rounding can push a near-certain sequence a hair below zero.
  return v < 0.0 ? 0.0 : v;
}

TagSeq viterbi_decode(const ChainView& chain) {
  check_chain(chain);
  const std::size_t n = chain.length(), L = chain.num_tags();
  Vector score(L), next(L);
  std::vector<int> back((n - 1) * L);
  for (std::size_t j = 0; j < L; ++j) score[j] = chain.start[j] + chain.emit(0, j);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t i = 0; i < L; ++i) {
        const double s = score[i] + chain.trans(i, j);
        if (s > best) {
          best = s;
          arg = static_cast<int>(i);
        }
      }
      next[j] = best + chain.emit(t, j);
      back[(t - 1) * L + j] = arg;
    }
    std::swap(score, next);
  }
  double best = -std::numeric_limits<double>::infinity();
  int last = 0;
  for (std::size_t j = 0; j < L; ++j) {
    const double s = score[j] + chain.end[j];
    if (s > best) {
      best = s;
      last = static_cast<int>(j);
    }
  }
  TagSeq path(n);
  path[n - 1] = last;
  for (std::size_t t = n - 1; t > 0; --t) {
    path[t - 1] = back[(t - 1) * L + static_cast<std::size_t>(path[t])];
  }
  return path;
}

ChainGradient chain_gradient(const ChainView& chain, std::span<const int> tags) {
  check_chain(chain);
  check_tags(chain, tags);
  const std::size_t n = chain.length(), L = chain.num_tags();
  const Matrix alpha = forward_scores(chain);
  const Matrix beta = backward_scores(chain);
  const double log_z = final_log_z(chain, alpha);

  ChainGradient g;
  g.emit = Matrix(n, L);
  g.trans = Matrix(L, L);
  g.start.assign(L, 0.0);
  g.end.assign(L, 0.0);

  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < L; ++j) g.emit(t, j) = std::exp(alpha(t, j) + beta(t, j) - log_z);
  }
  for (std::size_t j = 0; j < L; ++j) {
    g.start[j] = g.emit(0, j);
    g.end[j] = g.emit(n - 1, j);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        g.trans(i, j) += std::exp(alpha(t - 1, i) + chain.trans(i, j) + chain.emit(t, j) +
                                  beta(t, j) - log_z);
      }
    }
  }

  const auto y = [&](std::size_t t) { return static_cast<std::size_t>(tags[t]); };
  double gold = chain.start[y(0)] + chain.end[y(n - 1)];
  g.start[y(0)] -= 1.0;
  g.end[y(n - 1)] -= 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    g.emit(t, y(t)) -= 1.0;
    gold += chain.emit(t, y(t));
    if (t > 0) {
      g.trans(y(t - 1), y(t)) -= 1.0;
      gold += chain.trans(y(t - 1), y(t));
    }
  }
  g.nll = std::max(0.0, log_z - gold);
  return g;
}

std::pair<Matrix, Matrix> transform_scores(const Matrix& emit, const Matrix& trans,
                                           const Matrix& source) {
  const std::size_t L = trans.rows();
  if (source.rows() != L || source.cols() != L || emit.cols() != L || trans.cols() != L) {
    throw StructuralError("transform_scores: source matrix must be L x L");
  }
  return {matmul(emit, source), matmul(trans, source)};
}

CrfGradients crf_gradients(const Matrix& emit, const Matrix& trans, std::span<const double> start,
                           std::span<const double> end, std::span<const int> tags,
                           const Matrix* source, TransformTarget target) {
  CrfGradients out;
  if (source == nullptr || target == TransformTarget::kNone) {
    ChainGradient g = chain_gradient(ChainView{emit, trans, start, end}, tags);
    out.nll = g.nll;
    out.emit = std::move(g.emit);
    out.trans = std::move(g.trans);
    out.start = std::move(g.start);
    out.end = std::move(g.end);
    if (source != nullptr) out.source = Matrix(source->rows(), source->cols());
    return out;
  }
  const std::size_t L = trans.rows();
  if (source->rows() != L || source->cols() != L) {
    throw StructuralError("crf_gradients: source matrix must be L x L");
  }
  const bool te = transforms_emission(target);
  const bool tt = transforms_transition(target);
  const Matrix emit_t = te ? matmul(emit, *source) : Matrix();
  const Matrix trans_t = tt ? matmul(trans, *source) : Matrix();
  ChainGradient g = chain_gradient(
      ChainView{te ? emit_t : emit, tt ? trans_t : trans, start, end}, tags);
  out.nll = g.nll;
  out.start = std::move(g.start);
  out.end = std::move(g.end);
  out.source = Matrix(L, L);
  // X' = X A  =>  dX = dX' A^T,  dA += X^T dX'
  if (te) {
    out.emit = Matrix(emit.rows(), L);
    matmul_nt_add(g.emit, *source, out.emit);
    matmul_tn_add(emit, g.emit, out.source);
  } else {
    out.emit = std::move(g.emit);
  }
  if (tt) {
    out.trans = Matrix(L, L);
    matmul_nt_add(g.trans, *source, out.trans);
    matmul_tn_add(trans, g.trans, out.source);
  } else {
    out.trans = std::move(g.trans);
  }
  return out;
}

void glorot_uniform(Matrix& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
}

CrfLayer::CrfLayer(std::size_t input_dim, std::size_t num_tags)
    : emit_w("crf.emit_w", input_dim, num_tags),
      emit_b("crf.emit_b", 1, num_tags),
      trans("crf.trans", num_tags, num_tags),
      start("crf.start", 1, num_tags),
      end("crf.end", 1, num_tags) {}

void CrfLayer::init(Rng& rng) {
  glorot_uniform(emit_w.value, rng);
  glorot_uniform(trans.value, rng);
  emit_b.value.set_zero();
  start.value.set_zero();
  end.value.set_zero();
}

Matrix CrfLayer::emissions(const Matrix& hidden) const {
  if (hidden.cols() != input_dim()) {
    throw StructuralError("emissions: hidden width " + std::to_string(hidden.cols()) +
                          " != " + std::to_string(input_dim()));
  }
  Matrix u(hidden.rows(), num_tags());
  for (std::size_t t = 0; t < u.rows(); ++t) {
    auto row = u.row(t);
    std::copy(emit_b.value.data().begin(), emit_b.value.data().end(), row.begin());
  }
  matmul_add(hidden, emit_w.value, u);
  return u;
}

Matrix CrfLayer::emissions_backward(const Matrix& hidden, const Matrix& d_emit) {
  matmul_tn_add(hidden, d_emit, emit_w.grad);
  for (std::size_t t = 0; t < d_emit.rows(); ++t) {
    for (std::size_t j = 0; j < d_emit.cols(); ++j) emit_b.grad[j] += d_emit(t, j);
  }
  Matrix d_hidden(hidden.rows(), hidden.cols());
  matmul_nt_add(d_emit, emit_w.value, d_hidden);
  return d_hidden;
}

void CrfLayer::accumulate_chain(const Vector& d_start, const Vector& d_end, const Matrix& d_trans) {
  for (std::size_t j = 0; j < num_tags(); ++j) {
    start.grad[j] += d_start[j];
    end.grad[j] += d_end[j];
  }
  trans.grad += d_trans;
}

}  // namespace mstag

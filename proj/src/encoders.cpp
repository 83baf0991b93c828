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

#include "mstag/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "mstag/crf.hpp"
#include "mstag/errors.hpp"

namespace mstag {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void init_embeddings(Matrix& m, Rng& rng) {
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, kEmbeddingInitStd);
}

}  // namespace

// ---------------------------------------------------------------------------
// LstmLayer

LstmLayer::LstmLayer(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : w(prefix + ".w", input_dim, 4 * hidden_dim),
      u(prefix + ".u", hidden_dim, 4 * hidden_dim),
      b(prefix + ".b", 1, 4 * hidden_dim) {}

void LstmLayer::init(Rng& rng) {
  glorot_uniform(w.value, rng);
  glorot_uniform(u.value, rng);
  b.value.set_zero();
}

LstmTrace LstmLayer::forward(const Matrix& input, bool reverse) const {
  const std::size_t n = input.rows(), h = hidden_dim();
  if (input.cols() != input_dim()) throw StructuralError("LSTM: input width mismatch");
  LstmTrace tr;
  tr.input = input;
  tr.reverse = reverse;
  tr.gates = Matrix(n, 4 * h);
  tr.cell = Matrix(n, h);
  tr.cell_tanh = Matrix(n, h);
  tr.hidden = Matrix(n, h);
  Vector pre(4 * h);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    std::copy(b.value.data().begin(), b.value.data().end(), pre.begin());
    vecmat_add(input.row(t), w.value, pre);
    const bool first = s == 0;
    const std::size_t prev = reverse ? t + 1 : t - 1;
    if (!first) vecmat_add(tr.hidden.row(prev), u.value, pre);
    auto gate = tr.gates.row(t);
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid(pre[j]);
      const double fg = sigmoid(pre[h + j]);
      const double gg = std::tanh(pre[2 * h + j]);
      const double og = sigmoid(pre[3 * h + j]);
      gate[j] = ig;
      gate[h + j] = fg;
      gate[2 * h + j] = gg;
      gate[3 * h + j] = og;
      const double c_prev = first ? 0.0 : tr.cell(prev, j);
      const double c = fg * c_prev + ig * gg;
      tr.cell(t, j) = c;
      tr.cell_tanh(t, j) = std::tanh(c);
      tr.hidden(t, j) = og * tr.cell_tanh(t, j);
    }
  }
  return tr;
}

Matrix LstmLayer::backward(const LstmTrace& tr, const Matrix& d_hidden) {
  const std::size_t n = tr.input.rows(), h = hidden_dim();
  if (d_hidden.rows() != n || d_hidden.cols() != h) {
    throw StructuralError("LSTM backward: gradient shape mismatch");
  }
  Matrix d_input(n, input_dim());
  Vector dh_rec(h, 0.0), dc_rec(h, 0.0), da(4 * h), dh_prev(h);
  for (std::size_t s = n; s-- > 0;) {
    const std::size_t t = tr.reverse ? n - 1 - s : s;
    const bool first = s == 0;
    const std::size_t prev = tr.reverse ? t + 1 : t - 1;
    auto gate = tr.gates.row(t);
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = gate[j], fg = gate[h + j], gg = gate[2 * h + j], og = gate[3 * h + j];
      const double tc = tr.cell_tanh(t, j);
      const double dh = d_hidden(t, j) + dh_rec[j];
      const double d_o = dh * tc;
      const double dc = dh * og * (1.0 - tc * tc) + dc_rec[j];
      const double c_prev = first ? 0.0 : tr.cell(prev, j);
      da[j] = dc * gg * ig * (1.0 - ig);
      da[h + j] = dc * c_prev * fg * (1.0 - fg);
      da[2 * h + j] = dc * ig * (1.0 - gg * gg);
      da[3 * h + j] = d_o * og * (1.0 - og);
      dc_rec[j] = dc * fg;
    }
    // Parameter gradients.
    auto x = tr.input.row(t);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] == 0.0) continue;
      auto g = w.grad.row(k);
      for (std::size_t j = 0; j < 4 * h; ++j) g[j] += x[k] * da[j];
    }
    for (std::size_t j = 0; j < 4 * h; ++j) b.grad[j] += da[j];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    if (!first) {
      auto hp = tr.hidden.row(prev);
      for (std::size_t k = 0; k < h; ++k) {
        auto g = u.grad.row(k);
        for (std::size_t j = 0; j < 4 * h; ++j) g[j] += hp[k] * da[j];
      }
      for (std::size_t k = 0; k < h; ++k) {
        auto ur = u.value.row(k);
        double s2 = 0.0;
        for (std::size_t j = 0; j < 4 * h; ++j) s2 += ur[j] * da[j];
        dh_prev[k] = s2;
      }
    }
    auto dx = d_input.row(t);
    for (std::size_t k = 0; k < dx.size(); ++k) {
      auto wr = w.value.row(k);
      double s2 = 0.0;
      for (std::size_t j = 0; j < 4 * h; ++j) s2 += wr[j] * da[j];
      dx[k] = s2;
    }
    dh_rec = dh_prev;
  }
  return d_input;
}

// ---------------------------------------------------------------------------
// BlstmEncoder

BlstmEncoder::BlstmEncoder(const BlstmConfig& config, std::size_t vocab_size,
                           std::size_t char_vocab_size)
    : word_emb("enc.word_emb", vocab_size, config.word_dim, true), config_(config) {
  if (config.hidden == 0 || config.word_dim == 0) throw ConfigError("encoder dims must be positive");
  if (config_.use_chars) {
    char_emb = Param("enc.char_emb", char_vocab_size, config.char_dim, true);
    char_fwd = LstmLayer("enc.char_fwd", config.char_dim, config.char_hidden);
    char_bwd = LstmLayer("enc.char_bwd", config.char_dim, config.char_hidden);
  }
  fwd = LstmLayer("enc.fwd", input_dim(), config.hidden);
  bwd = LstmLayer("enc.bwd", input_dim(), config.hidden);
}

std::size_t BlstmEncoder::input_dim() const {
  return config_.word_dim + (config_.use_chars ? 2 * config_.char_hidden : 0);
}

void BlstmEncoder::init(Rng& rng) {
  init_embeddings(word_emb.value, rng);
  if (config_.use_chars) {
    init_embeddings(char_emb.value, rng);
    char_fwd.init(rng);
    char_bwd.init(rng);
  }
  fwd.init(rng);
  bwd.init(rng);
}

EncodingResult BlstmEncoder::encode(const EncodedSentence& sentence, bool training, Rng* rng) const {
  const std::size_t n = sentence.size();
  if (n == 0) throw StructuralError("encode: empty sentence");
  if (training && config_.dropout > 0.0 && rng == nullptr) {
    throw StructuralError("encode: training mode needs an Rng");
  }
  auto trace = std::make_shared<EncoderTrace>();
  trace->sentence = sentence;
  const std::size_t in = input_dim(), wd = config_.word_dim, ch = config_.char_hidden;
  Matrix x(n, in);
  for (std::size_t t = 0; t < n; ++t) {
    const int w = sentence.words[t];
    if (w < 0 || static_cast<std::size_t>(w) >= word_emb.value.rows()) {
      throw StructuralError("encode: word id out of range");
    }
    auto src = word_emb.value.row(static_cast<std::size_t>(w));
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }
  if (config_.use_chars) {
    trace->char_fwd.resize(n);
    trace->char_bwd.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& cs = sentence.chars[t];
      if (cs.empty()) continue;
      Matrix cx(cs.size(), config_.char_dim);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        if (cs[i] < 0 || static_cast<std::size_t>(cs[i]) >= char_emb.value.rows()) {
          throw StructuralError("encode: char id out of range");
        }
        auto src = char_emb.value.row(static_cast<std::size_t>(cs[i]));
        std::copy(src.begin(), src.end(), cx.row(i).begin());
      }
      trace->char_fwd[t] = char_fwd.forward(cx, false);
      trace->char_bwd[t] = char_bwd.forward(cx, true);
      for (std::size_t j = 0; j < ch; ++j) {
        x(t, wd + j) = trace->char_fwd[t].hidden(cs.size() - 1, j);
        x(t, wd + ch + j) = trace->char_bwd[t].hidden(0, j);
      }
    }
  }
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;
  trace->input_mask = dropout_mask(n, in, config_.dropout, r, training);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= trace->input_mask[i];

  trace->fwd = fwd.forward(x, false);
  trace->bwd = bwd.forward(x, true);
  const std::size_t d = config_.hidden;
  trace->output_mask = dropout_mask(n, 2 * d, config_.dropout, r, training);

  EncodingResult res;
  res.hidden = Matrix(n, 2 * d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      res.hidden(t, j) = trace->fwd.hidden(t, j) * trace->output_mask(t, j);
      res.hidden(t, d + j) = trace->bwd.hidden(t, j) * trace->output_mask(t, d + j);
    }
  }
  res.sentence.resize(2 * d);
  for (std::size_t j = 0; j < d; ++j) {
    res.sentence[j] = trace->fwd.hidden(n - 1, j);
    res.sentence[d + j] = trace->bwd.hidden(0, j);
  }
  res.trace = std::move(trace);
  return res;
}

void BlstmEncoder::backward(const EncodingResult& result, const Matrix& d_hidden,
                            std::span<const double> d_sentence) {
  if (!result.trace) throw StructuralError("encoder backward: forward trace missing");
  const EncoderTrace& tr = *result.trace;
  const std::size_t n = tr.sentence.size(), d = config_.hidden;
  if (d_hidden.rows() != n || d_hidden.cols() != 2 * d) {
    throw StructuralError("encoder backward: gradient shape mismatch");
  }
  if (!d_sentence.empty() && d_sentence.size() != 2 * d) {
    throw StructuralError("encoder backward: sentence gradient length mismatch");
  }
  Matrix df(n, d), db(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      df(t, j) = d_hidden(t, j) * tr.output_mask(t, j);
      db(t, j) = d_hidden(t, d + j) * tr.output_mask(t, d + j);
    }
  }
  if (!d_sentence.empty()) {
    for (std::size_t j = 0; j < d; ++j) {
      df(n - 1, j) += d_sentence[j];
      db(0, j) += d_sentence[d + j];
    }
  }
  Matrix dx = fwd.backward(tr.fwd, df);
  dx += bwd.backward(tr.bwd, db);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= tr.input_mask[i];

  const std::size_t wd = config_.word_dim, ch = config_.char_hidden;
  for (std::size_t t = 0; t < n; ++t) {
    const auto w = static_cast<std::size_t>(tr.sentence.words[t]);
    word_emb.mark_row(w);
    auto g = word_emb.grad.row(w);
    for (std::size_t j = 0; j < wd; ++j) g[j] += dx(t, j);
  }
  if (!config_.use_chars) return;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& cs = tr.sentence.chars[t];
    if (cs.empty()) continue;
    const std::size_t m = cs.size();
    Matrix dcf(m, ch), dcb(m, ch);
    for (std::size_t j = 0; j < ch; ++j) {
      dcf(m - 1, j) = dx(t, wd + j);
      dcb(0, j) = dx(t, wd + ch + j);
    }
    Matrix dcx = char_fwd.backward(tr.char_fwd[t], dcf);
    dcx += char_bwd.backward(tr.char_bwd[t], dcb);
    for (std::size_t i = 0; i < m; ++i) {
      const auto c = static_cast<std::size_t>(cs[i]);
      char_emb.mark_row(c);
      auto g = char_emb.grad.row(c);
      for (std::size_t j = 0; j < config_.char_dim; ++j) g[j] += dcx(i, j);
    }
  }
}

void tie_directions(BlstmEncoder& e) {
  e.bwd.w.value = e.fwd.w.value;
  e.bwd.u.value = e.fwd.u.value;
  e.bwd.b.value = e.fwd.b.value;
  if (e.config().use_chars) {
    e.char_bwd.w.value = e.char_fwd.w.value;
    e.char_bwd.u.value = e.char_fwd.u.value;
    e.char_bwd.b.value = e.char_fwd.b.value;
  }
}

// ---------------------------------------------------------------------------
// MlpEncoder

MlpEncoder::MlpEncoder(const MlpConfig& config)
    : w("mlp.w", config.input_dim, config.hidden, true), b("mlp.b", 1, config.hidden),
      config_(config) {
  if (config.hidden == 0 || config.input_dim == 0) throw ConfigError("MLP dims must be positive");
}

void MlpEncoder::init(Rng& rng) {
  glorot_uniform(w.value, rng);
  b.value.set_zero();
}

MlpResult MlpEncoder::encode(const SparseFeatures& x, bool training, Rng* rng) const {
  const std::size_t h = config_.hidden;
  Vector pre(b.value.data().begin(), b.value.data().end());
  for (const auto& [idx, count] : x.entries) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= config_.input_dim) {
      throw DataError("MLP: feature index " + std::to_string(idx) + " out of range");
    }
    auto row = w.value.row(static_cast<std::size_t>(idx));
    for (std::size_t j = 0; j < h; ++j) pre[j] += count * row[j];
  }
  MlpResult r;
  r.embedding.resize(h);
  for (std::size_t j = 0; j < h; ++j) r.embedding[j] = pre[j] > 0.0 ? pre[j] : 0.0;
  if (training && config_.dropout > 0.0 && rng == nullptr) {
    throw StructuralError("MLP encode: training mode needs an Rng");
  }
  Rng dummy(0);
  Matrix mask = dropout_mask(1, h, config_.dropout, rng ? *rng : dummy, training);
  r.mask.assign(mask.data().begin(), mask.data().end());
  r.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) r.hidden[j] = r.embedding[j] * r.mask[j];
  return r;
}

void MlpEncoder::backward(const SparseFeatures& x, const MlpResult& r,
                          std::span<const double> d_hidden, std::span<const double> d_embedding) {
  const std::size_t h = config_.hidden;
  Vector d_pre(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double g = d_hidden.empty() ? 0.0 : d_hidden[j] * r.mask[j];
    if (!d_embedding.empty()) g += d_embedding[j];
    d_pre[j] = r.embedding[j] > 0.0 ? g : 0.0;
  }
  for (std::size_t j = 0; j < h; ++j) b.grad[j] += d_pre[j];
  for (const auto& [idx, count] : x.entries) {
    const auto row = static_cast<std::size_t>(idx);
    w.mark_row(row);
    auto g = w.grad.row(row);
    for (std::size_t j = 0; j < h; ++j) g[j] += count * d_pre[j];
  }
}

}  // namespace mstag

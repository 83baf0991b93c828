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

#include "mstag/consensus.hpp"

#include <cmath>

#include "mstag/errors.hpp"

namespace mstag {

namespace {

void require_sequence(const ConsensusModel& m) {
  if (m.mode() != TaskMode::kSequence) throw StructuralError("operation requires sequence mode");
}

void require_classification(const ConsensusModel& m) {
  if (m.mode() != TaskMode::kClassification) {
    throw StructuralError("operation requires classification mode");
  }
}

void require_source(const ConsensusModel& m, std::size_t k) {
  if (k >= m.num_sources()) {
    throw StructuralError("unknown source index " + std::to_string(k) + " (have " +
                          std::to_string(m.num_sources()) + ")");
  }
}

// Gradient of the softmax attention: dQ += (q .* (dq - <q, dq>)) h^T.
void attention_backward(SourceBank& bank, std::span<const double> embedding, const Vector& q,
                        const Vector& dq) {
  double mean = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) mean += q[k] * dq[k];
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double dl = q[k] * (dq[k] - mean);
    auto row = bank.attention.grad.row(k);
    for (std::size_t j = 0; j < embedding.size(); ++j) row[j] += dl * embedding[j];
  }
}

std::vector<Param*> shared_and_source(ConsensusModel& model, std::size_t k) {
  std::vector<Param*> params;
  model.for_each_shared_param([&](Param& p) { params.push_back(&p); });
  if (model.uses_sources()) params.push_back(&model.bank.matrices[k]);
  return params;
}

ClassPrediction class_scores(const ConsensusModel& model, const Vector& h) {
  ClassPrediction p;
  p.scores.assign(model.cls_b.value.data().begin(), model.cls_b.value.data().end());
  vecmat_add(h, model.cls_w.value, p.scores);
  p.label = 0;
  for (std::size_t c = 1; c < p.scores.size(); ++c) {
    if (p.scores[c] > p.scores[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(c);
  }
  return p;
}

Vector row_times(const Vector& h, const Matrix& a) {
  Vector out(a.cols(), 0.0);
  vecmat_add(h, a, out);
  return out;
}

// Cross-entropy and its gradient wrt the scores.
double cross_entropy(const Vector& scores, int label, Vector& d_scores) {
  d_scores = softmax(scores);
  const double loss = log_sum_exp(scores) - scores[static_cast<std::size_t>(label)];
  d_scores[static_cast<std::size_t>(label)] -= 1.0;
  return loss;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConsensusModel

ConsensusModel::ConsensusModel(const ModelConfig& config, Vocabularies vocab, TagDict labels,
                               std::vector<SourceInfo> sources)
    : config_(config),
      vocab_(std::move(vocab)),
      labels_(std::move(labels)),
      sources_(std::move(sources)) {
  if (sources_.empty()) throw ConfigError("model needs at least one source");
  if (labels_.size() == 0) throw ConfigError("model needs a non-empty label set");
  const std::size_t L = labels_.size();
  std::size_t square = 0;
  if (config_.mode == TaskMode::kSequence) {
    blstm = BlstmEncoder(config_.blstm, vocab_.words.size(), vocab_.chars.size());
    crf = CrfLayer(blstm.output_dim(), L);
    square = L;
  } else {
    mlp = MlpEncoder(config_.mlp);
    cls_w = Param("cls.w", mlp.output_dim(), L);
    cls_b = Param("cls.b", 1, L);
    square = mlp.output_dim();
  }
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    bank.matrices.emplace_back("bank.A." + std::to_string(k), square, square);
  }
  bank.attention = Param("bank.Q", sources_.size(), embedding_dim());
  bank.no_source_matrices = config_.no_source_matrices;
}

std::size_t ConsensusModel::embedding_dim() const {
  return config_.mode == TaskMode::kSequence ? blstm.output_dim() : mlp.output_dim();
}

bool ConsensusModel::uses_sources() const {
  return !bank.no_source_matrices && config_.variant != TransformTarget::kNone;
}

void ConsensusModel::set_no_source_matrices(bool on) {
  config_.no_source_matrices = on;
  bank.no_source_matrices = on;
}

void ConsensusModel::init(Rng& rng) {
  if (config_.mode == TaskMode::kSequence) {
    blstm.init(rng);
    crf.init(rng);
  } else {
    mlp.init(rng);
    glorot_uniform(cls_w.value, rng);
    cls_b.value.set_zero();
  }
  for (Param& a : bank.matrices) {
    a.value = Matrix::identity(a.value.rows());
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      a.value[i] += rng.normal(0.0, config_.source_init_std);
    }
  }
  glorot_uniform(bank.attention.value, rng);
}

// ---------------------------------------------------------------------------
// Attention

Vector attention_weights(const SourceBank& bank, std::span<const double> embedding) {
  const Matrix& q = bank.attention.value;
  if (embedding.size() != q.cols()) {
    throw StructuralError("attention_weights: embedding length " + std::to_string(embedding.size()) +
                          " != " + std::to_string(q.cols()));
  }
  Vector logits(q.rows(), 0.0);
  for (std::size_t k = 0; k < q.rows(); ++k) {
    auto row = q.row(k);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * embedding[j];
    logits[k] = s;
  }
  return softmax(logits);
}

Matrix compose_consensus(const SourceBank& bank, std::span<const double> q) {
  if (q.size() != bank.size() || bank.size() == 0) {
    throw StructuralError("compose_consensus: weight count != source count");
  }
  const Matrix& first = bank.matrices[0].value;
  Matrix out(first.rows(), first.cols());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const Matrix& a = bank.matrices[k].value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += q[k] * a[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence labeling

std::pair<Matrix, Matrix> transformed_potentials(const ConsensusModel& model, const Matrix& emit,
                                                 const Matrix* source) {
  const Matrix& trans = model.crf.trans.value;
  if (source == nullptr || !model.uses_sources()) return {emit, trans};
  const TransformTarget v = model.config().variant;
  auto [u2, m2] = transform_scores(emit, trans, *source);
  return {transforms_emission(v) ? std::move(u2) : emit,
          transforms_transition(v) ? std::move(m2) : trans};
}

double accumulate_decoupling_gradient(ConsensusModel& model, const EncodedSentence& sentence,
                                      const TagSeq& tags, std::size_t source, bool training,
                                      Rng* rng) {
  require_sequence(model);
  require_source(model, source);
  if (tags.size() != sentence.size()) throw StructuralError("decoupling: tag length mismatch");
  EncodingResult enc = model.blstm.encode(sentence, training, rng);
  const Matrix emit = model.crf.emissions(enc.hidden);
  const Matrix* a = model.uses_sources() ? &model.bank.matrices[source].value : nullptr;
  CrfGradients g = crf_gradients(emit, model.crf.trans.value, model.crf.start.value.data(),
                                 model.crf.end.value.data(), tags, a, model.config().variant);
  model.crf.accumulate_chain(g.start, g.end, g.trans);
  const Matrix d_hidden = model.crf.emissions_backward(enc.hidden, g.emit);
  model.blstm.backward(enc, d_hidden, {});
  if (a != nullptr) model.bank.matrices[source].grad += g.source;
  return g.nll;
}

double decoupling_train_step(ConsensusModel& model, std::span<const SequenceExample> batch,
                             std::size_t source, const OptimizerState& state, Rng& rng) {
  require_sequence(model);
  require_source(model, source);
  const auto params = shared_and_source(model, source);
  for (Param* p : params) p->zero_grad();
  double loss = 0.0;
  for (const SequenceExample& ex : batch) {
    loss += accumulate_decoupling_gradient(model, *ex.sentence, *ex.tags, source, true, &rng);
  }
  sgd_step(params, state);
  return loss;
}

FrozenFeatures frozen_features(const ConsensusModel& model, const EncodedSentence& sentence) {
  require_sequence(model);
  EncodingResult enc = model.blstm.encode(sentence, false, nullptr);
  FrozenFeatures f;
  f.emit = model.crf.emissions(enc.hidden);
  f.embedding = std::move(enc.sentence);
  return f;
}

double accumulate_aggregation_gradient(ConsensusModel& model, const FrozenFeatures& features,
                                       const TagSeq& pseudo) {
  require_sequence(model);
  if (pseudo.size() != features.emit.rows()) {
    throw StructuralError("aggregation: pseudo-label length mismatch");
  }
  const auto& crf = model.crf;
  if (!model.uses_sources()) {
    return nll(crf.view(features.emit), pseudo);
  }
  const Vector q = attention_weights(model.bank, features.embedding);
  const Matrix consensus = compose_consensus(model.bank, q);
  CrfGradients g = crf_gradients(features.emit, crf.trans.value, crf.start.value.data(),
                                 crf.end.value.data(), pseudo, &consensus, model.config().variant);
  Vector dq(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    dq[k] = frobenius_dot(g.source, model.bank.matrices[k].value);
  }
  attention_backward(model.bank, features.embedding, q, dq);
  return g.nll;
}

double aggregation_train_step(ConsensusModel& model, const FrozenFeatures& features,
                              const TagSeq& pseudo, const OptimizerState& state) {
  Param* q = &model.bank.attention;
  q->zero_grad();
  const double loss = accumulate_aggregation_gradient(model, features, pseudo);
  sgd_step(std::span<Param* const>(&q, 1), state);
  return loss;
}

double aggregation_train_step(ConsensusModel& model, const EncodedSentence& sentence,
                              const TagSeq& pseudo, const OptimizerState& state) {
  if (pseudo.size() != sentence.size()) {
    throw StructuralError("aggregation: pseudo-label length mismatch");
  }
  return aggregation_train_step(model, frozen_features(model, sentence), pseudo, state);
}

TagSeq decode_base(const ConsensusModel& model, const FrozenFeatures& features) {
  require_sequence(model);
  return viterbi_decode(model.crf.view(features.emit));
}

TagSeq decode_with_source(const ConsensusModel& model, const FrozenFeatures& features,
                          std::size_t source) {
  require_sequence(model);
  require_source(model, source);
  auto [u, m] = transformed_potentials(model, features.emit, &model.bank.matrices[source].value);
  const auto& crf = model.crf;
  return viterbi_decode(ChainView{u, m, crf.start.value.data(), crf.end.value.data()});
}

TagSeq decode_with_consensus(const ConsensusModel& model, const FrozenFeatures& features) {
  require_sequence(model);
  if (!model.uses_sources()) return viterbi_decode(model.crf.view(features.emit));
  const Vector q = attention_weights(model.bank, features.embedding);
  const Matrix consensus = compose_consensus(model.bank, q);
  auto [u, m] = transformed_potentials(model, features.emit, &consensus);
  const auto& crf = model.crf;
  return viterbi_decode(ChainView{u, m, crf.start.value.data(), crf.end.value.data()});
}

TagSeq predict_base(const ConsensusModel& model, const EncodedSentence& sentence) {
  return decode_base(model, frozen_features(model, sentence));
}

TagSeq predict_with_source(const ConsensusModel& model, const EncodedSentence& sentence,
                           std::size_t source) {
  require_source(model, source);
  return decode_with_source(model, frozen_features(model, sentence), source);
}

TagSeq predict_with_consensus(const ConsensusModel& model, const EncodedSentence& sentence) {
  return decode_with_consensus(model, frozen_features(model, sentence));
}

// ---------------------------------------------------------------------------
// Classification

ClassPrediction classify_base(const ConsensusModel& model, const SparseFeatures& x) {
  require_classification(model);
  return class_scores(model, model.mlp.encode(x, false, nullptr).hidden);
}

ClassPrediction classify_with_source(const ConsensusModel& model, const SparseFeatures& x,
                                     std::size_t source) {
  require_classification(model);
  require_source(model, source);
  const Vector h = model.mlp.encode(x, false, nullptr).hidden;
  if (!model.uses_sources()) return class_scores(model, h);
  return class_scores(model, row_times(h, model.bank.matrices[source].value));
}

ClassPrediction classify_with_consensus(const ConsensusModel& model, const SparseFeatures& x) {
  require_classification(model);
  const Vector h = model.mlp.encode(x, false, nullptr).hidden;
  if (!model.uses_sources()) return class_scores(model, h);
  const Vector q = attention_weights(model.bank, h);
  return class_scores(model, row_times(h, compose_consensus(model.bank, q)));
}

double accumulate_class_decoupling_gradient(ConsensusModel& model, const SparseFeatures& x,
                                            int label, std::size_t source, bool training,
                                            Rng* rng) {
  require_classification(model);
  require_source(model, source);
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_labels()) {
    throw StructuralError("class label out of range");
  }
  const MlpResult r = model.mlp.encode(x, training, rng);
  const Matrix* a = model.uses_sources() ? &model.bank.matrices[source].value : nullptr;
  const Vector h2 = a ? row_times(r.hidden, *a) : r.hidden;
  const ClassPrediction p = class_scores(model, h2);
  Vector d_scores;
  const double loss = cross_entropy(p.scores, label, d_scores);

  const Matrix h2m = Matrix::row_vector(h2);
  const Matrix dsm = Matrix::row_vector(d_scores);
  matmul_tn_add(h2m, dsm, model.cls_w.grad);
  for (std::size_t c = 0; c < d_scores.size(); ++c) model.cls_b.grad[c] += d_scores[c];
  Matrix dh2(1, h2.size());
  matmul_nt_add(dsm, model.cls_w.value, dh2);
  Vector dh(dh2.data().begin(), dh2.data().end());
  if (a) {
    matmul_tn_add(Matrix::row_vector(r.hidden), dh2, model.bank.matrices[source].grad);
    Matrix back(1, a->rows());
    matmul_nt_add(dh2, *a, back);
    dh.assign(back.data().begin(), back.data().end());
  }
  model.mlp.backward(x, r, dh, {});
  return loss;
}

double class_decoupling_train_step(ConsensusModel& model,
                                   std::span<const ClassTrainExample> batch, std::size_t source,
                                   const OptimizerState& state, Rng& rng) {
  require_classification(model);
  require_source(model, source);
  const auto params = shared_and_source(model, source);
  for (Param* p : params) p->zero_grad();
  double loss = 0.0;
  for (const auto& ex : batch) {
    loss += accumulate_class_decoupling_gradient(model, *ex.features, ex.label, source, true, &rng);
  }
  sgd_step(params, state);
  return loss;
}

FrozenClassFeatures frozen_class_features(const ConsensusModel& model, const SparseFeatures& x) {
  require_classification(model);
  return FrozenClassFeatures{model.mlp.encode(x, false, nullptr).embedding};
}

double accumulate_class_aggregation_gradient(ConsensusModel& model,
                                             const FrozenClassFeatures& features, int pseudo) {
  require_classification(model);
  const Vector& h = features.hidden;
  if (!model.uses_sources()) {
    Vector d;
    return cross_entropy(class_scores(model, h).scores, pseudo, d);
  }
  const Vector q = attention_weights(model.bank, h);
  const Matrix consensus = compose_consensus(model.bank, q);
  const ClassPrediction p = class_scores(model, row_times(h, consensus));
  Vector d_scores;
  const double loss = cross_entropy(p.scores, pseudo, d_scores);
  Matrix dh2(1, h.size());
  matmul_nt_add(Matrix::row_vector(d_scores), model.cls_w.value, dh2);
  Matrix d_consensus(consensus.rows(), consensus.cols());
  matmul_tn_add(Matrix::row_vector(h), dh2, d_consensus);
  Vector dq(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    dq[k] = frobenius_dot(d_consensus, model.bank.matrices[k].value);
  }
  attention_backward(model.bank, h, q, dq);
  return loss;
}

double class_aggregation_train_step(ConsensusModel& model, const FrozenClassFeatures& features,
                                    int pseudo, const OptimizerState& state) {
  Param* q = &model.bank.attention;
  q->zero_grad();
  const double loss = accumulate_class_aggregation_gradient(model, features, pseudo);
  sgd_step(std::span<Param* const>(&q, 1), state);
  return loss;
}

std::map<std::string, std::uint64_t> param_checksums(const ConsensusModel& model) {
  std::map<std::string, std::uint64_t> out;
  model.for_each_param([&](const Param& p) { out[p.name] = checksum(p.value); });
  return out;
}

}  // namespace mstag

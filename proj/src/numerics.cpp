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

#include "mstag/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "mstag/errors.hpp"

namespace mstag {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double Rng::normal(double mean, double stddev) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw StructuralError("Rng::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

void OptimizerState::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(decay_per_epoch >= 0.0 && decay_per_epoch < 1.0)) {
    throw ConfigError("decay_per_epoch must be in [0, 1)");
  }
}

double lr_at_epoch(const OptimizerState& state, int epoch) {
  if (epoch < 0) throw StructuralError("lr_at_epoch: negative epoch");
  return state.base_lr * std::pow(1.0 - state.decay_per_epoch, epoch);
}

void Param::zero_grad() {
  if (!row_sparse) {
    grad.set_zero();
    return;
  }
  for (std::size_t r : touched_) {
    std::fill(grad.row(r).begin(), grad.row(r).end(), 0.0);
    touched_flag_[r] = 0;
  }
  touched_.clear();
}

double Param::grad_squared_norm() const {
  if (!row_sparse) return squared_norm(grad);
  double s = 0.0;
  for (std::size_t r : touched_) {
    for (double g : grad.row(r)) s += g * g;
  }
  return s;
}

void Param::scale_grad(double s) {
  if (!row_sparse) {
    grad *= s;
    return;
  }
  for (std::size_t r : touched_) {
    for (double& g : grad.row(r)) g *= s;
  }
}

void Param::apply_grad(double lr) {
  if (!row_sparse) {
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
    return;
  }
  for (std::size_t r : touched_) {
    auto v = value.row(r);
    auto g = grad.row(r);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * g[j];
  }
}

void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads,
              const OptimizerState& state) {
  if (params.size() != grads.size()) throw StructuralError("sgd_step: param/grad count mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i])) throw StructuralError("sgd_step: shape mismatch");
    sq += squared_norm(grads[i]);
  }
  const double norm = std::sqrt(sq);
  double scale = 1.0;
  if (state.clip_norm > 0.0 && norm > state.clip_norm) scale = state.clip_norm / norm;
  const double lr = lr_at_epoch(state, state.epoch) * scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= lr * grads[i][j];
  }
}

double sgd_step(std::span<Param* const> params, const OptimizerState& state) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad_squared_norm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("sgd_step: non-finite gradient");
  double scale = 1.0;
  if (state.clip_norm > 0.0 && norm > state.clip_norm) scale = state.clip_norm / norm;
  const double lr = lr_at_epoch(state, state.epoch) * scale;
  for (Param* p : params) {
    p->apply_grad(lr);
    p->zero_grad();
  }
  return norm;
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw StructuralError("softmax: empty input");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw StructuralError("dropout_mask: p must be in [0, 1)");
  Matrix mask(rows, cols, 1.0);
  if (!training || p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  }
  return mask;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& at,
                        double eps) {
  if (!(eps > 0.0)) throw StructuralError("finite_diff_grad: eps must be positive");
  Matrix x = at;
  Matrix g(at.rows(), at.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const Matrix& a, const Matrix& b, double floor) {
  if (!a.same_shape(b)) throw StructuralError("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

std::uint64_t checksum(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.data()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace mstag

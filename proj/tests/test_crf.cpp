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

#include <cmath>

#include "doctest.h"
#include "mstag/crf.hpp"
#include "mstag/errors.hpp"
#include "support.hpp"

using namespace mstag;
using namespace mstag::testing;

namespace {

struct Instance {
  Matrix U, M;
  Vector start, end;

  ChainView view() const { return ChainView{U, M, start, end}; }
};

Instance random_instance(std::size_t n, std::size_t L, Rng& rng, double scale = 2.0) {
  return {random_matrix(n, L, rng, scale), random_matrix(L, L, rng, scale),
          random_vector(L, rng, scale), random_vector(L, rng, scale)};
}

Instance zero_instance(std::size_t n, std::size_t L) {
  return {Matrix(n, L), Matrix(L, L), Vector(L, 0.0), Vector(L, 0.0)};
}

double nll_of(const Matrix& U, const Matrix& M, const Vector& s, const Vector& e, const TagSeq& y,
              const Matrix* A, TransformTarget target) {
  if (A == nullptr || target == TransformTarget::kNone) return nll(ChainView{U, M, s, e}, y);
  const Matrix Ut = transforms_emission(target) ? matmul(U, *A) : U;
  const Matrix Mt = transforms_transition(target) ? matmul(M, *A) : M;
  return nll(ChainView{Ut, Mt, s, e}, y);
}

Matrix as_row(const Vector& v) { return Matrix::row_vector(v); }

}  // namespace

TEST_CASE("emissions") {
  CrfLayer layer(2, 3);
  CHECK(layer.emissions(Matrix(4, 2)) == Matrix(4, 3));
  layer.emit_b.value = Matrix{{0.5, -1.0, 2.0}};
  const Matrix u = layer.emissions(Matrix(2, 2));
  for (std::size_t t = 0; t < 2; ++t) CHECK(u.row(t)[2] == 2.0);

  CrfLayer one(2, 2);
  one.emit_w.value = Matrix{{1.0, 2.0}, {3.0, 4.0}};
  one.emit_b.value = Matrix{{0.1, 0.2}};
  const Matrix h{{0.5, -1.0}};
  const Matrix got = one.emissions(h);
  CHECK(std::abs(got(0, 0) - (0.5 * 1.0 - 1.0 * 3.0 + 0.1)) < 1e-15);
  CHECK(std::abs(got(0, 1) - (0.5 * 2.0 - 1.0 * 4.0 + 0.2)) < 1e-15);
  CHECK_THROWS_AS(one.emissions(Matrix(1, 3)), StructuralError);
}

TEST_CASE("emissions_backward matches finite differences") {
  Rng rng(1);
  CrfLayer layer(3, 4);
  layer.init(rng);
  const Matrix h = random_matrix(2, 3, rng);
  const Matrix w = random_matrix(2, 4, rng);
  const auto loss = [&] { return frobenius_dot(layer.emissions(h), w); };
  layer.emit_w.grad.set_zero();
  layer.emit_b.grad.set_zero();
  const Matrix dh = layer.emissions_backward(h, w);
  CHECK(param_grad_error(layer.emit_w, loss, layer.emit_w.grad) < 1e-6);
  CHECK(param_grad_error(layer.emit_b, loss, layer.emit_b.grad) < 1e-6);
  const auto f = [&](const Matrix& x) { return frobenius_dot(layer.emissions(x), w); };
  CHECK(max_relative_error(dh, finite_diff_grad(f, h), 1e-4) < 1e-6);
}

TEST_CASE("score_sequence examples") {
  Instance a = zero_instance(1, 2);
  a.U = Matrix{{0.5, -0.2}};
  CHECK(score_sequence(a.view(), TagSeq{0}) == 0.5);

  Instance b = zero_instance(2, 2);
  b.U = Matrix{{1.0, 0.0}, {0.0, 2.0}};
  b.M = Matrix{{0.1, 0.2}, {0.3, 0.4}};
  CHECK(std::abs(score_sequence(b.view(), TagSeq{0, 1}) - 3.2) < 1e-15);

  const Instance z = zero_instance(3, 3);
  for (const auto& y : all_sequences(3, 3)) CHECK(score_sequence(z.view(), y) == 0.0);

  CHECK_THROWS_AS(score_sequence(b.view(), TagSeq{0, 2}), StructuralError);
  CHECK_THROWS_AS(score_sequence(b.view(), TagSeq{0}), StructuralError);
}

TEST_CASE("score_sequence includes start and end transitions") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(1 + rng.below(5), 1 + rng.below(4), rng);
    const TagSeq y = random_tags(in.U.rows(), in.U.cols(), rng);
    CHECK(std::abs(score_sequence(in.view(), y) - brute_score(in.U, in.M, in.start, in.end, y)) <
          1e-12);
  }
}

TEST_CASE("transform_scores examples") {
  Rng rng(3);
  const Matrix U = random_matrix(3, 3, rng);
  const Matrix M = random_matrix(3, 3, rng);
  auto [u1, m1] = transform_scores(U, M, Matrix::identity(3));
  CHECK(u1 == U);
  CHECK(m1 == M);
  auto [u2, m2] = transform_scores(Matrix{{1.0, 2.0}}, Matrix(2, 2), Matrix{{0.0, 1.0}, {1.0, 0.0}});
  CHECK(u2 == Matrix{{2.0, 1.0}});
  auto [u3, m3] = transform_scores(U, M, Matrix(3, 3));
  CHECK(u3 == Matrix(3, 3));
  CHECK(m3 == Matrix(3, 3));
  CHECK_THROWS_AS(transform_scores(U, M, Matrix(2, 2)), StructuralError);
}

TEST_CASE("identity source reduces transformed scoring to the base score") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(1 + rng.below(5), 1 + rng.below(4), rng);
    const auto [u, m] = transform_scores(in.U, in.M, Matrix::identity(in.M.rows()));
    const TagSeq y = random_tags(in.U.rows(), in.U.cols(), rng);
    CHECK(score_sequence(ChainView{u, m, in.start, in.end}, y) == score_sequence(in.view(), y));
  }
}

TEST_CASE("log_partition examples") {
  const Instance u = zero_instance(1, 2);
  CHECK(std::abs(log_partition(u.view()) - std::log(2.0)) < 1e-15);
  Instance e = zero_instance(1, 2);
  e.U = Matrix{{1.0, 0.0}};
  CHECK(std::abs(log_partition(e.view()) - std::log(std::exp(1.0) + 1.0)) < 1e-14);
  CHECK(std::abs(log_partition(e.view()) - 1.31326) < 1e-5);
  Instance bad = zero_instance(2, 2);
  bad.U(1, 0) = NAN;
  CHECK_THROWS_AS(log_partition(bad.view()), NumericError);
  const Instance empty = zero_instance(0, 2);
  CHECK_THROWS_AS(log_partition(empty.view()), StructuralError);
}

TEST_CASE("log_partition, nll and viterbi agree with enumeration") {
  Rng rng(5);
  int trials = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t L = 1; L <= 4; ++L) {
      for (int rep = 0; rep < 25; ++rep, ++trials) {
        const Instance in = random_instance(n, L, rng, 3.0);
        const BruteForce bf = brute_force(in.U, in.M, in.start, in.end);
        CHECK(std::abs(log_partition(in.view()) - bf.log_z) < 1e-8);
        CHECK(viterbi_decode(in.view()) == bf.argmax);
        double total = 0.0;
        for (std::size_t i = 0; i < bf.sequences.size(); ++i) {
          const double v = nll(in.view(), bf.sequences[i]);
          CHECK(v >= 0.0);
          total += std::exp(-v);
          CHECK(std::abs(v + std::log(bf.probs[i])) < 1e-8);
        }
        CHECK(std::abs(total - 1.0) < 1e-8);
      }
    }
  }
  CHECK(trials >= 500);
}

TEST_CASE("large-scale scores stay finite") {
  Rng rng(6);
  const Instance in = random_instance(4, 3, rng, 400.0);
  const BruteForce bf = brute_force(in.U, in.M, in.start, in.end);
  CHECK(std::isfinite(log_partition(in.view())));
  CHECK(rel_err(log_partition(in.view()), bf.log_z) < 1e-12);
}

TEST_CASE("nll examples") {
  const Instance u = zero_instance(1, 2);
  CHECK(std::abs(nll(u.view(), TagSeq{0}) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(nll(u.view(), TagSeq{1}) - std::log(2.0)) < 1e-15);

  Instance m = zero_instance(3, 3);
  for (std::size_t t = 0; t < 3; ++t) m.U(t, t) = 12.0;
  const TagSeq best = viterbi_decode(m.view());
  CHECK(best == TagSeq{0, 1, 2});
  const double v = nll(m.view(), best);
  CHECK(v > 0.0);
  CHECK(v < 1e-4);
  const BruteForce bf = brute_force(m.U, m.M, m.start, m.end);
  CHECK(std::abs(v + std::log(bf.probs[5])) < 1e-10);  // (0,1,2) is index 0*9+1*3+2
}

TEST_CASE("viterbi examples and tie-breaking") {
  Instance one = zero_instance(1, 4);
  one.U = Matrix{{0.1, 3.0, -1.0, 2.9}};
  CHECK(viterbi_decode(one.view()) == TagSeq{1});

  Instance tie = zero_instance(1, 3);
  tie.U = Matrix{{0.0, 1.0, 1.0}};
  CHECK(viterbi_decode(tie.view()) == TagSeq{1});

  const Instance flat = zero_instance(4, 3);
  CHECK(viterbi_decode(flat.view()) == TagSeq{0, 0, 0, 0});

  Instance mid = zero_instance(3, 2);
  mid.U = Matrix{{0.0, 0.0}, {5.0, 5.0}, {0.0, 0.0}};
  CHECK(viterbi_decode(mid.view()) == TagSeq{0, 0, 0});
}

TEST_CASE("viterbi ties agree with lexicographic enumeration on integer scores") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(4), L = 1 + rng.below(4);
    Instance in = zero_instance(n, L);
    for (auto& x : in.U.data()) x = static_cast<double>(rng.below(3));
    for (auto& x : in.M.data()) x = static_cast<double>(rng.below(3));
    for (auto& x : in.start) x = static_cast<double>(rng.below(2));
    for (auto& x : in.end) x = static_cast<double>(rng.below(2));
    const BruteForce bf = brute_force(in.U, in.M, in.start, in.end);
    const TagSeq got = viterbi_decode(in.view());
    CHECK(brute_score(in.U, in.M, in.start, in.end, got) ==
          brute_score(in.U, in.M, in.start, in.end, bf.argmax));
  }
}

TEST_CASE("crf_gradients without a source matrix") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    Instance in = random_instance(1 + rng.below(4), 1 + rng.below(4), rng);
    const TagSeq y = random_tags(in.U.rows(), in.U.cols(), rng);
    const CrfGradients g = crf_gradients(in.U, in.M, in.start, in.end, y);
    CHECK(std::abs(g.nll - nll(in.view(), y)) < 1e-12);
    CHECK(g.source.empty());
    const auto fu = [&](const Matrix& x) { return nll(ChainView{x, in.M, in.start, in.end}, y); };
    const auto fm = [&](const Matrix& x) { return nll(ChainView{in.U, x, in.start, in.end}, y); };
    const auto fs = [&](const Matrix& x) {
      return nll(ChainView{in.U, in.M, x.data(), in.end}, y);
    };
    const auto fe = [&](const Matrix& x) {
      return nll(ChainView{in.U, in.M, in.start, x.data()}, y);
    };
    CHECK(max_relative_error(g.emit, finite_diff_grad(fu, in.U), 1e-4) < 1e-4);
    CHECK(max_relative_error(g.trans, finite_diff_grad(fm, in.M), 1e-4) < 1e-4);
    CHECK(max_relative_error(as_row(g.start), finite_diff_grad(fs, as_row(in.start)), 1e-4) < 1e-4);
    CHECK(max_relative_error(as_row(g.end), finite_diff_grad(fe, as_row(in.end)), 1e-4) < 1e-4);
  }
}

TEST_CASE("crf_gradients through a source matrix for every target") {
  Rng rng(9);
  for (TransformTarget target : {TransformTarget::kEmission, TransformTarget::kTransition,
                                 TransformTarget::kBoth}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.below(4), L = 1 + rng.below(4);
      Instance in = random_instance(n, L, rng);
      const Matrix A = Matrix::identity(L) + random_matrix(L, L, rng, 0.5);
      const TagSeq y = random_tags(n, L, rng);
      const CrfGradients g = crf_gradients(in.U, in.M, in.start, in.end, y, &A, target);
      CHECK(std::abs(g.nll - nll_of(in.U, in.M, in.start, in.end, y, &A, target)) < 1e-12);
      const auto fu = [&](const Matrix& x) {
        return nll_of(x, in.M, in.start, in.end, y, &A, target);
      };
      const auto fm = [&](const Matrix& x) {
        return nll_of(in.U, x, in.start, in.end, y, &A, target);
      };
      const auto fa = [&](const Matrix& x) {
        return nll_of(in.U, in.M, in.start, in.end, y, &x, target);
      };
      CHECK(max_relative_error(g.emit, finite_diff_grad(fu, in.U), 1e-4) < 1e-4);
      CHECK(max_relative_error(g.trans, finite_diff_grad(fm, in.M), 1e-4) < 1e-4);
      CHECK(max_relative_error(g.source, finite_diff_grad(fa, A), 1e-4) < 1e-4);
    }
  }
}

TEST_CASE("source gradient at identity with zero emissions") {
  Rng rng(10);
  Instance in = random_instance(3, 3, rng);
  in.U = Matrix(3, 3);
  const Matrix A = Matrix::identity(3);
  const TagSeq y{0, 2, 1};
  const CrfGradients g = crf_gradients(in.U, in.M, in.start, in.end, y, &A);
  CHECK(g.source.all_finite());
  const auto fa = [&](const Matrix& x) {
    return nll_of(in.U, in.M, in.start, in.end, y, &x, TransformTarget::kBoth);
  };
  CHECK(max_relative_error(g.source, finite_diff_grad(fa, A), 1e-4) < 1e-4);
}

TEST_CASE("saturated chain has vanishing gradients") {
  Instance in = zero_instance(3, 3);
  const TagSeq y{2, 0, 1};
  for (std::size_t t = 0; t < 3; ++t) in.U(t, static_cast<std::size_t>(y[t])) = 60.0;
  const CrfGradients g = crf_gradients(in.U, in.M, in.start, in.end, y);
  CHECK(g.nll < 1e-20);
  for (double v : g.emit.data()) CHECK(std::abs(v) < 1e-12);
  for (double v : g.trans.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("kNone target ignores the source matrix") {
  Rng rng(11);
  const Instance in = random_instance(3, 3, rng);
  const Matrix A = random_matrix(3, 3, rng);
  const TagSeq y{1, 1, 0};
  const CrfGradients g = crf_gradients(in.U, in.M, in.start, in.end, y, &A, TransformTarget::kNone);
  CHECK(g.nll == nll(in.view(), y));
  CHECK(g.source == Matrix(3, 3));
}

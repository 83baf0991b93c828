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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mstag/consensus.hpp"
#include "mstag/errors.hpp"
#include "mstag/eval.hpp"
#include "support.hpp"

using namespace mstag;
using namespace mstag::testing;

namespace {

TagSeq tags(const TagDict& d, std::initializer_list<const char*> names) {
  TagSeq out;
  for (const char* n : names) out.push_back(d.id(n));
  return out;
}

int type_of(const TagDict& d, const char* name) {
  const auto& t = d.entity_types();
  return static_cast<int>(std::find(t.begin(), t.end(), name) - t.begin());
}

// Random valid BIO sequence.
TagSeq random_bio(std::size_t n, const TagDict& d, Rng& rng) {
  return repair_bio(random_tags(n, d.size(), rng), d);
}

}  // namespace

TEST_CASE("extract_chunks examples") {
  const TagDict d = toy_dict();
  CHECK(extract_chunks(tags(d, {"O", "O"}), d).empty());
  const auto c = extract_chunks(tags(d, {"B-PER", "I-PER", "O", "B-ORG"}), d);
  REQUIRE(c.size() == 2);
  CHECK(c[0] == Chunk{type_of(d, "PER"), 0, 1, 0});
  CHECK(c[1] == Chunk{type_of(d, "ORG"), 3, 3, 0});
  const auto two = extract_chunks(tags(d, {"B-PER", "B-PER"}), d);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Chunk{type_of(d, "PER"), 0, 0, 0});
  CHECK(two[1] == Chunk{type_of(d, "PER"), 1, 1, 0});
  const auto switched = extract_chunks(tags(d, {"B-PER", "I-PER", "B-LOC", "I-LOC", "I-LOC"}), d);
  REQUIRE(switched.size() == 2);
  CHECK(switched[1] == Chunk{type_of(d, "LOC"), 2, 4, 0});
  CHECK_THROWS_AS(extract_chunks(tags(d, {"O", "I-PER"}), d), StructuralError);
}

TEST_CASE("chunks and tags round trip") {
  const TagDict d = toy_dict();
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const TagSeq y = random_bio(n, d, rng);
    const auto chunks = extract_chunks(y, d);
    CHECK(extract_chunks(tags_from_chunks(chunks, n, d), d) == chunks);
    for (const auto& c : chunks) CHECK(c.start <= c.end);
  }
}

TEST_CASE("prf1 examples") {
  const std::vector<Chunk> gold = {{0, 0, 1, 0}};
  Prf p = prf1(gold, gold);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == 1.0);

  p = prf1({{0, 0, 1, 0}, {1, 3, 3, 0}}, gold);
  CHECK(p.precision == 0.5);
  CHECK(p.recall == 1.0);
  CHECK(std::abs(p.f1 - 2.0 / 3.0) < 1e-15);

  p = prf1({}, gold);
  CHECK(p.precision == 0.0);
  CHECK(p.recall == 0.0);
  CHECK(p.f1 == 0.0);

  p = prf1({{0, 0, 0, 0}}, gold);  // wrong span, no partial credit
  CHECK(p.f1 == 0.0);
  p = prf1({{1, 0, 1, 0}}, gold);  // wrong type
  CHECK(p.f1 == 0.0);
  p = prf1({{0, 0, 1, 1}}, gold);  // same span, other sentence
  CHECK(p.f1 == 0.0);
}

TEST_CASE("prf1 against a counting oracle") {
  const TagDict d = toy_dict();
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TagSeq> pred, gold;
    for (std::size_t i = 0; i < 1 + rng.below(5); ++i) {
      const std::size_t n = 1 + rng.below(8);
      gold.push_back(random_bio(n, d, rng));
      pred.push_back(rng.uniform() < 0.3 ? gold.back() : random_bio(n, d, rng));
    }
    const auto pc = extract_chunks(pred, d);
    const auto gc = extract_chunks(gold, d);
    std::size_t tp = 0;
    for (const auto& c : pc) tp += std::count(gc.begin(), gc.end(), c) > 0 ? 1 : 0;
    const double P = pc.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(pc.size());
    const double R = gc.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gc.size());
    const double F = P + R == 0.0 ? 0.0 : 2 * P * R / (P + R);
    const Prf got = corpus_prf1(pred, gold, d);
    CHECK(got.true_positives == tp);
    CHECK(std::abs(got.precision - P) < 1e-15);
    CHECK(std::abs(got.recall - R) < 1e-15);
    CHECK(std::abs(got.f1 - F) < 1e-15);
    if (!gc.empty()) CHECK(prf1(gc, gc).f1 == 1.0);
  }
}

TEST_CASE("token_accuracy") {
  CHECK(token_accuracy({{0, 1, 2}}, {{0, 1, 2}}) == 1.0);
  CHECK(token_accuracy({{0, 1, 2, 3}}, {{0, 1, 0, 0}}) == 0.5);
  CHECK_THROWS_AS(token_accuracy({}, {}), DataError);
  CHECK_THROWS_AS(token_accuracy({{0}}, {{0, 1}}), StructuralError);
}

TEST_CASE("evaluate_tags and evaluate_labels") {
  const TagDict d = toy_dict();
  const auto gold = toy_gold(d);
  const Metrics m = evaluate_tags(gold, gold, d);
  CHECK(m.f1 == 1.0);
  CHECK(m.accuracy == 1.0);
  CHECK(m.primary == 1.0);
  CHECK(m.per_type.size() == 3);

  const TagDict pos = TagDict::plain({"NN", "VB"});
  const Metrics a = evaluate_tags({{0, 1}}, {{0, 0}}, pos);
  CHECK(a.primary == 0.5);
  CHECK(label_score({{0, 1}}, {{0, 0}}, pos) == 0.5);

  const Metrics c = evaluate_labels({0, 1, 1, 0}, {0, 1, 0, 0});
  CHECK(c.accuracy == 0.75);
  CHECK_THROWS_AS(evaluate_labels({}, {}), DataError);
}

TEST_CASE("expertise matrix") {
  const TagDict d = toy_dict();
  const auto gold = toy_gold(d);
  std::vector<TagSeq> empty;
  for (const auto& g : gold) empty.push_back(TagSeq(g.size(), 0));
  std::vector<const TagSeq*> perfect, none;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    perfect.push_back(&gold[i]);
    none.push_back(&empty[i]);
  }
  const ExpertiseMatrix e = expertise_matrix({perfect, none}, gold, d, {"a", "b"});
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(e.f1(0, t) == 1.0);
    CHECK(e.f1(1, t) == 0.0);
  }
  CHECK(e.types == std::vector<std::string>{"LOC", "ORG", "PER"});

  // Two types, hand-counted: PER 1 of 2 predicted correct, 1 of 1 gold found;
  // LOC 0 predicted, 1 gold.
  const std::vector<TagSeq> g2 = {tags(d, {"B-PER", "O", "B-LOC"})};
  const std::vector<TagSeq> p2 = {tags(d, {"B-PER", "B-PER", "O"})};
  const ExpertiseMatrix h = expertise_matrix({{&p2[0]}}, g2, d, {"x"});
  CHECK(std::abs(h.f1(0, static_cast<std::size_t>(type_of(d, "PER"))) - 2.0 / 3.0) < 1e-15);
  CHECK(h.f1(0, static_cast<std::size_t>(type_of(d, "LOC"))) == 0.0);
  CHECK(h.f1(0, static_cast<std::size_t>(type_of(d, "ORG"))) == 0.0);
}

TEST_CASE("expertise entries stay in the unit interval") {
  const TagDict d = toy_dict();
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TagSeq> gold, pred;
    for (int i = 0; i < 4; ++i) {
      const std::size_t n = 1 + rng.below(6);
      gold.push_back(random_bio(n, d, rng));
      pred.push_back(random_bio(n, d, rng));
    }
    std::vector<const TagSeq*> p;
    for (const auto& x : pred) p.push_back(&x);
    const ExpertiseMatrix e = expertise_matrix({p}, gold, d, {"s"});
    for (double v : e.f1.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("average_attention") {
  const AttentionSummary one = average_attention({{0.3, 0.7}}, {0}, {"g"}, {"a", "b"});
  CHECK(one.mean == Matrix{{0.3, 0.7}});
  const AttentionSummary two = average_attention({{0.2, 0.8}, {0.6, 0.4}}, {0, 0}, {"g"}, {"a", "b"});
  CHECK(std::abs(two.mean(0, 0) - 0.4) < 1e-15);
  CHECK(std::abs(two.mean(0, 1) - 0.6) < 1e-15);
  CHECK(two.counts == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(average_attention({{0.5, 0.5}}, {0}, {"g", "empty"}, {"a", "b"}), DataError);

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 1 + rng.below(5), G = 1 + rng.below(3);
    std::vector<Vector> ws;
    std::vector<std::size_t> group;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t i = 0; i < 1 + rng.below(6); ++i) {
        ws.push_back(softmax(random_vector(K, rng, 3.0)));
        group.push_back(g);
      }
    }
    std::vector<std::string> gn(G, "g"), sn(K, "s");
    const AttentionSummary s = average_attention(ws, group, gn, sn);
    for (std::size_t g = 0; g < G; ++g) {
      double sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) sum += s.mean(g, k);
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("average_attention_by_source on a model") {
  ConsensusModel m = tiny_model(4, 3, true, 5);
  std::vector<EncodedSentence> enc;
  for (const auto& s : toy_sentences()) enc.push_back(m.vocab().encode(s));
  std::vector<std::size_t> group(enc.size(), 0);
  for (std::size_t i = 5; i < enc.size(); ++i) group[i] = 1;

  const AttentionSummary s = average_attention_by_source(m, enc, group, {"first", "second"});
  CHECK(s.sources.size() == 4);
  Vector expect(4, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    const Vector q = attention_weights(m.bank, frozen_features(m, enc[i]).embedding);
    for (std::size_t k = 0; k < 4; ++k) expect[k] += q[k] / 5.0;
  }
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(s.mean(0, k) - expect[k]) < 1e-12);

  m.bank.attention.value.set_zero();
  const AttentionSummary u = average_attention_by_source(m, enc, group, {"first", "second"});
  for (double v : u.mean.data()) CHECK(std::abs(v - 0.25) < 1e-15);
}

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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mstag/checkpoint.hpp"
#include "mstag/errors.hpp"
#include "support.hpp"

using namespace mstag;
using namespace mstag::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mstag_test_ckpt_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("variant and mode names") {
  for (TransformTarget t : {TransformTarget::kNone, TransformTarget::kEmission,
                            TransformTarget::kTransition, TransformTarget::kBoth}) {
    CHECK(parse_variant(variant_name(t)) == t);
  }
  CHECK(parse_variant("DP(1)") == TransformTarget::kEmission);
  CHECK(parse_variant("DP(2)") == TransformTarget::kTransition);
  CHECK(parse_variant("DP(1+2)") == TransformTarget::kBoth);
  CHECK(parse_variant("CRF") == TransformTarget::kNone);
  CHECK_THROWS_AS(parse_variant("DP(3)"), ConfigError);
  for (TaskMode m : {TaskMode::kSequence, TaskMode::kClassification}) {
    CHECK(parse_task_mode(task_mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_task_mode("graph"), ConfigError);
}

TEST_CASE("model config round trip") {
  ModelConfig c;
  c.blstm.hidden = 7;
  c.blstm.use_chars = false;
  c.variant = TransformTarget::kTransition;
  c.no_source_matrices = true;
  c.mlp.hidden = 11;
  const ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.blstm.hidden == 7);
  CHECK(back.variant == TransformTarget::kTransition);
}

TEST_CASE("sequence checkpoint round trip is bit exact") {
  const auto dir = temp_dir("seq");
  ConsensusModel m = tiny_model(3, 3, true, 1, TransformTarget::kEmission);
  Rng rng(2);
  m.bank.attention.value = random_matrix(3, m.embedding_dim(), rng, 1e-3);
  m.bank.attention.value(0, 0) = 1.0 / 3.0;
  m.crf.trans.value(1, 2) = -1e-300;
  Json extra;
  extra["note"] = "hello";
  save_checkpoint(m, dir / "ckpt.json", extra);
  Json extra_back;
  const ConsensusModel back = load_checkpoint(dir / "ckpt.json", &extra_back);
  CHECK(param_checksums(back) == param_checksums(m));
  CHECK(back.labels() == m.labels());
  CHECK(back.vocab().words.keys() == m.vocab().words.keys());
  CHECK(back.vocab().chars.keys() == m.vocab().chars.keys());
  CHECK(back.sources().size() == 3);
  CHECK(back.sources()[2].id == "s2");
  CHECK(back.config().variant == TransformTarget::kEmission);
  CHECK(extra_back["note"] == "hello");

  for (const auto& s : toy_sentences()) {
    const auto e1 = m.vocab().encode(s);
    const auto e2 = back.vocab().encode(s);
    CHECK(predict_with_consensus(m, e1) == predict_with_consensus(back, e2));
  }
  save_checkpoint(back, dir / "again.json", extra_back);
  std::ifstream a(dir / "ckpt.json"), b(dir / "again.json");
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::filesystem::remove_all(dir);
}

TEST_CASE("classification checkpoint round trip") {
  ConsensusModel m = tiny_classifier(2, 6, 3, 4, 3);
  const Json j = checkpoint_to_json(m);
  const ConsensusModel back = checkpoint_from_json(j);
  CHECK(param_checksums(back) == param_checksums(m));
  CHECK(back.mode() == TaskMode::kClassification);
  CHECK_FALSE(back.labels().is_bio());
  const SparseFeatures x{{{1, 2.0}, {5, 1.0}}};
  CHECK(classify_with_consensus(back, x).scores == classify_with_consensus(m, x).scores);
}

TEST_CASE("malformed checkpoints are config errors") {
  const ConsensusModel m = tiny_model(2, 2, false, 4);
  const Json good = checkpoint_to_json(m);

  Json j = good;
  j["format"] = "other";
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  j = good;
  j["version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  j = good;
  j["params"].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  j = good;
  j["params"][0]["data"].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  j = good;
  j["params"][0]["shape"] = Json::array({1, 1});
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  j = good;
  j.erase("labels");
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), ConfigError);
}

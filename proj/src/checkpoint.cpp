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

#include "mstag/checkpoint.hpp"

#include <fstream>
#include <map>

#include "mstag/errors.hpp"

namespace mstag {

TransformTarget parse_variant(std::string_view name) {
  if (name == "none" || name == "CRF" || name == "crf") return TransformTarget::kNone;
  if (name == "emission" || name == "DP(1)" || name == "dp1") return TransformTarget::kEmission;
  if (name == "transition" || name == "DP(2)" || name == "dp2") return TransformTarget::kTransition;
  if (name == "both" || name == "DP(1+2)" || name == "dp12") return TransformTarget::kBoth;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string variant_name(TransformTarget t) {
  switch (t) {
    case TransformTarget::kNone: return "none";
    case TransformTarget::kEmission: return "emission";
    case TransformTarget::kTransition: return "transition";
    case TransformTarget::kBoth: return "both";
  }
  return "both";
}

TaskMode parse_task_mode(std::string_view name) {
  if (name == "sequence") return TaskMode::kSequence;
  if (name == "classification") return TaskMode::kClassification;
  throw ConfigError("unknown task mode '" + std::string(name) + "'");
}

std::string task_mode_name(TaskMode m) {
  return m == TaskMode::kSequence ? "sequence" : "classification";
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["mode"] = task_mode_name(c.mode);
  j["word_dim"] = c.blstm.word_dim;
  j["char_dim"] = c.blstm.char_dim;
  j["char_hidden"] = c.blstm.char_hidden;
  j["hidden"] = c.blstm.hidden;
  j["use_chars"] = c.blstm.use_chars;
  j["dropout"] = c.blstm.dropout;
  j["mlp_input_dim"] = c.mlp.input_dim;
  j["mlp_hidden"] = c.mlp.hidden;
  j["mlp_dropout"] = c.mlp.dropout;
  j["variant"] = variant_name(c.variant);
  j["no_source_matrices"] = c.no_source_matrices;
  j["source_init_std"] = c.source_init_std;
  return j;
}

ModelConfig model_config_from_json(const Json& j, const ModelConfig& base) {
  ModelConfig c = base;
  try {
    if (j.contains("mode")) c.mode = parse_task_mode(j.at("mode").get<std::string>());
    c.blstm.word_dim = j.value("word_dim", c.blstm.word_dim);
    c.blstm.char_dim = j.value("char_dim", c.blstm.char_dim);
    c.blstm.char_hidden = j.value("char_hidden", c.blstm.char_hidden);
    c.blstm.hidden = j.value("hidden", c.blstm.hidden);
    c.blstm.use_chars = j.value("use_chars", c.blstm.use_chars);
    c.blstm.dropout = j.value("dropout", c.blstm.dropout);
    c.mlp.input_dim = j.value("mlp_input_dim", c.mlp.input_dim);
    c.mlp.hidden = j.value("mlp_hidden", c.mlp.hidden);
    c.mlp.dropout = j.value("mlp_dropout", c.mlp.dropout);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.no_source_matrices = j.value("no_source_matrices", c.no_source_matrices);
    c.source_init_std = j.value("source_init_std", c.source_init_std);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Json checkpoint_to_json(const ConsensusModel& model, const Json& extra) {
  Json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model_config"] = to_json(model.config());
  j["labels"] = {{"bio", model.labels().is_bio()}, {"tags", model.labels().tags()}};
  j["vocab"] = {{"words", model.vocab().words.keys()}, {"chars", model.vocab().chars.keys()}};
  Json sources = Json::array();
  for (const auto& s : model.sources()) sources.push_back({{"id", s.id}, {"name", s.name}});
  j["sources"] = sources;
  Json params = Json::array();
  model.for_each_param([&](const Param& p) {
    Json e;
    e["name"] = p.name;
    e["shape"] = {p.value.rows(), p.value.cols()};
    auto values = p.value.data();
    e["data"] = std::vector<double>(values.begin(), values.end());
    params.push_back(std::move(e));
  });
  j["params"] = std::move(params);
  j["config"] = extra;
  return j;
}

ConsensusModel checkpoint_from_json(const Json& j, Json* extra) {
  try {
    if (j.value("format", std::string()) != kCheckpointFormat) {
      throw ConfigError("not a checkpoint (format tag missing)");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    }
    const ModelConfig config = model_config_from_json(j.at("model_config"));
    const auto tags = j.at("labels").at("tags").get<std::vector<std::string>>();
    TagDict labels = j.at("labels").at("bio").get<bool>() ? TagDict::declared(tags)
                                                           : TagDict::plain(tags);
    if (labels.tags() != tags) throw ConfigError("checkpoint label order is not canonical");
    Vocabularies vocab;
    vocab.words = Vocab::from_keys(j.at("vocab").at("words").get<std::vector<std::string>>());
    vocab.chars = Vocab::from_keys(j.at("vocab").at("chars").get<std::vector<std::string>>());
    std::vector<SourceInfo> sources;
    for (const auto& s : j.at("sources")) {
      sources.push_back({s.at("id").get<std::string>(), s.at("name").get<std::string>()});
    }
    ConsensusModel model(config, std::move(vocab), std::move(labels), std::move(sources));

    std::map<std::string, const Json*> by_name;
    for (const auto& p : j.at("params")) by_name[p.at("name").get<std::string>()] = &p;
    std::size_t assigned = 0;
    model.for_each_param([&](Param& p) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter " + p.name);
      const Json& e = *it->second;
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
        throw ConfigError("checkpoint shape mismatch for " + p.name);
      }
      const auto data = e.at("data").get<std::vector<double>>();
      if (data.size() != p.value.size()) throw ConfigError("checkpoint data size for " + p.name);
      std::copy(data.begin(), data.end(), p.value.data().begin());
      p.grad.set_zero();
      ++assigned;
    });
    if (assigned != by_name.size()) throw ConfigError("checkpoint has unused parameters");
    if (extra) *extra = j.value("config", Json::object());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ConsensusModel& model, const std::filesystem::path& path,
                     const Json& extra) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model, extra).dump() << '\n';
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

ConsensusModel load_checkpoint(const std::filesystem::path& path, Json* extra) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j, extra);
}

}  // namespace mstag

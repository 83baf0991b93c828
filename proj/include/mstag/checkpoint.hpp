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

#ifndef MSTAG_CHECKPOINT_HPP_
#define MSTAG_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mstag/consensus.hpp"

namespace mstag {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kCheckpointFormat = "mstag-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Accepts none|emission|transition|both and the ablation names
// CRF, DP(1), DP(2), DP(1+2).
TransformTarget parse_variant(std::string_view name);
std::string variant_name(TransformTarget t);

TaskMode parse_task_mode(std::string_view name);
std::string task_mode_name(TaskMode m);

Json to_json(const ModelConfig& config);
// Missing keys keep the defaults of `base`.
ModelConfig model_config_from_json(const Json& j, const ModelConfig& base = {});

// Self-describing container: format tag and version, model config, label
// set, vocabularies, sources and every parameter tensor with its shape.
// `extra` is echoed verbatim under "config".
Json checkpoint_to_json(const ConsensusModel& model, const Json& extra = Json::object());
ConsensusModel checkpoint_from_json(const Json& j, Json* extra = nullptr);

void save_checkpoint(const ConsensusModel& model, const std::filesystem::path& path,
                     const Json& extra = Json::object());
ConsensusModel load_checkpoint(const std::filesystem::path& path, Json* extra = nullptr);

}  // namespace mstag

#endif  // MSTAG_CHECKPOINT_HPP_

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

#ifndef MSTAG_REPORT_HPP_
#define MSTAG_REPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mstag/checkpoint.hpp"
#include "mstag/eval.hpp"

namespace mstag {

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single seed
};

MetricSummary mean_std(const std::vector<double>& values);

struct SeedReport {
  std::uint64_t seed = 0;
  std::map<std::string, Metrics> methods;  // test metrics per method
  Json details = Json::object();           // histories, weights, selected epochs
  std::optional<ExpertiseMatrix> expertise;
  std::optional<AttentionSummary> attention;
  std::string artifact_dir;  // per-seed files written during the run
  double wall_clock_seconds = 0.0;
};

using RunSummary = std::map<std::string, std::map<std::string, MetricSummary>>;

struct RunReport {
  Json config = Json::object();
  std::string build_id;
  std::string created;  // ISO-8601 UTC
  double wall_clock_seconds = 0.0;
  std::vector<SeedReport> seeds;
  RunSummary summary;
};

// Mean and sample std of precision/recall/f1/accuracy per method.
RunSummary summarize(const std::vector<SeedReport>& seeds);

const char* build_id();
std::string utc_timestamp();

Json to_json(const Metrics& m);
Metrics metrics_from_json(const Json& j);

// Per-seed metrics and summary only. Identical runs give identical bytes.
Json metrics_json(const RunReport& report);
// Everything, including timestamps and wall-clock figures.
Json report_json(const RunReport& report);
RunReport report_from_json(const Json& j);

// Files (relative to `dir`):
//   manifest.json                      always
//   report.json, metrics.json          "json"
//   metrics.csv, expertise.csv,
//   attention.csv                      "csv"
//   pseudo_labels_seed<S>.conll/.json,
//   predictions_seed<S>.conll          "conll" (copied from the seed artifacts)
// Returns the written paths.
std::vector<std::filesystem::path> emit_report(const RunReport& report,
                                               const std::vector<std::string>& formats,
                                               const std::filesystem::path& dir);

}  // namespace mstag

#endif  // MSTAG_REPORT_HPP_

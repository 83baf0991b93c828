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

#include "mstag/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "mstag/errors.hpp"
#include "mstag/log.hpp"

#ifndef MSTAG_BUILD_ID
#define MSTAG_BUILD_ID "unknown"
#endif

namespace mstag {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSummaryMetrics = {"precision", "recall", "f1", "accuracy"};

double metric_value(const Metrics& m, const std::string& name) {
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "f1") return m.f1;
  if (name == "accuracy") return m.accuracy;
  return m.primary;
}

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

Json summary_json(const RunSummary& s) {
  Json j = Json::object();
  for (const auto& [method, metrics] : s) {
    for (const auto& [name, v] : metrics) j[method][name] = {{"mean", v.mean}, {"std", v.std}};
  }
  return j;
}

}  // namespace

MetricSummary mean_std(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

RunSummary summarize(const std::vector<SeedReport>& seeds) {
  std::set<std::string> methods;
  for (const auto& s : seeds) {
    for (const auto& [m, _] : s.methods) methods.insert(m);
  }
  RunSummary out;
  for (const auto& method : methods) {
    for (const auto& name : kSummaryMetrics) {
      std::vector<double> values;
      for (const auto& s : seeds) {
        auto it = s.methods.find(method);
        if (it != s.methods.end()) values.push_back(metric_value(it->second, name));
      }
      out[method][name] = mean_std(values);
    }
  }
  return out;
}

const char* build_id() { return MSTAG_BUILD_ID; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

Json to_json(const Metrics& m) {
  Json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["accuracy"] = m.accuracy;
  j["primary"] = m.primary;
  Json per = Json::object();
  for (const auto& [type, prf] : m.per_type) {
    per[type] = {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1},
                 {"true_positives", prf.true_positives}, {"predicted", prf.predicted},
                 {"gold", prf.gold}};
  }
  j["per_type"] = per;
  return j;
}

Metrics metrics_from_json(const Json& j) {
  Metrics m;
  m.precision = j.value("precision", 0.0);
  m.recall = j.value("recall", 0.0);
  m.f1 = j.value("f1", 0.0);
  m.accuracy = j.value("accuracy", 0.0);
  m.primary = j.value("primary", 0.0);
  if (j.contains("per_type")) {
    for (const auto& [type, p] : j.at("per_type").items()) {
      Prf prf;
      prf.precision = p.value("precision", 0.0);
      prf.recall = p.value("recall", 0.0);
      prf.f1 = p.value("f1", 0.0);
      prf.true_positives = p.value("true_positives", std::size_t{0});
      prf.predicted = p.value("predicted", std::size_t{0});
      prf.gold = p.value("gold", std::size_t{0});
      m.per_type[type] = prf;
    }
  }
  return m;
}

Json metrics_json(const RunReport& report) {
  Json j;
  Json seeds = Json::array();
  for (const auto& s : report.seeds) {
    Json e;
    e["seed"] = s.seed;
    for (const auto& [method, m] : s.methods) e["methods"][method] = to_json(m);
    seeds.push_back(e);
  }
  j["seeds"] = seeds;
  j["summary"] = summary_json(report.summary);
  return j;
}

Json report_json(const RunReport& report) {
  Json j;
  j["build_id"] = report.build_id;
  j["created"] = report.created;
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  j["config"] = report.config;
  Json seeds = Json::array();
  for (const auto& s : report.seeds) {
    Json e;
    e["seed"] = s.seed;
    e["wall_clock_seconds"] = s.wall_clock_seconds;
    for (const auto& [method, m] : s.methods) e["methods"][method] = to_json(m);
    e["details"] = s.details;
    if (s.expertise) {
      const auto& x = *s.expertise;
      Json rows = Json::array();
      for (std::size_t k = 0; k < x.sources.size(); ++k) {
        auto r = x.f1.row(k);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
      }
      e["expertise"] = {{"sources", x.sources}, {"types", x.types}, {"f1", rows}};
    }
    if (s.attention) {
      const auto& a = *s.attention;
      Json rows = Json::array();
      for (std::size_t g = 0; g < a.groups.size(); ++g) {
        auto r = a.mean.row(g);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
      }
      e["attention"] = {{"groups", a.groups}, {"sources", a.sources}, {"mean", rows},
                        {"counts", a.counts}};
    }
    e["artifact_dir"] = s.artifact_dir;
    seeds.push_back(e);
  }
  j["seeds"] = seeds;
  j["summary"] = summary_json(report.summary);
  return j;
}

RunReport report_from_json(const Json& j) {
  RunReport r;
  try {
    r.build_id = j.value("build_id", std::string());
    r.created = j.value("created", std::string());
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    r.config = j.value("config", Json::object());
    for (const auto& e : j.at("seeds")) {
      SeedReport s;
      s.seed = e.at("seed").get<std::uint64_t>();
      s.wall_clock_seconds = e.value("wall_clock_seconds", 0.0);
      if (e.contains("methods")) {
        for (const auto& [method, m] : e.at("methods").items()) {
          s.methods[method] = metrics_from_json(m);
        }
      }
      s.details = e.value("details", Json::object());
      s.artifact_dir = e.value("artifact_dir", std::string());
      if (e.contains("expertise")) {
        ExpertiseMatrix x;
        x.sources = e["expertise"].at("sources").get<std::vector<std::string>>();
        x.types = e["expertise"].at("types").get<std::vector<std::string>>();
        x.f1 = Matrix(x.sources.size(), x.types.size());
        const auto rows = e["expertise"].at("f1").get<std::vector<std::vector<double>>>();
        for (std::size_t k = 0; k < rows.size() && k < x.sources.size(); ++k) {
          for (std::size_t t = 0; t < rows[k].size() && t < x.types.size(); ++t) x.f1(k, t) = rows[k][t];
        }
        s.expertise = std::move(x);
      }
      if (e.contains("attention")) {
        AttentionSummary a;
        a.groups = e["attention"].at("groups").get<std::vector<std::string>>();
        a.sources = e["attention"].at("sources").get<std::vector<std::string>>();
        a.counts = e["attention"].at("counts").get<std::vector<std::size_t>>();
        a.mean = Matrix(a.groups.size(), a.sources.size());
        const auto rows = e["attention"].at("mean").get<std::vector<std::vector<double>>>();
        for (std::size_t g = 0; g < rows.size() && g < a.groups.size(); ++g) {
          for (std::size_t k = 0; k < rows[g].size() && k < a.sources.size(); ++k) a.mean(g, k) = rows[g][k];
        }
        s.attention = std::move(a);
      }
      r.seeds.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  r.summary = summarize(r.seeds);
  return r;
}

std::vector<fs::path> emit_report(const RunReport& report, const std::vector<std::string>& formats,
                                  const fs::path& dir) {
  for (const auto& f : formats) {
    if (f != "json" && f != "csv" && f != "conll") throw ConfigError("unknown report format '" + f + "'");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  auto wants = [&](const char* f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  };
  std::vector<fs::path> written;

  if (wants("json")) {
    write_text(dir / "report.json", report_json(report).dump(2) + "\n");
    write_text(dir / "metrics.json", metrics_json(report).dump(2) + "\n");
    written.push_back("report.json");
    written.push_back("metrics.json");
  }

  if (wants("csv")) {
    std::ostringstream m;
    m << "method,seed,precision,recall,f1,accuracy\n";
    for (const auto& s : report.seeds) {
      for (const auto& [method, x] : s.methods) {
        m << method << ',' << s.seed << ',' << num(x.precision) << ',' << num(x.recall) << ','
          << num(x.f1) << ',' << num(x.accuracy) << '\n';
      }
    }
    for (const auto& [method, stats] : report.summary) {
      for (const char* which : {"mean", "std"}) {
        m << method << ',' << which;
        for (const auto& name : kSummaryMetrics) {
          const auto& v = stats.at(name);
          m << ',' << num(std::string(which) == "mean" ? v.mean : v.std);
        }
        m << '\n';
      }
    }
    write_text(dir / "metrics.csv", m.str());
    written.push_back("metrics.csv");

    std::ostringstream x;
    bool header = false;
    for (const auto& s : report.seeds) {
      if (!s.expertise) continue;
      if (!header) {
        x << "seed,source";
        for (const auto& t : s.expertise->types) x << ',' << t;
        x << '\n';
        header = true;
      }
      for (std::size_t k = 0; k < s.expertise->sources.size(); ++k) {
        x << s.seed << ',' << s.expertise->sources[k];
        for (std::size_t t = 0; t < s.expertise->types.size(); ++t) x << ',' << num(s.expertise->f1(k, t));
        x << '\n';
      }
    }
    write_text(dir / "expertise.csv", x.str());
    written.push_back("expertise.csv");

    // Transposed so that rows are sources and columns target groups.
    std::ostringstream a;
    header = false;
    for (const auto& s : report.seeds) {
      if (!s.attention) continue;
      if (!header) {
        a << "seed,source";
        for (const auto& g : s.attention->groups) a << ',' << g;
        a << '\n';
        header = true;
      }
      for (std::size_t k = 0; k < s.attention->sources.size(); ++k) {
        a << s.seed << ',' << s.attention->sources[k];
        for (std::size_t g = 0; g < s.attention->groups.size(); ++g) a << ',' << num(s.attention->mean(g, k));
        a << '\n';
      }
    }
    write_text(dir / "attention.csv", a.str());
    written.push_back("attention.csv");
  }

  if (wants("conll")) {
    for (const auto& s : report.seeds) {
      const std::string tag = "_seed" + std::to_string(s.seed);
      const std::vector<std::pair<std::string, std::string>> files = {
          {"pseudo_labels.conll", "pseudo_labels" + tag + ".conll"},
          {"pseudo_labels.json", "pseudo_labels" + tag + ".json"},
          {"predictions.conll", "predictions" + tag + ".conll"}};
      for (const auto& [src, dst] : files) {
        const fs::path from = fs::path(s.artifact_dir) / src;
        if (s.artifact_dir.empty() || !fs::exists(from)) {
          log_warning("report: missing artifact " + from.string());
          continue;
        }
        if (fs::absolute(from) == fs::absolute(dir / dst)) continue;
        fs::copy_file(from, dir / dst, fs::copy_options::overwrite_existing, ec);
        if (ec) throw ConfigError("cannot copy " + from.string() + ": " + ec.message());
        written.push_back(dst);
      }
    }
  }

  Json manifest;
  manifest["build_id"] = report.build_id;
  manifest["created"] = report.created;
  manifest["formats"] = formats;
  std::vector<std::string> names;
  for (const auto& p : written) names.push_back(p.string());
  manifest["files"] = names;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  written.insert(written.begin(), "manifest.json");
  return written;
}

}  // namespace mstag

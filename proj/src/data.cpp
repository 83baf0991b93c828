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

#include "mstag/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mstag/errors.hpp"

namespace mstag {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

bool looks_bio(const std::string& t) {
  return t == "O" || ((starts_with(t, "B-") || starts_with(t, "I-")) && t.size() > 2);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> cols;
  std::istringstream ss(line);
  std::string c;
  while (ss >> c) cols.push_back(c);
  return cols;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

// ---------------------------------------------------------------------------
// TagDict

TagDict TagDict::bio(const std::vector<std::string>& observed) {
  std::set<std::string> types;
  for (const auto& t : observed) {
    if (t == "O") continue;
    if (!looks_bio(t)) throw DataError("tag '" + t + "' is not a BIO tag");
    types.insert(t.substr(2));
  }
  TagDict d;
  d.bio_ = true;
  d.tags_.push_back("O");
  for (const auto& type : types) {
    d.tags_.push_back("B-" + type);
    d.tags_.push_back("I-" + type);
  }
  d.index();
  return d;
}

TagDict TagDict::plain(const std::vector<std::string>& observed) {
  std::set<std::string> uniq(observed.begin(), observed.end());
  TagDict d;
  d.bio_ = false;
  d.tags_.assign(uniq.begin(), uniq.end());
  d.index();
  return d;
}

TagDict TagDict::infer(const std::vector<std::string>& observed) {
  const bool all_bio = std::all_of(observed.begin(), observed.end(), looks_bio);
  return all_bio ? bio(observed) : plain(observed);
}

TagDict TagDict::declared(const std::vector<std::string>& tags) {
  TagDict d;
  d.bio_ = !tags.empty() && std::all_of(tags.begin(), tags.end(), looks_bio);
  if (d.bio_ && tags.front() != "O") {
    throw DataError("declared BIO tag set must start with O");
  }
  d.tags_ = tags;
  d.index();
  if (d.bio_) {
    for (std::size_t t = 0; t < d.entity_types_.size(); ++t) {
      if (d.begin_of_[t] < 0 || d.inside_of_[t] < 0) {
        throw DataError("declared tag set lacks B-/I- pair for type " + d.entity_types_[t]);
      }
    }
  }
  return d;
}

void TagDict::index() {
  ids_.clear();
  roles_.assign(tags_.size(), TagRole::kPlain);
  types_of_.assign(tags_.size(), -1);
  entity_types_.clear();
  begin_of_.clear();
  inside_of_.clear();
  std::unordered_map<std::string, int> type_index;
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    const std::string& t = tags_[i];
    if (!ids_.emplace(t, static_cast<int>(i)).second) {
      throw DataError("duplicate tag '" + t + "'");
    }
    if (!bio_) continue;
    if (t == "O") {
      roles_[i] = TagRole::kOutside;
      continue;
    }
    const std::string type = t.substr(2);
    auto [it, fresh] = type_index.emplace(type, static_cast<int>(entity_types_.size()));
    if (fresh) {
      entity_types_.push_back(type);
      begin_of_.push_back(-1);
      inside_of_.push_back(-1);
    }
    types_of_[i] = it->second;
    if (t[0] == 'B') {
      roles_[i] = TagRole::kBegin;
      begin_of_[static_cast<std::size_t>(it->second)] = static_cast<int>(i);
    } else {
      roles_[i] = TagRole::kInside;
      inside_of_[static_cast<std::size_t>(it->second)] = static_cast<int>(i);
    }
  }
}

const std::string& TagDict::tag(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tags_.size()) {
    throw StructuralError("tag id " + std::to_string(id) + " out of range");
  }
  return tags_[static_cast<std::size_t>(id)];
}

std::optional<int> TagDict::find(std::string_view tag) const {
  auto it = ids_.find(std::string(tag));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int TagDict::id(std::string_view tag) const {
  auto found = find(tag);
  if (!found) throw DataError("unknown tag '" + std::string(tag) + "'");
  return *found;
}

TagSeq repair_bio(const TagSeq& tags, const TagDict& dict) {
  if (!dict.is_bio()) return tags;
  TagSeq out = tags;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (dict.role(out[t]) != TagRole::kInside) continue;
    const int type = dict.entity_type(out[t]);
    const bool continues = t > 0 && dict.role(out[t - 1]) != TagRole::kOutside &&
                           dict.entity_type(out[t - 1]) == type;
    if (!continues) out[t] = dict.begin_id(type);
  }
  return out;
}

bool is_valid_bio(const TagSeq& tags, const TagDict& dict) {
  if (!dict.is_bio()) return true;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    if (tags[t] < 0 || static_cast<std::size_t>(tags[t]) >= dict.size()) return false;
    if (dict.role(tags[t]) != TagRole::kInside) continue;
    if (t == 0) return false;
    if (dict.role(tags[t - 1]) == TagRole::kOutside) return false;
    if (dict.entity_type(tags[t - 1]) != dict.entity_type(tags[t])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// CoNLL

RawConll parse_conll_raw(std::istream& in, const ColumnSpec& spec, std::string_view name) {
  RawConll raw;
  std::string line;
  std::size_t lineno = 0;
  std::size_t ncols = 0;
  Sentence cur;
  std::vector<std::string> cur_tags;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.id = std::string(name) + ":" + std::to_string(raw.sentences.size());
    raw.sentences.push_back(std::move(cur));
    if (raw.has_tags) raw.tags.push_back(std::move(cur_tags));
    cur = Sentence{};
    cur_tags.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) {
      flush();
      continue;
    }
    auto cols = split_ws(line);
    if (ncols == 0) {
      ncols = cols.size();
      raw.has_tags = ncols > 1;
    } else if (cols.size() != ncols) {
      throw DataError(std::string(name) + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(ncols) + " columns, found " + std::to_string(cols.size()));
    }
    const auto resolve = [&](int c) {
      const int idx = c < 0 ? static_cast<int>(ncols) + c : c;
      if (idx < 0 || idx >= static_cast<int>(ncols)) {
        throw DataError(std::string(name) + ":" + std::to_string(lineno) +
                        ": column " + std::to_string(c) + " out of range");
      }
      return static_cast<std::size_t>(idx);
    };
    cur.tokens.push_back(cols[resolve(spec.token_col)]);
    if (raw.has_tags) cur_tags.push_back(cols[resolve(spec.tag_col)]);
  }
  flush();
  return raw;
}

std::vector<TagSeq> map_tags(const RawConll& raw, const TagDict& dict) {
  std::vector<TagSeq> out;
  out.reserve(raw.tags.size());
  for (const auto& seq : raw.tags) {
    TagSeq ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) ids.push_back(dict.id(t));
    out.push_back(std::move(ids));
  }
  return out;
}

ConllData parse_conll(std::istream& in, const ColumnSpec& spec, const TagDict* closed,
                      std::string_view name) {
  RawConll raw = parse_conll_raw(in, spec, name);
  ConllData data;
  data.has_tags = raw.has_tags;
  if (closed) {
    data.dict = *closed;
  } else {
    std::vector<std::string> all;
    for (const auto& seq : raw.tags) all.insert(all.end(), seq.begin(), seq.end());
    data.dict = TagDict::infer(all);
  }
  data.tags = map_tags(raw, data.dict);
  data.sentences = std::move(raw.sentences);
  return data;
}

ConllData read_conll_file(const std::filesystem::path& path, const TagDict* closed,
                          const ColumnSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_conll(in, spec, closed, path.stem().string());
}

void write_conll(std::ostream& out, const std::vector<Sentence>& sentences,
                 const std::vector<TagSeq>& tags, const TagDict& dict) {
  const bool with_tags = !tags.empty();
  if (with_tags && tags.size() != sentences.size()) {
    throw StructuralError("write_conll: tag sequence count mismatch");
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (with_tags && tags[i].size() != s.size()) {
      throw StructuralError("write_conll: tag length mismatch in " + s.id);
    }
    for (std::size_t t = 0; t < s.size(); ++t) {
      out << s.tokens[t];
      if (with_tags) out << ' ' << dict.tag(tags[i][t]);
      out << '\n';
    }
    out << '\n';
  }
}

void write_conll_file(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                      const std::vector<TagSeq>& tags, const TagDict& dict) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_conll(out, sentences, tags, dict);
}

// ---------------------------------------------------------------------------
// MultiSourceDataset

MultiSourceDataset::MultiSourceDataset(TagDict dict, std::vector<SourceInfo> sources)
    : dict_(std::move(dict)), sources_(std::move(sources)), annotations_(sources_.size()) {}

std::size_t MultiSourceDataset::add_sentence(Sentence s, bool dedup) {
  if (s.tokens.empty()) throw DataError("empty sentence " + s.id);
  if (dedup) {
    auto it = by_tokens_.find(s.tokens);
    if (it != by_tokens_.end()) return it->second;
  }
  const std::size_t idx = sentences_.size();
  by_tokens_.emplace(s.tokens, idx);
  sentences_.push_back(std::move(s));
  for (auto& per_source : annotations_) per_source.emplace_back();
  gold_.emplace_back();
  return idx;
}

void MultiSourceDataset::annotate(std::size_t source, std::size_t sentence, TagSeq tags) {
  if (source >= sources_.size()) throw StructuralError("unknown source index");
  if (sentence >= sentences_.size()) throw StructuralError("unknown sentence index");
  if (tags.size() != sentences_[sentence].size()) {
    throw DataError("annotation length " + std::to_string(tags.size()) + " != sentence length " +
                    std::to_string(sentences_[sentence].size()) + " for " +
                    sentences_[sentence].id + " from source " + sources_[source].id);
  }
  auto& slot = annotations_[source][sentence];
  if (!slot) slot = std::move(tags);
}

void MultiSourceDataset::set_gold(std::size_t sentence, TagSeq tags) {
  if (sentence >= sentences_.size()) throw StructuralError("unknown sentence index");
  if (tags.size() != sentences_[sentence].size()) throw DataError("gold length mismatch");
  gold_[sentence] = std::move(tags);
}

const TagSeq* MultiSourceDataset::annotation(std::size_t source, std::size_t sentence) const {
  const auto& slot = annotations_.at(source).at(sentence);
  return slot ? &*slot : nullptr;
}

const TagSeq* MultiSourceDataset::gold(std::size_t sentence) const {
  const auto& slot = gold_.at(sentence);
  return slot ? &*slot : nullptr;
}

bool MultiSourceDataset::has_gold() const {
  return !gold_.empty() && std::all_of(gold_.begin(), gold_.end(),
                                       [](const auto& g) { return g.has_value(); });
}

std::vector<std::size_t> MultiSourceDataset::annotated_by(std::size_t source) const {
  std::vector<std::size_t> out;
  const auto& per = annotations_.at(source);
  for (std::size_t i = 0; i < per.size(); ++i) {
    if (per[i]) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> MultiSourceDataset::find(const std::vector<std::string>& tokens) const {
  auto it = by_tokens_.find(tokens);
  if (it == by_tokens_.end()) return std::nullopt;
  return it->second;
}

void MultiSourceDataset::validate() const {
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    for (std::size_t i = 0; i < sentences_.size(); ++i) {
      const auto& a = annotations_[k][i];
      if (!a) continue;
      if (a->size() != sentences_[i].size()) {
        throw DataError("annotation length mismatch for " + sentences_[i].id);
      }
      for (int t : *a) {
        if (t < 0 || static_cast<std::size_t>(t) >= dict_.size()) {
          throw DataError("tag id out of range in " + sentences_[i].id);
        }
      }
    }
  }
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    if (gold_[i] && gold_[i]->size() != sentences_[i].size()) {
      throw DataError("gold length mismatch for " + sentences_[i].id);
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest

std::filesystem::path Manifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    for (const auto& s : j.value("sources", nlohmann::json::array())) {
      ManifestSource src;
      src.id = s.at("id").is_string() ? s.at("id").get<std::string>()
                                      : std::to_string(s.at("id").get<long long>());
      src.name = s.value("name", src.id);
      src.path = s.at("path").get<std::string>();
      if (s.contains("dev_path")) src.dev_path = s.at("dev_path").get<std::string>();
      m.sources.push_back(std::move(src));
    }
    auto opt = [&](const char* key, std::optional<std::string>& out) {
      if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<std::string>();
    };
    opt("gold_path", m.gold_path);
    opt("dev_path", m.dev_path);
    opt("test_path", m.test_path);
    opt("target_path", m.target_path);
    if (j.contains("tag_set")) m.tag_set = j.at("tag_set").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  // A gold-only manifest is valid input for annotator simulation.
  if (m.sources.empty() && !m.gold_path) throw ConfigError("manifest lists no sources");
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : m.sources) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["name"] = s.name;
    e["path"] = s.path;
    if (s.dev_path) e["dev_path"] = *s.dev_path;
    j["sources"].push_back(e);
  }
  if (m.gold_path) j["gold_path"] = *m.gold_path;
  if (m.dev_path) j["dev_path"] = *m.dev_path;
  if (m.test_path) j["test_path"] = *m.test_path;
  if (m.target_path) j["target_path"] = *m.target_path;
  if (m.tag_set) j["tag_set"] = *m.tag_set;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::vector<std::size_t>> split_folds(std::size_t n, std::size_t z, Rng& rng) {
  if (z == 0) throw ConfigError("split_folds: z must be at least 1");
  if (z > n) {
    throw ConfigError("split_folds: " + std::to_string(z) + " folds requested for " +
                      std::to_string(n) + " sentences");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(z);
  const std::size_t base = n / z;
  const std::size_t extra = n % z;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < z; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(folds[f].begin(), folds[f].end());
    pos += len;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Vocabularies

std::string normalize_word(std::string_view token) {
  std::string out(token);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<char32_t> utf8_codepoints(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xF0 && c < 0xF8) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = c < 0xF0 ? 3 : 1;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    if (i + len > s.size()) len = 1;
    if (len == 1) {
      cp = c;
    } else {
      for (std::size_t k = 1; k < len; ++k) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
      }
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string codepoint_key(char32_t c) { return std::to_string(static_cast<std::uint32_t>(c)); }

Vocab::Vocab() { add("<unk>"); }

int Vocab::add(const std::string& key) {
  auto [it, fresh] = ids_.emplace(key, static_cast<int>(keys_.size()));
  if (fresh) keys_.push_back(key);
  return it->second;
}

int Vocab::lookup(const std::string& key) const {
  auto it = ids_.find(key);
  return it == ids_.end() ? 0 : it->second;
}

Vocab Vocab::from_keys(const std::vector<std::string>& keys) {
  Vocab v;
  v.keys_.clear();
  v.ids_.clear();
  for (const auto& k : keys) v.add(k);
  return v;
}

Vocabularies Vocabularies::build(const std::vector<const Sentence*>& sentences) {
  std::set<std::string> words;
  std::set<char32_t> chars;
  for (const Sentence* s : sentences) {
    for (const auto& tok : s->tokens) {
      words.insert(normalize_word(tok));
      for (char32_t c : utf8_codepoints(tok)) chars.insert(c);
    }
  }
  Vocabularies v;
  for (const auto& w : words) v.words.add(w);
  for (char32_t c : chars) v.chars.add(codepoint_key(c));
  return v;
}

EncodedSentence Vocabularies::encode(const Sentence& s) const {
  EncodedSentence e;
  e.words.reserve(s.size());
  e.chars.reserve(s.size());
  for (const auto& tok : s.tokens) {
    e.words.push_back(words.lookup(normalize_word(tok)));
    std::vector<int> cs;
    for (char32_t c : utf8_codepoints(tok)) cs.push_back(chars.lookup(codepoint_key(c)));
    e.chars.push_back(std::move(cs));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Sparse classification data

RawSparse parse_sparse_raw(std::istream& in, int dimension, std::string_view name) {
  RawSparse raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto cols = split_ws(line);
    SparseFeatures f;
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto colon = cols[c].find(':');
      const auto where = std::string(name) + ":" + std::to_string(lineno);
      if (colon == std::string::npos) throw DataError(where + ": expected index:count");
      int idx = 0;
      double count = 0.0;
      try {
        idx = std::stoi(cols[c].substr(0, colon));
        count = std::stod(cols[c].substr(colon + 1));
      } catch (const std::exception&) {
        throw DataError(where + ": malformed feature '" + cols[c] + "'");
      }
      if (idx < 0 || idx >= dimension) {
        throw DataError(where + ": feature index " + std::to_string(idx) + " out of range");
      }
      if (count < 0.0) throw DataError(where + ": negative count");
      f.entries.emplace_back(idx, count);
    }
    std::sort(f.entries.begin(), f.entries.end());
    raw.labels.push_back(cols[0]);
    raw.features.push_back(std::move(f));
  }
  return raw;
}

RawSparse read_sparse_file(const std::filesystem::path& path, int dimension) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_sparse_raw(in, dimension, path.stem().string());
}

ClassificationData to_classification(const RawSparse& raw, const TagDict& labels, int dimension) {
  ClassificationData d;
  d.labels = labels;
  d.dimension = dimension;
  for (std::size_t i = 0; i < raw.features.size(); ++i) {
    ClassExample ex;
    ex.features = raw.features[i];
    ex.label = raw.labels[i] == "?" ? -1 : labels.id(raw.labels[i]);
    d.examples.push_back(std::move(ex));
  }
  return d;
}

void write_sparse(std::ostream& out, const ClassificationData& data) {
  for (const auto& ex : data.examples) {
    out << (ex.label < 0 ? std::string("?") : data.labels.tag(ex.label));
    for (const auto& [idx, count] : ex.features.entries) out << ' ' << idx << ':' << count;
    out << '\n';
  }
}

}  // namespace mstag

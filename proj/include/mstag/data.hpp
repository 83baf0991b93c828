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

#ifndef MSTAG_DATA_HPP_
#define MSTAG_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mstag/numerics.hpp"

namespace mstag {

using TagSeq = std::vector<int>;

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
};

enum class TagRole { kOutside, kBegin, kInside, kPlain };

// Bijection between tag strings and dense ids. In BIO mode id 0 is "O" and
// every entity type owns a B- and an I- tag; plain mode (POS tags, class
// labels) has no structure.
class TagDict {
 public:
  TagDict() = default;

  // Canonical BIO dictionary: O, then B-/I- pairs per entity type in
  // lexicographic type order. Missing B-/I- partners are added.
  static TagDict bio(const std::vector<std::string>& observed);
  // Sorted, deduplicated plain tag set.
  static TagDict plain(const std::vector<std::string>& observed);
  // BIO if every tag is O / B-x / I-x, plain otherwise.
  static TagDict infer(const std::vector<std::string>& observed);
  // Keeps the given order. BIO lists must start with O and be closed under
  // B-/I- pairing.
  static TagDict declared(const std::vector<std::string>& tags);

  bool is_bio() const { return bio_; }
  std::size_t size() const { return tags_.size(); }
  const std::string& tag(int id) const;
  std::optional<int> find(std::string_view tag) const;
  int id(std::string_view tag) const;  // throws DataError
  const std::vector<std::string>& tags() const { return tags_; }

  TagRole role(int id) const { return roles_.at(static_cast<std::size_t>(id)); }
  // Entity type index for B-/I- tags, -1 otherwise.
  int entity_type(int id) const { return types_of_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& entity_types() const { return entity_types_; }
  int begin_id(int type) const { return begin_of_.at(static_cast<std::size_t>(type)); }
  int inside_id(int type) const { return inside_of_.at(static_cast<std::size_t>(type)); }

  friend bool operator==(const TagDict& a, const TagDict& b) {
    return a.bio_ == b.bio_ && a.tags_ == b.tags_;
  }

 private:
  void index();

  bool bio_ = true;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> ids_;
  std::vector<TagRole> roles_;
  std::vector<int> types_of_;
  std::vector<std::string> entity_types_;
  std::vector<int> begin_of_;
  std::vector<int> inside_of_;
};

// Any I-X not preceded by B-X or I-X becomes B-X. Identity on plain dicts.
TagSeq repair_bio(const TagSeq& tags, const TagDict& dict);
bool is_valid_bio(const TagSeq& tags, const TagDict& dict);

// ---------------------------------------------------------------------------
// CoNLL column files.

struct ColumnSpec {
  int token_col = 0;
  int tag_col = -1;  // negative counts from the last column
};

struct RawConll {
  std::vector<Sentence> sentences;
  std::vector<std::vector<std::string>> tags;  // empty when the file has one column
  bool has_tags = false;
};

struct ConllData {
  std::vector<Sentence> sentences;
  std::vector<TagSeq> tags;
  TagDict dict;
  bool has_tags = false;
};

// Whitespace-separated columns, blank line between sentences. Sentence ids
// are "<name>:<index>". Throws DataError with the line number on ragged
// columns.
RawConll parse_conll_raw(std::istream& in, const ColumnSpec& spec = {},
                         std::string_view name = "conll");
// With a closed dict, tags must already exist in it; otherwise the dict is
// inferred from the observed tags.
ConllData parse_conll(std::istream& in, const ColumnSpec& spec = {},
                      const TagDict* closed = nullptr, std::string_view name = "conll");
ConllData read_conll_file(const std::filesystem::path& path, const TagDict* closed = nullptr,
                          const ColumnSpec& spec = {});
std::vector<TagSeq> map_tags(const RawConll& raw, const TagDict& dict);

// "token tag" lines, single space, blank line after every sentence. With no
// tags the output has a single token column.
void write_conll(std::ostream& out, const std::vector<Sentence>& sentences,
                 const std::vector<TagSeq>& tags, const TagDict& dict);
void write_conll_file(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                      const std::vector<TagSeq>& tags, const TagDict& dict);

// ---------------------------------------------------------------------------
// Multi-source annotations.

struct SourceInfo {
  std::string id;
  std::string name;
};

class MultiSourceDataset {
 public:
  MultiSourceDataset() = default;
  MultiSourceDataset(TagDict dict, std::vector<SourceInfo> sources);

  // With dedup, a sentence whose token sequence is already present returns
  // the existing index.
  std::size_t add_sentence(Sentence s, bool dedup);
  void annotate(std::size_t source, std::size_t sentence, TagSeq tags);
  void set_gold(std::size_t sentence, TagSeq tags);

  const TagDict& dict() const { return dict_; }
  const std::vector<Sentence>& sentences() const { return sentences_; }
  const std::vector<SourceInfo>& sources() const { return sources_; }
  std::size_t num_sources() const { return sources_.size(); }
  std::size_t num_sentences() const { return sentences_.size(); }

  // nullptr when source k did not annotate sentence i.
  const TagSeq* annotation(std::size_t source, std::size_t sentence) const;
  const TagSeq* gold(std::size_t sentence) const;
  bool has_gold() const;
  std::vector<std::size_t> annotated_by(std::size_t source) const;
  std::optional<std::size_t> find(const std::vector<std::string>& tokens) const;

  void validate() const;

 private:
  TagDict dict_;
  std::vector<SourceInfo> sources_;
  std::vector<Sentence> sentences_;
  std::vector<std::vector<std::optional<TagSeq>>> annotations_;  // [source][sentence]
  std::vector<std::optional<TagSeq>> gold_;
  std::map<std::vector<std::string>, std::size_t> by_tokens_;
};

// ---------------------------------------------------------------------------
// Dataset manifest (JSON): {sources: [{id, name, path, dev_path?}], gold_path?,
// dev_path?, test_path?, target_path?, tag_set?}. Relative paths resolve
// against the manifest's directory.

struct ManifestSource {
  std::string id;
  std::string name;
  std::string path;
  std::optional<std::string> dev_path;
};

struct Manifest {
  std::vector<ManifestSource> sources;
  std::optional<std::string> gold_path;
  std::optional<std::string> dev_path;
  std::optional<std::string> test_path;
  std::optional<std::string> target_path;
  std::optional<std::vector<std::string>> tag_set;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// Random partition of {0..n-1} into z folds whose sizes differ by at most one.
// Each fold is sorted.
std::vector<std::vector<std::size_t>> split_folds(std::size_t n, std::size_t z, Rng& rng);

// ---------------------------------------------------------------------------
// Word and character vocabularies. Words are lowercased (ASCII) before lookup;
// characters keep their case. Id 0 is UNK in both.

std::string normalize_word(std::string_view token);
std::vector<char32_t> utf8_codepoints(std::string_view s);

class Vocab {
 public:
  Vocab();
  int add(const std::string& key);
  int lookup(const std::string& key) const;  // 0 when unknown
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }
  static Vocab from_keys(const std::vector<std::string>& keys);

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, int> ids_;
};

std::string codepoint_key(char32_t c);

struct EncodedSentence {
  std::vector<int> words;
  std::vector<std::vector<int>> chars;

  std::size_t size() const { return words.size(); }
};

struct Vocabularies {
  Vocab words;
  Vocab chars;

  static Vocabularies build(const std::vector<const Sentence*>& sentences);
  EncodedSentence encode(const Sentence& s) const;
};

// ---------------------------------------------------------------------------
// Bag-of-words classification data: one example per line,
// "<label> <index>:<count> ...". A label of "?" marks an unlabeled example.

struct SparseFeatures {
  std::vector<std::pair<int, double>> entries;
};

struct ClassExample {
  SparseFeatures features;
  int label = -1;
};

struct ClassificationData {
  std::vector<ClassExample> examples;
  TagDict labels;
  int dimension = 5000;
};

struct RawSparse {
  std::vector<SparseFeatures> features;
  std::vector<std::string> labels;
};

RawSparse parse_sparse_raw(std::istream& in, int dimension, std::string_view name = "sparse");
RawSparse read_sparse_file(const std::filesystem::path& path, int dimension);
ClassificationData to_classification(const RawSparse& raw, const TagDict& labels, int dimension);
void write_sparse(std::ostream& out, const ClassificationData& data);

}  // namespace mstag

#endif  // MSTAG_DATA_HPP_

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "score/common.hpp"
#include "score/corpus.hpp"

namespace score::scoreh {

// One syntax token and the highlighting scopes active over it,
// outermost first. Scope strings are dot-separated atom paths with the
// trailing language atom already removed.
struct ScopeTokenPair {
  std::vector<std::string> scopes;
  ByteSpan span;
};

// Drops trailing language atoms (python/shell/bash/perl) from a scope
// path; a scope that was only a language atom collapses to "source".
std::string truncate_language_atom(const std::string& scope);

// Rule-table tokenizer; covers every non-whitespace byte of the input
// with exactly one token. Lines longer than 1 MiB degrade to a single
// source-scoped token.
std::vector<ScopeTokenPair> tokenize_scopes(std::string_view source,
                                            Language language);

struct ScoreHPair {
  std::vector<std::string> scopes;
  std::string token;
};

struct ScoreHFeatures {
  std::string sha256;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;
  std::vector<ScoreHPair> pairs;
};

ScoreHFeatures extract_h(std::string_view source,
                         const corpus::ScriptSample& sample);

// Atom id space: 0 = padding, 1 = unknown, observed atoms from 2,
// ordered by descending frequency then lexicographically.
class AtomVocab {
 public:
  static constexpr uint32_t kPad = 0;
  static constexpr uint32_t kUnk = 1;

  static AtomVocab build(const std::vector<ScoreHFeatures>& docs);

  uint32_t id_of(const std::string& atom) const {
    auto it = index_.find(atom);
    return it == index_.end() ? kUnk : it->second;
  }
  size_t size() const { return atoms_.size() + 2; }  // including pad/unk
  const std::vector<std::string>& atoms() const { return atoms_; }

  std::string serialize() const;
  static AtomVocab deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static AtomVocab load(const std::filesystem::path& path);

  // sha256 hex of the serialized form; embedded in encoded feature
  // files so trainers can reject mismatched encodings.
  std::string hash() const;

 private:
  std::vector<std::string> atoms_;
  std::map<std::string, uint32_t> index_;
};

struct ScoreHCaps {
  uint32_t p_cap = 2048;        // max pairs per script
  uint32_t l_a = 24;            // atom window length
  uint32_t l_b = 128;           // byte window length
  uint32_t atoms_per_scope = 6; // atoms allotted to one scope
  bool operator==(const ScoreHCaps&) const = default;
};

struct EncodedScoreH {
  uint32_t n_pairs = 0;
  std::vector<uint32_t> atom_ids;  // n_pairs * l_a
  std::vector<uint32_t> byte_ids;  // n_pairs * l_b; byte value + 2
};

EncodedScoreH encode_h(const ScoreHFeatures& features, const AtomVocab& vocab,
                       const ScoreHCaps& caps);

// JSON-lines feature documents.
void save_h_features(const std::vector<ScoreHFeatures>& docs,
                     const std::filesystem::path& path);
std::vector<ScoreHFeatures> load_h_features(const std::filesystem::path& path);

struct EncodedHRecord {
  std::string sha256;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;
  EncodedScoreH enc;
};

struct EncodedHFile {
  ScoreHCaps caps;
  std::string vocab_hash;
  std::vector<EncodedHRecord> records;
};

// Binary encoded form, magic "SCRH", little-endian u32 ids.
void save_encoded_h(const EncodedHFile& file,
                    const std::filesystem::path& path);
EncodedHFile load_encoded_h(const std::filesystem::path& path);

}  // namespace score::scoreh

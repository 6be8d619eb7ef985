#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "score/common.hpp"
#include "score/corpus.hpp"
#include "score/gbdt.hpp"
#include "score/grl_model.hpp"
#include "score/score_h.hpp"
#include "score/score_t.hpp"
#include "score/sm_model.hpp"

namespace score::pipeline {

// ----------------------------------------------------------- split views

// Resolves one split part ("train", "val", "test", or "all") to sample
// pointers in manifest order. Unknown ids in the split throw FormatError.
std::vector<const corpus::ScriptSample*> select_split(
    const corpus::CorpusManifest& manifest, const corpus::SplitSpec& split,
    std::string_view part);

// ----------------------------------------------------------- extraction

struct ExtractFailure {
  std::string path;
  std::string reason;
};

// Reads each sample file and extracts features, preserving input order.
// Files that fail (unreadable, binary, unsupported language, content
// drift against the recorded hash) are collected, not fatal.
std::vector<scoreh::ScoreHFeatures> extract_h_files(
    const std::vector<const corpus::ScriptSample*>& samples,
    std::vector<ExtractFailure>* failures);

std::vector<scoret::ScoreTFeatures> extract_t_files(
    const std::vector<const corpus::ScriptSample*>& samples,
    const scoret::ScoreTCaps& caps, const scoret::UnifiedVocabMap& map,
    std::vector<ExtractFailure>* failures);

// ------------------------------------------------------------- encoding

scoreh::EncodedHFile encode_h_all(const std::vector<scoreh::ScoreHFeatures>& docs,
                                  const scoreh::AtomVocab& vocab,
                                  const scoreh::ScoreHCaps& caps);

scoret::EncodedTFile encode_t_all(const std::vector<scoret::ScoreTFeatures>& docs,
                                  scoret::EncodedTForm form,
                                  const scoret::KindVocab& vocab,
                                  const scoret::ScoreTCaps& caps);

// ------------------------------------------------------ model consumption

std::vector<sm::TokenSeq> to_token_seqs(const scoreh::EncodedHFile& file);
std::vector<sm::TokenSeq> to_token_seqs(const scoret::EncodedTFile& file,
                                        const scoret::KindVocab& vocab);
std::vector<grl::GrlGraph> to_grl_graphs(const scoret::EncodedTFile& file);

// ------------------------------------------------------------ sm bundles

// A trained sequential detector on disk is a directory:
//   config.json   feature kind, traversal, caps, dims, windows
//   vocab.txt     atom vocabulary (scope-token) or kind vocabulary (tree)
//   model.bin     checkpoint, digest-bound to config + vocabulary
struct SmBundle {
  sm::SmConfig cfg;
  scoreh::ScoreHCaps h_caps;
  scoret::ScoreTCaps t_caps;
  scoreh::AtomVocab atom_vocab;
  scoret::KindVocab kind_vocab;
  sm::SmModel<float> model;

  uint32_t syn_window() const {
    return cfg.feature_kind == sm::FeatureKind::score_h
               ? h_caps.l_a
               : uint32_t(sm::kKindCharWindow);
  }
  uint32_t byte_window() const {
    return cfg.feature_kind == sm::FeatureKind::score_h ? h_caps.l_b
                                                        : t_caps.b_cap;
  }
  std::string vocab_hash() const {
    return cfg.feature_kind == sm::FeatureKind::score_h ? atom_vocab.hash()
                                                        : kind_vocab.hash();
  }
  uint32_t syn_rows() const {
    return cfg.feature_kind == sm::FeatureKind::score_h
               ? uint32_t(atom_vocab.size())
               : 258;
  }

  void init_model() {
    model.init(cfg, syn_rows(), syn_window(), byte_window(), vocab_hash());
  }
};

void save_sm_bundle(const SmBundle& bundle, const std::filesystem::path& dir);
SmBundle load_sm_bundle(const std::filesystem::path& dir);

// ----------------------------------------------------------- grl bundles

struct GrlBundle {
  grl::GrlConfig cfg;
  scoret::ScoreTCaps t_caps;
  scoret::KindVocab kind_vocab;
  grl::GrlModel<float> model;

  void init_model() {
    model.init(cfg, uint32_t(kind_vocab.size()), kind_vocab.hash());
  }
};

void save_grl_bundle(const GrlBundle& bundle,
                     const std::filesystem::path& dir);
GrlBundle load_grl_bundle(const std::filesystem::path& dir);

// --------------------------------------------------------- embedding files

struct EmbeddingRecord {
  std::string sha256;
  Label label = Label::benign;
  std::string family;
  std::vector<double> embedding;
};

void save_embeddings(const std::vector<EmbeddingRecord>& records,
                     const std::filesystem::path& path);
std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path);

std::vector<EmbeddingRecord> embed_graphs(GrlBundle& bundle,
                                          const std::vector<grl::GrlGraph>& graphs);

// ------------------------------------------------------------ scan & bench

struct ScanOutcome {
  std::string path;
  bool ok = false;
  std::string error;  // set when !ok
  std::string sha256;
  double score = 0.0;
  Label label = Label::benign;
  double threshold = 0.5;
  double latency_ms = 0.0;
};

// End-to-end verdict for one file: read, extract, encode, infer.
ScanOutcome scan_file_sm(SmBundle& bundle, const std::filesystem::path& path,
                         std::optional<double> threshold);

ScanOutcome scan_file_grl(GrlBundle& bundle, const gbdt::TreeEnsemble& clf,
                          const std::filesystem::path& path, double threshold);

std::string scan_json_line(const ScanOutcome& outcome);

struct BenchStats {
  size_t n = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

BenchStats bench_sm(SmBundle& bundle,
                    const std::vector<const corpus::ScriptSample*>& samples,
                    size_t limit);

}  // namespace score::pipeline

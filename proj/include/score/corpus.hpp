#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "score/common.hpp"

namespace score::corpus {

struct ScriptSample {
  std::string sha256;  // 64-char lowercase hex of the file content
  std::string path;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;  // empty when unknown/not applicable
  uint64_t size_bytes = 0;

  bool operator==(const ScriptSample&) const = default;
};

struct CorpusManifest {
  std::vector<ScriptSample> samples;  // sorted by sha256, unique
  uint32_t schema_version = 1;
  std::string created_at;  // ISO 8601; never part of the manifest body
};

struct IngestSkip {
  std::string path;
  std::string reason;
};

struct IngestReport {
  std::vector<IngestSkip> skipped;
  size_t n_files_seen = 0;
  size_t n_duplicates = 0;
};

struct LabelAssignment {
  Label label = Label::benign;
  std::string family;
};

// Exact-path overrides applied during ingest; unlisted files default
// to benign with no family.
using LabelMap = std::map<std::string, LabelAssignment>;

struct SplitSpec {
  uint64_t seed = 0;
  std::array<uint32_t, 3> ratio = {10, 1, 1};
  std::vector<std::string> train;  // sha256 ids, sorted
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::vector<std::string> warnings;
};

struct HistogramBucket {
  double lo = 0.0;
  double hi = 0.0;  // exclusive; hi < lo marks an open-ended bucket
  uint64_t count = 0;
};

struct CorpusStats {
  uint64_t n_samples = 0;
  std::map<std::string, uint64_t> per_language;
  std::map<std::string, uint64_t> per_label;
  std::map<std::string, uint64_t> per_family;
  std::vector<HistogramBucket> size_histogram;
  std::vector<HistogramBucket> entropy_histogram;
};

struct SynthProfile {
  std::filesystem::path out_dir;
  uint32_t n_benign = 0;
  uint32_t n_malicious = 0;
  std::vector<Language> languages = {Language::bash, Language::python};
  std::vector<std::string> families = {"downloader", "reverse_shell", "miner",
                                       "stealer"};
  double obfuscation_rate = 0.0;
  // Benign filler statements prepended to every script; used to push
  // payloads deep into the file.
  uint32_t preamble_statements = 0;
};

// Language detection: extension first, then shebang line, else unknown.
Language infer_language(const std::string& path, std::string_view content);

// Shannon entropy of the byte distribution, in bits per byte (0..8).
double entropy_bits(std::string_view bytes);

struct IngestResult {
  CorpusManifest manifest;
  IngestReport report;
};

IngestResult ingest(const std::vector<std::filesystem::path>& paths,
                    const LabelMap& labels = {});

SplitSpec split(const CorpusManifest& manifest,
                const std::array<uint32_t, 3>& ratio, uint64_t seed);

// Reads each sample's file to compute the entropy histogram.
CorpusStats stats(const CorpusManifest& manifest);

CorpusManifest synthesize(const SynthProfile& profile, uint64_t seed);

// Manifest body is JSON lines (one sample per line, LF, sorted by
// sha256); schema_version/created_at live in a "<path>.meta.json"
// sidecar so the body is byte-stable for a fixed corpus.
void save_manifest(const CorpusManifest& manifest,
                   const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

std::string stats_to_json(const CorpusStats& stats);

// Single-line JSON used by both the stats file and the CLI.
std::string sample_to_json(const ScriptSample& sample);
ScriptSample sample_from_json(const std::string& line);

}  // namespace score::corpus

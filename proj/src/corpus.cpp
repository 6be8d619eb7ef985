#include "score/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "score/util/io.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

namespace score::corpus {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Language infer_language(const std::string& path, std::string_view content) {
  auto ext = fs::path(path).extension().string();
  if (ext == ".sh" || ext == ".bash") return Language::bash;
  if (ext == ".py") return Language::python;
  if (ext == ".pl" || ext == ".pm") return Language::perl;

  if (content.substr(0, 2) == "#!") {
    size_t eol = content.find('\n');
    std::string_view shebang = content.substr(0, eol);
    if (shebang == "#!/bin/bash" || shebang == "#!/bin/sh" ||
        shebang == "#!/usr/bin/env bash")
      return Language::bash;
    if (shebang.find("python") != std::string_view::npos)
      return Language::python;
    if (shebang.find("perl") != std::string_view::npos) return Language::perl;
    if (shebang.find("bash") != std::string_view::npos ||
        shebang.find("/sh") != std::string_view::npos)
      return Language::bash;
  }
  return Language::unknown;
}

double entropy_bits(std::string_view bytes) {
  if (bytes.empty()) return 0.0;
  std::array<uint64_t, 256> freq{};
  for (unsigned char c : bytes) ++freq[c];
  double n = double(bytes.size());
  double h = 0.0;
  for (uint64_t f : freq) {
    if (f == 0) continue;
    double p = double(f) / n;
    h -= p * std::log2(p);
  }
  return h;
}

IngestResult ingest(const std::vector<fs::path>& paths,
                    const LabelMap& labels) {
  if (paths.empty()) throw ConfigError("ingest: empty path set");

  std::vector<fs::path> files;
  for (const auto& p : paths) {
    auto found = collect_files(p);
    files.insert(files.end(), found.begin(), found.end());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("ingest: no files under given paths");

  IngestResult result;
  result.report.n_files_seen = files.size();
  std::set<std::string> seen;
  for (const auto& file : files) {
    std::string content;
    try {
      content = read_file(file);
    } catch (const IoError& e) {
      result.report.skipped.push_back({file.string(), e.what()});
      continue;
    }
    ScriptSample sample;
    sample.sha256 = sha256_hex(content);
    if (!seen.insert(sample.sha256).second) {
      ++result.report.n_duplicates;
      continue;
    }
    sample.path = file.string();
    sample.language = infer_language(sample.path, content);
    sample.size_bytes = content.size();
    if (auto it = labels.find(sample.path); it != labels.end()) {
      sample.label = it->second.label;
      sample.family = it->second.family;
    }
    result.manifest.samples.push_back(std::move(sample));
  }
  std::sort(result.manifest.samples.begin(), result.manifest.samples.end(),
            [](const ScriptSample& a, const ScriptSample& b) {
              return a.sha256 < b.sha256;
            });

  result.manifest.created_at = iso8601_now();
  return result;
}

namespace {

// Largest-remainder allocation of n slots to the ratio parts; stays
// within one sample of the exact proportional share.
std::array<size_t, 3> allocate(size_t n, const std::array<uint32_t, 3>& ratio) {
  double total = double(ratio[0]) + double(ratio[1]) + double(ratio[2]);
  std::array<size_t, 3> out{};
  std::array<double, 3> rem{};
  size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = double(n) * double(ratio[i]) / total;
    out[i] = size_t(std::floor(exact));
    rem[i] = exact - double(out[i]);
    used += out[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rem[a] > rem[b]; });
  for (size_t k = 0; used < n; ++k, ++used) ++out[order[k % 3]];
  return out;
}

}  // namespace

SplitSpec split(const CorpusManifest& manifest,
                const std::array<uint32_t, 3>& ratio, uint64_t seed) {
  if (ratio[0] + ratio[1] + ratio[2] == 0)
    throw ConfigError("split: ratio sums to zero");

  SplitSpec spec;
  spec.seed = seed;
  spec.ratio = ratio;

  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& s : manifest.samples) {
    std::string key =
        std::string(to_string(s.language)) + "/" + to_string(s.label);
    strata[key].push_back(s.sha256);
  }

  Rng base(seed);
  for (auto& [key, shas] : strata) {
    std::sort(shas.begin(), shas.end());
    uint64_t salt = 0;
    for (char c : key) salt = salt * 131 + uint64_t(uint8_t(c));
    Rng rng = base.fork(salt);
    rng.shuffle(shas);

    if (shas.size() < 3) {
      spec.warnings.push_back("stratum " + key + " has fewer than 3 samples; all assigned to train");
      spec.train.insert(spec.train.end(), shas.begin(), shas.end());
      continue;
    }
    auto counts = allocate(shas.size(), ratio);
    size_t i = 0;
    for (size_t k = 0; k < counts[0]; ++k) spec.train.push_back(shas[i++]);
    for (size_t k = 0; k < counts[1]; ++k) spec.val.push_back(shas[i++]);
    for (size_t k = 0; k < counts[2]; ++k) spec.test.push_back(shas[i++]);
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.val.begin(), spec.val.end());
  std::sort(spec.test.begin(), spec.test.end());
  return spec;
}

namespace {

size_t size_bucket(uint64_t size) {
  if (size == 0) return 0;
  size_t idx = 1;
  uint64_t hi = 2;
  while (idx < 20 && size >= hi) {
    ++idx;
    hi <<= 1;
  }
  return idx;
}

}  // namespace

CorpusStats stats(const CorpusManifest& manifest) {
  CorpusStats out;
  out.n_samples = manifest.samples.size();

  out.size_histogram.resize(21);
  out.size_histogram[0] = {0.0, 1.0, 0};
  double lo = 1.0;
  for (size_t i = 1; i < 21; ++i) {
    double hi = lo * 2.0;
    out.size_histogram[i] = {lo, i == 20 ? -1.0 : hi, 0};
    lo = hi;
  }
  out.entropy_histogram.resize(16);
  for (size_t i = 0; i < 16; ++i)
    out.entropy_histogram[i] = {0.5 * double(i), 0.5 * double(i + 1), 0};

  for (const auto& s : manifest.samples) {
    ++out.per_language[to_string(s.language)];
    ++out.per_label[to_string(s.label)];
    if (!s.family.empty()) ++out.per_family[s.family];
    ++out.size_histogram[size_bucket(s.size_bytes)].count;

    double e = 0.0;
    try {
      e = entropy_bits(read_file(s.path));
    } catch (const IoError&) {
      e = 0.0;
    }
    size_t b = std::min(size_t(e / 0.5), size_t(15));
    ++out.entropy_histogram[b].count;
  }
  return out;
}

std::string sample_to_json(const ScriptSample& sample) {
  ordered_json j;
  j["sha256"] = sample.sha256;
  j["path"] = sample.path;
  j["language"] = to_string(sample.language);
  j["label"] = to_string(sample.label);
  if (!sample.family.empty()) j["family"] = sample.family;
  j["size_bytes"] = sample.size_bytes;
  return j.dump();
}

ScriptSample sample_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest line: ") + e.what());
  }
  ScriptSample s;
  try {
    s.sha256 = j.at("sha256").get<std::string>();
    if (!is_hex_digest(s.sha256))
      throw FormatError("manifest: bad sha256: " + s.sha256);
    s.path = j.at("path").get<std::string>();
    s.language = language_from_string(j.at("language").get<std::string>());
    s.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("family")) s.family = j["family"].get<std::string>();
    s.size_bytes = j.at("size_bytes").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest line: ") + e.what());
  }
  return s;
}

void save_manifest(const CorpusManifest& manifest, const fs::path& path) {
  std::string body;
  for (const auto& s : manifest.samples) {
    body += sample_to_json(s);
    body += '\n';
  }
  write_file(path, body);

  ordered_json meta;
  meta["schema_version"] = manifest.schema_version;
  meta["created_at"] = manifest.created_at;
  write_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

CorpusManifest load_manifest(const fs::path& path) {
  CorpusManifest m;
  for (const auto& line : split_lines(read_file(path))) {
    if (line.empty()) continue;
    m.samples.push_back(sample_from_json(line));
  }
  fs::path meta_path = path.string() + ".meta.json";
  std::error_code ec;
  if (fs::exists(meta_path, ec)) {
    auto meta = ordered_json::parse(read_file(meta_path));
    m.schema_version = meta.value("schema_version", 1u);
    m.created_at = meta.value("created_at", "");
  }
  return m;
}

void save_split(const SplitSpec& split, const fs::path& path) {
  ordered_json j;
  j["seed"] = split.seed;
  j["ratio"] = split.ratio;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  j["warnings"] = split.warnings;
  write_file(path, j.dump(2) + "\n");
}

SplitSpec load_split(const fs::path& path) {
  auto j = ordered_json::parse(read_file(path));
  SplitSpec s;
  s.seed = j.at("seed").get<uint64_t>();
  auto r = j.at("ratio");
  s.ratio = {r.at(0).get<uint32_t>(), r.at(1).get<uint32_t>(),
             r.at(2).get<uint32_t>()};
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  if (j.contains("warnings"))
    s.warnings = j["warnings"].get<std::vector<std::string>>();
  return s;
}

namespace {

ordered_json histogram_to_json(const std::vector<HistogramBucket>& hist) {
  ordered_json arr = ordered_json::array();
  for (const auto& b : hist) {
    ordered_json jb;
    jb["lo"] = b.lo;
    if (b.hi >= b.lo) jb["hi"] = b.hi;
    jb["count"] = b.count;
    arr.push_back(jb);
  }
  return arr;
}

}  // namespace

std::string stats_to_json(const CorpusStats& stats) {
  ordered_json j;
  j["n_samples"] = stats.n_samples;
  j["per_language"] = stats.per_language;
  j["per_label"] = stats.per_label;
  j["per_family"] = stats.per_family;
  j["size_histogram"] = histogram_to_json(stats.size_histogram);
  j["entropy_histogram"] = histogram_to_json(stats.entropy_histogram);
  return j.dump(2) + "\n";
}

}  // namespace score::corpus

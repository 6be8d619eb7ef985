#include "score/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "score/nn/checkpoint.hpp"
#include "score/util/io.hpp"
#include "score/util/sha256.hpp"

namespace score::pipeline {

using ordered_json = nlohmann::ordered_json;

// ----------------------------------------------------------- split views

std::vector<const corpus::ScriptSample*> select_split(
    const corpus::CorpusManifest& manifest, const corpus::SplitSpec& split,
    std::string_view part) {
  std::vector<const corpus::ScriptSample*> out;
  if (part == "all") {
    for (const auto& s : manifest.samples) out.push_back(&s);
    return out;
  }
  const std::vector<std::string>* ids = nullptr;
  if (part == "train")
    ids = &split.train;
  else if (part == "val")
    ids = &split.val;
  else if (part == "test")
    ids = &split.test;
  else
    throw ConfigError("unknown split part: " + std::string(part));

  std::map<std::string_view, const corpus::ScriptSample*> by_sha;
  for (const auto& s : manifest.samples) by_sha[s.sha256] = &s;
  for (const std::string& sha : *ids) {
    auto it = by_sha.find(sha);
    if (it == by_sha.end())
      throw FormatError("split references unknown sample " + sha);
    out.push_back(it->second);
  }
  return out;
}

// ----------------------------------------------------------- extraction

namespace {

void record_failure(std::vector<ExtractFailure>* failures,
                    const std::string& path, std::string reason) {
  if (failures) failures->push_back({path, std::move(reason)});
}

// Reads a sample file and checks it still matches the manifest hash;
// stale corpora fail loudly here instead of training on drifted labels.
bool read_sample(const corpus::ScriptSample& sample, std::string& content,
                 std::vector<ExtractFailure>* failures) {
  try {
    content = read_file(sample.path);
  } catch (const ScoreError& e) {
    record_failure(failures, sample.path, e.what());
    return false;
  }
  if (sha256_hex(content) != sample.sha256) {
    record_failure(failures, sample.path,
                   "content no longer matches manifest hash");
    return false;
  }
  return true;
}

}  // namespace

std::vector<scoreh::ScoreHFeatures> extract_h_files(
    const std::vector<const corpus::ScriptSample*>& samples,
    std::vector<ExtractFailure>* failures) {
  std::vector<scoreh::ScoreHFeatures> docs;
  docs.reserve(samples.size());
  std::string content;
  for (const corpus::ScriptSample* s : samples) {
    if (!read_sample(*s, content, failures)) continue;
    try {
      docs.push_back(scoreh::extract_h(content, *s));
    } catch (const ScoreError& e) {
      record_failure(failures, s->path, e.what());
    }
  }
  return docs;
}

std::vector<scoret::ScoreTFeatures> extract_t_files(
    const std::vector<const corpus::ScriptSample*>& samples,
    const scoret::ScoreTCaps& caps, const scoret::UnifiedVocabMap& map,
    std::vector<ExtractFailure>* failures) {
  std::vector<scoret::ScoreTFeatures> docs;
  docs.reserve(samples.size());
  std::string content;
  for (const corpus::ScriptSample* s : samples) {
    if (!read_sample(*s, content, failures)) continue;
    try {
      docs.push_back(scoret::extract_t(content, *s, caps, map));
    } catch (const ScoreError& e) {
      record_failure(failures, s->path, e.what());
    }
  }
  return docs;
}

// ------------------------------------------------------------- encoding

scoreh::EncodedHFile encode_h_all(const std::vector<scoreh::ScoreHFeatures>& docs,
                                  const scoreh::AtomVocab& vocab,
                                  const scoreh::ScoreHCaps& caps) {
  scoreh::EncodedHFile file;
  file.caps = caps;
  file.vocab_hash = vocab.hash();
  file.records.reserve(docs.size());
  for (const auto& doc : docs) {
    scoreh::EncodedHRecord rec;
    rec.sha256 = doc.sha256;
    rec.language = doc.language;
    rec.label = doc.label;
    rec.family = doc.family;
    rec.enc = scoreh::encode_h(doc, vocab, caps);
    file.records.push_back(std::move(rec));
  }
  return file;
}

scoret::EncodedTFile encode_t_all(const std::vector<scoret::ScoreTFeatures>& docs,
                                  scoret::EncodedTForm form,
                                  const scoret::KindVocab& vocab,
                                  const scoret::ScoreTCaps& caps) {
  scoret::EncodedTFile file;
  file.form = form;
  file.caps = caps;
  file.vocab_hash = vocab.hash();
  file.records.reserve(docs.size());
  for (const auto& doc : docs) {
    if (form == scoret::EncodedTForm::graph) {
      file.records.push_back(scoret::encode_t_graph(doc.graph, vocab, caps));
      continue;
    }
    const auto& nodes =
        form == scoret::EncodedTForm::bft ? doc.bft : doc.dft;
    scoret::EncodedTRecord rec = scoret::encode_t(nodes, vocab, caps);
    rec.sha256 = doc.sha256;
    rec.language = doc.language;
    rec.label = doc.label;
    rec.family = doc.family;
    file.records.push_back(std::move(rec));
  }
  return file;
}

// ------------------------------------------------------ model consumption

std::vector<sm::TokenSeq> to_token_seqs(const scoreh::EncodedHFile& file) {
  std::vector<sm::TokenSeq> seqs;
  seqs.reserve(file.records.size());
  for (const auto& rec : file.records)
    seqs.push_back(sm::to_token_seq(rec, file.caps));
  return seqs;
}

std::vector<sm::TokenSeq> to_token_seqs(const scoret::EncodedTFile& file,
                                        const scoret::KindVocab& vocab) {
  if (file.vocab_hash != vocab.hash())
    throw FormatError("encoded file was produced with a different vocabulary");
  std::vector<sm::TokenSeq> seqs;
  seqs.reserve(file.records.size());
  for (const auto& rec : file.records)
    seqs.push_back(sm::to_token_seq(rec, vocab, file.caps));
  return seqs;
}

std::vector<grl::GrlGraph> to_grl_graphs(const scoret::EncodedTFile& file) {
  if (file.form != scoret::EncodedTForm::graph)
    throw FormatError("graph embedding needs graph-form encoded input");
  std::vector<grl::GrlGraph> graphs;
  graphs.reserve(file.records.size());
  for (const auto& rec : file.records)
    graphs.push_back(grl::to_grl_graph(rec, file.caps));
  return graphs;
}

// ------------------------------------------------------------ sm bundles

namespace {

ordered_json h_caps_json(const scoreh::ScoreHCaps& caps) {
  return ordered_json{{"pair_cap", caps.p_cap},
                      {"atom_window", caps.l_a},
                      {"byte_window", caps.l_b},
                      {"atoms_per_scope", caps.atoms_per_scope}};
}

scoreh::ScoreHCaps h_caps_from_json(const ordered_json& j) {
  scoreh::ScoreHCaps caps;
  caps.p_cap = j.at("pair_cap").get<uint32_t>();
  caps.l_a = j.at("atom_window").get<uint32_t>();
  caps.l_b = j.at("byte_window").get<uint32_t>();
  caps.atoms_per_scope = j.at("atoms_per_scope").get<uint32_t>();
  return caps;
}

ordered_json t_caps_json(const scoret::ScoreTCaps& caps) {
  return ordered_json{{"node_cap", caps.n_cap}, {"byte_cap", caps.b_cap}};
}

scoret::ScoreTCaps t_caps_from_json(const ordered_json& j) {
  scoret::ScoreTCaps caps;
  caps.n_cap = j.at("node_cap").get<uint32_t>();
  caps.b_cap = j.at("byte_cap").get<uint32_t>();
  return caps;
}

ordered_json load_config_json(const std::filesystem::path& dir,
                              const char* expected_model) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "config.json"));
  } catch (const ordered_json::exception& e) {
    throw FormatError("bad model config in " + dir.string() + ": " + e.what());
  }
  if (j.value("model", "") != expected_model)
    throw FormatError(dir.string() + " does not hold a " +
                      std::string(expected_model) + " model");
  return j;
}

}  // namespace

void save_sm_bundle(const SmBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const sm::SmConfig& c = bundle.cfg;
  ordered_json j{{"model", "sm"},
                 {"feature", sm::to_string(c.feature_kind)},
                 {"traversal", scoret::to_string(c.traversal)},
                 {"lstm_layers", c.lstm_layers},
                 {"lstm_hidden", c.lstm_hidden},
                 {"atom_embed_dim", c.atom_embed_dim},
                 {"byte_embed_dim", c.byte_embed_dim},
                 {"lr", c.lr},
                 {"weight_decay", c.weight_decay},
                 {"batch_size", c.batch_size},
                 {"epochs", c.epochs},
                 {"seed", c.seed},
                 {"desk_profile", c.desk_profile}};
  if (c.feature_kind == sm::FeatureKind::score_h)
    j["caps"] = h_caps_json(bundle.h_caps);
  else
    j["caps"] = t_caps_json(bundle.t_caps);
  j["vocab_hash"] = bundle.vocab_hash();
  write_file(dir / "config.json", j.dump(2) + "\n");
  if (c.feature_kind == sm::FeatureKind::score_h)
    bundle.atom_vocab.save(dir / "vocab.txt");
  else
    bundle.kind_vocab.save(dir / "vocab.txt");
  nn::save_checkpoint(
      nn::snapshot(const_cast<SmBundle&>(bundle).model.checkpoint_tensors(),
                   bundle.model.digest),
      dir / "model.bin");
}

SmBundle load_sm_bundle(const std::filesystem::path& dir) {
  ordered_json j = load_config_json(dir, "sm");
  SmBundle bundle;
  sm::SmConfig& c = bundle.cfg;
  c.feature_kind = sm::feature_kind_from_string(j.at("feature").get<std::string>());
  c.traversal = scoret::traversal_from_string(j.at("traversal").get<std::string>());
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.atom_embed_dim = j.at("atom_embed_dim").get<int>();
  c.byte_embed_dim = j.at("byte_embed_dim").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.desk_profile = j.at("desk_profile").get<bool>();
  if (c.feature_kind == sm::FeatureKind::score_h) {
    bundle.h_caps = h_caps_from_json(j.at("caps"));
    bundle.atom_vocab = scoreh::AtomVocab::load(dir / "vocab.txt");
  } else {
    bundle.t_caps = t_caps_from_json(j.at("caps"));
    bundle.kind_vocab = scoret::KindVocab::load(dir / "vocab.txt");
  }
  if (j.contains("vocab_hash") &&
      j.at("vocab_hash").get<std::string>() != bundle.vocab_hash())
    throw FormatError("vocabulary file does not match model config in " +
                      dir.string());
  bundle.init_model();
  sm::load_sm_weights(bundle.model, nn::load_checkpoint(dir / "model.bin"));
  return bundle;
}

// ----------------------------------------------------------- grl bundles

void save_grl_bundle(const GrlBundle& bundle,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const grl::GrlConfig& c = bundle.cfg;
  ordered_json j{{"model", "grl"},
                 {"node_state_dim", c.node_state_dim},
                 {"embed_dim", c.embed_dim},
                 {"rounds", c.rounds},
                 {"kind_embed_dim", c.kind_embed_dim},
                 {"byte_embed_dim", c.byte_embed_dim},
                 {"edge_input_dim", c.edge_input_dim},
                 {"edge_dim", c.edge_dim},
                 {"lr", c.lr},
                 {"weight_decay", c.weight_decay},
                 {"pair_mode", grl::to_string(c.pair_mode)},
                 {"pairs_per_epoch", c.pairs_per_epoch},
                 {"batch_pairs", c.batch_pairs},
                 {"epochs", c.epochs},
                 {"seed", c.seed},
                 {"desk_profile", c.desk_profile},
                 {"caps", t_caps_json(bundle.t_caps)},
                 {"vocab_hash", bundle.kind_vocab.hash()}};
  write_file(dir / "config.json", j.dump(2) + "\n");
  bundle.kind_vocab.save(dir / "vocab.txt");
  nn::save_checkpoint(
      nn::snapshot(const_cast<GrlBundle&>(bundle).model.tensors(),
                   bundle.model.digest),
      dir / "model.bin");
}

GrlBundle load_grl_bundle(const std::filesystem::path& dir) {
  ordered_json j = load_config_json(dir, "grl");
  GrlBundle bundle;
  grl::GrlConfig& c = bundle.cfg;
  c.node_state_dim = j.at("node_state_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.rounds = j.at("rounds").get<int>();
  c.kind_embed_dim = j.at("kind_embed_dim").get<int>();
  c.byte_embed_dim = j.at("byte_embed_dim").get<int>();
  c.edge_input_dim = j.at("edge_input_dim").get<int>();
  c.edge_dim = j.at("edge_dim").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.pair_mode = grl::pair_mode_from_string(j.at("pair_mode").get<std::string>());
  c.pairs_per_epoch = j.at("pairs_per_epoch").get<int>();
  c.batch_pairs = j.at("batch_pairs").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.desk_profile = j.at("desk_profile").get<bool>();
  bundle.t_caps = t_caps_from_json(j.at("caps"));
  bundle.kind_vocab = scoret::KindVocab::load(dir / "vocab.txt");
  if (j.at("vocab_hash").get<std::string>() != bundle.kind_vocab.hash())
    throw FormatError("vocabulary file does not match model config in " +
                      dir.string());
  bundle.init_model();
  grl::load_grl_weights(bundle.model, nn::load_checkpoint(dir / "model.bin"));
  return bundle;
}

// --------------------------------------------------------- embedding files

void save_embeddings(const std::vector<EmbeddingRecord>& records,
                     const std::filesystem::path& path) {
  std::string out;
  for (const auto& rec : records) {
    ordered_json j{{"sha256", rec.sha256},
                   {"label", to_string(rec.label)},
                   {"family", rec.family},
                   {"embedding", rec.embedding}};
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
  std::vector<EmbeddingRecord> records;
  for (std::string_view line : split_lines(read_file(path))) {
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::exception& e) {
      throw FormatError("bad embedding line in " + path.string() + ": " +
                        e.what());
    }
    EmbeddingRecord rec;
    rec.sha256 = j.at("sha256").get<std::string>();
    rec.label = label_from_string(j.at("label").get<std::string>());
    rec.family = j.value("family", "");
    rec.embedding = j.at("embedding").get<std::vector<double>>();
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<EmbeddingRecord> embed_graphs(
    GrlBundle& bundle, const std::vector<grl::GrlGraph>& graphs) {
  std::vector<EmbeddingRecord> records;
  records.reserve(graphs.size());
  for (const auto& g : graphs) {
    EmbeddingRecord rec;
    rec.sha256 = g.sha256;
    rec.label = g.label;
    rec.family = g.family;
    rec.embedding = grl::grl_embed(bundle.model, g);
    records.push_back(std::move(rec));
  }
  return records;
}

// ------------------------------------------------------------ scan & bench

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

corpus::ScriptSample sample_for_scan(const std::filesystem::path& path,
                                     const std::string& content) {
  corpus::ScriptSample s;
  s.path = path.string();
  s.sha256 = sha256_hex(content);
  s.language = corpus::infer_language(s.path, content);
  s.size_bytes = content.size();
  return s;
}

}  // namespace

ScanOutcome scan_file_sm(SmBundle& bundle, const std::filesystem::path& path,
                         std::optional<double> threshold) {
  ScanOutcome out;
  out.path = path.string();
  Clock::time_point start = Clock::now();
  try {
    std::string content = read_file(path);
    corpus::ScriptSample sample = sample_for_scan(path, content);
    out.sha256 = sample.sha256;
    sm::TokenSeq seq;
    if (bundle.cfg.feature_kind == sm::FeatureKind::score_h) {
      auto features = scoreh::extract_h(content, sample);
      scoreh::EncodedHRecord rec;
      rec.sha256 = sample.sha256;
      rec.enc = scoreh::encode_h(features, bundle.atom_vocab, bundle.h_caps);
      seq = sm::to_token_seq(rec, bundle.h_caps);
    } else {
      auto features = scoret::extract_t(content, sample, bundle.t_caps,
                                        scoret::UnifiedVocabMap::builtin());
      const auto& nodes = bundle.cfg.traversal == scoret::Traversal::bft
                              ? features.bft
                              : features.dft;
      scoret::EncodedTRecord rec =
          scoret::encode_t(nodes, bundle.kind_vocab, bundle.t_caps);
      rec.sha256 = sample.sha256;
      seq = sm::to_token_seq(rec, bundle.kind_vocab, bundle.t_caps);
    }
    sm::SmVerdict v = sm::predict_sm(bundle.model, seq, threshold);
    out.score = v.score;
    out.label = v.label;
    out.threshold = v.threshold;
    out.ok = true;
  } catch (const ScoreError& e) {
    out.error = e.what();
  }
  out.latency_ms = elapsed_ms(start);
  return out;
}

ScanOutcome scan_file_grl(GrlBundle& bundle, const gbdt::TreeEnsemble& clf,
                          const std::filesystem::path& path,
                          double threshold) {
  ScanOutcome out;
  out.path = path.string();
  out.threshold = threshold;
  Clock::time_point start = Clock::now();
  try {
    std::string content = read_file(path);
    corpus::ScriptSample sample = sample_for_scan(path, content);
    out.sha256 = sample.sha256;
    auto features = scoret::extract_t(content, sample, bundle.t_caps,
                                      scoret::UnifiedVocabMap::builtin());
    scoret::EncodedTRecord rec = scoret::encode_t_graph(
        features.graph, bundle.kind_vocab, bundle.t_caps);
    grl::GrlGraph g = grl::to_grl_graph(rec, bundle.t_caps);
    std::vector<double> embedding = grl::grl_embed(bundle.model, g);
    out.score = gbdt::predict(clf, embedding);
    out.label = out.score >= threshold ? Label::malicious : Label::benign;
    out.ok = true;
  } catch (const ScoreError& e) {
    out.error = e.what();
  }
  out.latency_ms = elapsed_ms(start);
  return out;
}

std::string scan_json_line(const ScanOutcome& outcome) {
  if (!outcome.ok)
    return ordered_json{{"path", outcome.path}, {"error", outcome.error}}
        .dump();
  return ordered_json{{"path", outcome.path},
                      {"sha256", outcome.sha256},
                      {"score", outcome.score},
                      {"label", to_string(outcome.label)},
                      {"threshold", outcome.threshold},
                      {"latency_ms", outcome.latency_ms}}
      .dump();
}

BenchStats bench_sm(SmBundle& bundle,
                    const std::vector<const corpus::ScriptSample*>& samples,
                    size_t limit) {
  BenchStats stats;
  std::vector<double> latencies;
  for (const corpus::ScriptSample* s : samples) {
    if (latencies.size() >= limit) break;
    ScanOutcome out = scan_file_sm(bundle, s->path, std::nullopt);
    if (!out.ok) continue;
    latencies.push_back(out.latency_ms);
  }
  stats.n = latencies.size();
  if (latencies.empty()) return stats;
  double sum = 0.0;
  for (double v : latencies) sum += v;
  stats.mean_ms = sum / double(latencies.size());
  std::sort(latencies.begin(), latencies.end());
  size_t mid = latencies.size() / 2;
  stats.median_ms = latencies.size() % 2 == 1
                        ? latencies[mid]
                        : 0.5 * (latencies[mid - 1] + latencies[mid]);
  return stats;
}

}  // namespace score::pipeline

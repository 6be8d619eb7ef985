#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "score/corpus.hpp"
#include "score/gbdt.hpp"
#include "score/pipeline.hpp"
#include "score/util/io.hpp"
#include "score/util/sha256.hpp"

namespace fs = std::filesystem;
using namespace score;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("score_pipeline_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Fixture {
  fs::path dir;
  corpus::CorpusManifest manifest;
  corpus::SplitSpec split;
  scoret::ScoreTCaps tcaps;
  std::vector<scoret::ScoreTFeatures> tdocs;
  scoret::KindVocab kvocab;
};

const Fixture& fx() {
  static Fixture f = [] {
    Fixture f;
    f.dir = temp_dir("main");
    corpus::SynthProfile p;
    p.out_dir = f.dir / "scripts";
    p.n_benign = 30;
    p.n_malicious = 30;
    f.manifest = corpus::synthesize(p, 11);
    f.split = corpus::split(f.manifest, {10, 1, 1}, 3);
    f.tcaps.n_cap = 60;
    f.tcaps.b_cap = 12;
    auto all = pipeline::select_split(f.manifest, f.split, "all");
    std::vector<pipeline::ExtractFailure> fails;
    f.tdocs = pipeline::extract_t_files(all, f.tcaps,
                                        scoret::UnifiedVocabMap::builtin(),
                                        &fails);
    if (!fails.empty() || f.tdocs.size() != all.size())
      throw std::runtime_error("fixture extraction failed");
    std::vector<scoret::ScoreTGraph> graphs;
    for (const auto& d : f.tdocs) graphs.push_back(d.graph);
    f.kvocab = scoret::KindVocab::build(graphs);
    return f;
  }();
  return f;
}

sm::SmConfig tiny_sm_config() {
  sm::SmConfig cfg;
  cfg.feature_kind = sm::FeatureKind::score_t;
  cfg.desk_profile = true;
  cfg.atom_embed_dim = 8;
  cfg.byte_embed_dim = 8;
  cfg.lstm_hidden = 16;
  cfg.lstm_layers = 1;
  cfg.seed = 3;
  return cfg;
}

pipeline::SmBundle make_sm_bundle() {
  pipeline::SmBundle b;
  b.cfg = tiny_sm_config();
  b.t_caps = fx().tcaps;
  b.kind_vocab = fx().kvocab;
  b.init_model();
  return b;
}

grl::GrlConfig tiny_grl_config() {
  grl::GrlConfig cfg;
  cfg.desk_profile = true;
  cfg.node_state_dim = 16;
  cfg.embed_dim = 16;
  cfg.rounds = 2;
  cfg.kind_embed_dim = 8;
  cfg.byte_embed_dim = 8;
  cfg.edge_dim = 8;
  cfg.seed = 4;
  return cfg;
}

pipeline::GrlBundle make_grl_bundle() {
  pipeline::GrlBundle b;
  b.cfg = tiny_grl_config();
  b.t_caps = fx().tcaps;
  b.kind_vocab = fx().kvocab;
  b.init_model();
  return b;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return read_file(a) == read_file(b);
}

}  // namespace

TEST_CASE("split parts resolve to manifest samples") {
  const Fixture& f = fx();
  auto all = pipeline::select_split(f.manifest, f.split, "all");
  CHECK(all.size() == f.manifest.samples.size());
  for (size_t i = 0; i < all.size(); i++)
    CHECK(all[i] == &f.manifest.samples[i]);

  auto train = pipeline::select_split(f.manifest, f.split, "train");
  auto val = pipeline::select_split(f.manifest, f.split, "val");
  auto test = pipeline::select_split(f.manifest, f.split, "test");
  CHECK(train.size() == f.split.train.size());
  CHECK(val.size() == f.split.val.size());
  CHECK(test.size() == f.split.test.size());
  CHECK(train.size() + val.size() + test.size() == all.size());
  for (size_t i = 0; i < train.size(); i++)
    CHECK(train[i]->sha256 == f.split.train[i]);

  CHECK_THROWS_AS(pipeline::select_split(f.manifest, f.split, "holdout"),
                  ConfigError);
  corpus::SplitSpec broken = f.split;
  broken.train.push_back(std::string(64, '9'));
  CHECK_THROWS_AS(pipeline::select_split(f.manifest, broken, "train"),
                  FormatError);
}

TEST_CASE("feature extraction walks the corpus in order") {
  const Fixture& f = fx();
  CHECK(f.tdocs.size() == f.manifest.samples.size());
  for (size_t i = 0; i < f.tdocs.size(); i++) {
    CHECK(f.tdocs[i].sha256 == f.manifest.samples[i].sha256);
    CHECK(f.tdocs[i].label == f.manifest.samples[i].label);
    CHECK(!f.tdocs[i].bft.empty());
    CHECK(f.tdocs[i].bft.size() <= f.tcaps.n_cap);
  }

  auto all = pipeline::select_split(f.manifest, f.split, "all");
  std::vector<pipeline::ExtractFailure> fails;
  auto hdocs = pipeline::extract_h_files(all, &fails);
  CHECK(fails.empty());
  CHECK(hdocs.size() == all.size());
}

TEST_CASE("extraction reports drifted and unreadable files") {
  fs::path dir = temp_dir("drift");
  corpus::SynthProfile p;
  p.out_dir = dir / "scripts";
  p.n_benign = 4;
  p.n_malicious = 4;
  corpus::CorpusManifest manifest = corpus::synthesize(p, 21);
  auto all = pipeline::select_split(manifest, {}, "all");

  write_file(manifest.samples[2].path, "echo tampered\n");
  fs::remove(manifest.samples[5].path);

  std::vector<pipeline::ExtractFailure> fails;
  auto docs = pipeline::extract_t_files(all, {},
                                        scoret::UnifiedVocabMap::builtin(),
                                        &fails);
  CHECK(docs.size() == all.size() - 2);
  REQUIRE(fails.size() == 2);
  CHECK(fails[0].path == manifest.samples[2].path);
  CHECK(fails[0].reason == "content no longer matches manifest hash");
  CHECK(fails[1].path == manifest.samples[5].path);
  CHECK(!fails[1].reason.empty());
}

TEST_CASE("sequence encoding feeds the sequential detector") {
  const Fixture& f = fx();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::bft, f.kvocab, f.tcaps);
  CHECK(file.form == scoret::EncodedTForm::bft);
  CHECK(file.vocab_hash == f.kvocab.hash());
  REQUIRE(file.records.size() == f.tdocs.size());
  for (size_t i = 0; i < file.records.size(); i++) {
    CHECK(file.records[i].sha256 == f.tdocs[i].sha256);
    CHECK(file.records[i].label == f.tdocs[i].label);
    CHECK(file.records[i].edges.empty());
    CHECK(file.records[i].n_nodes == f.tdocs[i].bft.size());
  }

  std::vector<sm::TokenSeq> seqs = pipeline::to_token_seqs(file, f.kvocab);
  REQUIRE(seqs.size() == file.records.size());
  CHECK(seqs[0].n_tokens == file.records[0].n_nodes);
  CHECK(seqs[0].byte_window == f.tcaps.b_cap);

  scoret::EncodedTFile stale = file;
  stale.vocab_hash = std::string(64, 'd');
  CHECK_THROWS_AS(pipeline::to_token_seqs(stale, f.kvocab), FormatError);
}

TEST_CASE("graph encoding feeds the graph embedder") {
  const Fixture& f = fx();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::graph, f.kvocab, f.tcaps);
  REQUIRE(file.records.size() == f.tdocs.size());
  std::vector<grl::GrlGraph> graphs = pipeline::to_grl_graphs(file);
  REQUIRE(graphs.size() == file.records.size());
  for (size_t i = 0; i < graphs.size(); i++) {
    CHECK(graphs[i].sha256 == f.tdocs[i].sha256);
    CHECK(graphs[i].n_nodes == file.records[i].n_nodes);
    if (graphs[i].n_nodes > 1) CHECK(!graphs[i].edges.empty());
  }

  scoret::EncodedTFile seq_form = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::bft, f.kvocab, f.tcaps);
  CHECK_THROWS_AS(pipeline::to_grl_graphs(seq_form), FormatError);
}

TEST_CASE("scope token encoding reaches the detector too") {
  const Fixture& f = fx();
  auto all = pipeline::select_split(f.manifest, f.split, "all");
  std::vector<pipeline::ExtractFailure> fails;
  auto hdocs = pipeline::extract_h_files(all, &fails);
  REQUIRE(fails.empty());

  scoreh::AtomVocab vocab = scoreh::AtomVocab::build(hdocs);
  scoreh::ScoreHCaps caps;
  caps.p_cap = 64;
  caps.l_a = 8;
  caps.l_b = 24;
  scoreh::EncodedHFile file = pipeline::encode_h_all(hdocs, vocab, caps);
  CHECK(file.vocab_hash == vocab.hash());
  REQUIRE(file.records.size() == hdocs.size());

  std::vector<sm::TokenSeq> seqs = pipeline::to_token_seqs(file);
  REQUIRE(seqs.size() == hdocs.size());
  CHECK(seqs[0].syn_window == caps.l_a);
  CHECK(seqs[0].byte_window == caps.l_b);
  CHECK(seqs[0].n_tokens <= caps.p_cap);
}

TEST_CASE("sequential detector bundles survive disk round trips") {
  pipeline::SmBundle bundle = make_sm_bundle();
  bundle.model.threshold.data[0] = 0.7f;
  fs::path dir_a = temp_dir("sm_bundle_a");
  pipeline::save_sm_bundle(bundle, dir_a);
  CHECK(fs::exists(dir_a / "config.json"));
  CHECK(fs::exists(dir_a / "vocab.txt"));
  CHECK(fs::exists(dir_a / "model.bin"));

  pipeline::SmBundle back = pipeline::load_sm_bundle(dir_a);
  CHECK(back.model.digest == bundle.model.digest);
  CHECK(back.cfg.feature_kind == bundle.cfg.feature_kind);
  CHECK(back.cfg.desk_profile == bundle.cfg.desk_profile);
  CHECK(back.t_caps.b_cap == bundle.t_caps.b_cap);
  CHECK(back.kind_vocab.hash() == bundle.kind_vocab.hash());
  CHECK(back.model.threshold.data[0] == 0.7f);

  fs::path dir_b = temp_dir("sm_bundle_b");
  pipeline::save_sm_bundle(back, dir_b);
  CHECK(same_bytes(dir_a / "config.json", dir_b / "config.json"));
  CHECK(same_bytes(dir_a / "vocab.txt", dir_b / "vocab.txt"));
  CHECK(same_bytes(dir_a / "model.bin", dir_b / "model.bin"));

  const Fixture& f = fx();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::bft, f.kvocab, f.tcaps);
  std::vector<sm::TokenSeq> seqs = pipeline::to_token_seqs(file, f.kvocab);
  CHECK(sm::predict_sm(back.model, seqs[0]).score ==
        sm::predict_sm(bundle.model, seqs[0]).score);
}

TEST_CASE("graph embedder bundles survive disk round trips") {
  pipeline::GrlBundle bundle = make_grl_bundle();
  fs::path dir_a = temp_dir("grl_bundle_a");
  pipeline::save_grl_bundle(bundle, dir_a);
  pipeline::GrlBundle back = pipeline::load_grl_bundle(dir_a);
  CHECK(back.model.digest == bundle.model.digest);
  CHECK(back.kind_vocab.hash() == bundle.kind_vocab.hash());

  fs::path dir_b = temp_dir("grl_bundle_b");
  pipeline::save_grl_bundle(back, dir_b);
  CHECK(same_bytes(dir_a / "config.json", dir_b / "config.json"));
  CHECK(same_bytes(dir_a / "vocab.txt", dir_b / "vocab.txt"));
  CHECK(same_bytes(dir_a / "model.bin", dir_b / "model.bin"));

  const Fixture& f = fx();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::graph, f.kvocab, f.tcaps);
  std::vector<grl::GrlGraph> graphs = pipeline::to_grl_graphs(file);
  CHECK(grl::grl_embed(back.model, graphs[0]) ==
        grl::grl_embed(bundle.model, graphs[0]));
}

TEST_CASE("embedding files round trip exactly") {
  const Fixture& f = fx();
  pipeline::GrlBundle bundle = make_grl_bundle();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::graph, f.kvocab, f.tcaps);
  std::vector<grl::GrlGraph> graphs = pipeline::to_grl_graphs(file);
  std::vector<pipeline::EmbeddingRecord> records =
      pipeline::embed_graphs(bundle, graphs);
  REQUIRE(records.size() == graphs.size());
  for (size_t i = 0; i < records.size(); i++) {
    CHECK(records[i].sha256 == graphs[i].sha256);
    CHECK(records[i].label == graphs[i].label);
    CHECK(records[i].embedding.size() == size_t(bundle.cfg.embed()));
  }

  fs::path path = temp_dir("embed") / "embeddings.jsonl";
  pipeline::save_embeddings(records, path);
  std::vector<pipeline::EmbeddingRecord> back = pipeline::load_embeddings(path);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); i++) {
    CHECK(back[i].sha256 == records[i].sha256);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].family == records[i].family);
    CHECK(back[i].embedding == records[i].embedding);
  }
  std::string bytes = read_file(path);
  pipeline::save_embeddings(back, path);
  CHECK(read_file(path) == bytes);

  write_file(path, "{not json\n");
  CHECK_THROWS_AS(pipeline::load_embeddings(path), FormatError);
}

TEST_CASE("file scanning produces verdicts and survives bad inputs") {
  const Fixture& f = fx();
  pipeline::SmBundle bundle = make_sm_bundle();
  fs::path script = f.manifest.samples[0].path;

  pipeline::ScanOutcome out = pipeline::scan_file_sm(bundle, script,
                                                     std::nullopt);
  CHECK(out.ok);
  CHECK(out.error.empty());
  CHECK(out.sha256 == f.manifest.samples[0].sha256);
  CHECK(out.score == 0.5);  // untrained head
  CHECK(out.threshold == 0.5);
  CHECK(out.label == Label::malicious);
  CHECK(out.latency_ms >= 0.0);
  std::string line = scan_json_line(out);
  CHECK(line.find("\"score\":") != std::string::npos);
  CHECK(line.find(out.sha256) != std::string::npos);

  pipeline::ScanOutcome lenient = pipeline::scan_file_sm(bundle, script, 0.9);
  CHECK(lenient.threshold == 0.9);
  CHECK(lenient.label == Label::benign);

  pipeline::ScanOutcome missing =
      pipeline::scan_file_sm(bundle, f.dir / "nope.sh", std::nullopt);
  CHECK(!missing.ok);
  CHECK(!missing.error.empty());
  CHECK(scan_json_line(missing).find("\"error\":") != std::string::npos);

  fs::path binary = f.dir / "blob.sh";
  write_file(binary, std::string("\x7f" "ELF\0\0\0garbage", 15));
  pipeline::ScanOutcome bad = pipeline::scan_file_sm(bundle, binary,
                                                     std::nullopt);
  CHECK(!bad.ok);
  CHECK(!bad.error.empty());
}

TEST_CASE("graph scanning runs the classifier over embeddings") {
  const Fixture& f = fx();
  pipeline::GrlBundle bundle = make_grl_bundle();
  scoret::EncodedTFile file = pipeline::encode_t_all(
      f.tdocs, scoret::EncodedTForm::graph, f.kvocab, f.tcaps);
  std::vector<grl::GrlGraph> graphs = pipeline::to_grl_graphs(file);
  std::vector<pipeline::EmbeddingRecord> records =
      pipeline::embed_graphs(bundle, graphs);

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& r : records) {
    x.push_back(r.embedding);
    y.push_back(r.label == Label::malicious ? 1 : 0);
  }
  gbdt::GbdtConfig cfg;
  cfg.n_trees = 5;
  cfg.max_depth = 2;
  gbdt::TreeEnsemble clf = gbdt::fit(x, y, cfg);

  pipeline::ScanOutcome out =
      pipeline::scan_file_grl(bundle, clf, f.manifest.samples[1].path, 0.5);
  CHECK(out.ok);
  CHECK(out.sha256 == f.manifest.samples[1].sha256);
  CHECK(out.score >= 0.0);
  CHECK(out.score <= 1.0);
  CHECK(out.threshold == 0.5);
  CHECK((out.label == Label::malicious) == (out.score >= 0.5));

  pipeline::ScanOutcome missing =
      pipeline::scan_file_grl(bundle, clf, f.dir / "gone.py", 0.5);
  CHECK(!missing.ok);
}

TEST_CASE("latency harness reports per file statistics") {
  const Fixture& f = fx();
  pipeline::SmBundle bundle = make_sm_bundle();
  auto all = pipeline::select_split(f.manifest, f.split, "all");
  pipeline::BenchStats stats = pipeline::bench_sm(bundle, all, 5);
  CHECK(stats.n == 5);
  CHECK(stats.mean_ms > 0.0);
  CHECK(stats.median_ms > 0.0);

  pipeline::BenchStats more = pipeline::bench_sm(bundle, all, 100000);
  CHECK(more.n == all.size());
}

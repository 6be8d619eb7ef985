#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "score/corpus.hpp"
#include "score/util/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path io_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "score_cli_io";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CmdResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  fs::path out = io_dir() / ("out_" + std::to_string(counter) + ".txt");
  fs::path err = io_dir() / ("err_" + std::to_string(counter) + ".txt");
  counter++;
  std::string cmd = env + (env.empty() ? "" : " ") + SCORE_CLI_PATH + " " +
                    args + " > " + out.string() + " 2> " + err.string();
  int status = std::system(cmd.c_str());
  CmdResult r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = score::read_file(out);
  r.err = score::read_file(err);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("score_cli_" + tag);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> manifest_shas(const fs::path& corpus_dir) {
  score::corpus::CorpusManifest m =
      score::corpus::load_manifest(corpus_dir / "manifest.jsonl");
  std::vector<std::string> shas;
  for (const auto& s : m.samples) shas.push_back(s.sha256);
  return shas;
}

}  // namespace

TEST_CASE("usage errors exit with code two") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("synth").code == 2);  // --out is required
  CHECK(run_cli("extract --corpus a --out b --features bogus").code == 2);
  CHECK(run_cli("eval --model a --corpus b --split holdout").code == 2);
}

TEST_CASE("help exits cleanly") {
  CmdResult top = run_cli("--help");
  CHECK(top.code == 0);
  CHECK(contains(top.out, "synth"));
  CHECK(contains(top.out, "scan"));
  CmdResult sub = run_cli("synth --help");
  CHECK(sub.code == 0);
  CHECK(contains(sub.out, "--out"));
}

TEST_CASE("runtime failures exit with code one") {
  CmdResult r = run_cli("stats --corpus /nonexistent/corpus");
  CHECK(r.code == 1);
  CHECK(contains(r.err, "error:"));
  CHECK(run_cli("scan --model /nonexistent/model somefile").code == 1);
}

TEST_CASE("seed environment variable wins over the flag") {
  fs::path a = temp_dir("seed_a");
  fs::path b = temp_dir("seed_b");
  fs::path c = temp_dir("seed_c");
  CHECK(run_cli("synth --out " + a.string() + " --benign 4 --malicious 4 --seed 1",
                "SCORE_SEED=123").code == 0);
  CHECK(run_cli("synth --out " + b.string() + " --benign 4 --malicious 4 --seed 123")
            .code == 0);
  CHECK(run_cli("synth --out " + c.string() + " --benign 4 --malicious 4 --seed 1")
            .code == 0);
  CHECK(manifest_shas(a) == manifest_shas(b));
  CHECK(manifest_shas(a) != manifest_shas(c));

  CmdResult bad = run_cli("synth --out " + temp_dir("seed_bad").string(),
                          "SCORE_SEED=notanumber");
  CHECK(bad.code == 1);
  CHECK(contains(bad.err, "SCORE_SEED"));
}

TEST_CASE("ingest builds a manifest from loose files") {
  fs::path dir = temp_dir("ingest_src");
  fs::create_directories(dir);
  score::write_file(dir / "a.sh", "echo one\n");
  score::write_file(dir / "b.py", "print('two')\n");
  fs::path labels = dir / "labels.json";
  score::write_file(labels,
                    "{\"" + (dir / "a.sh").string() +
                        "\": {\"label\": \"malicious\", \"family\": "
                        "\"downloader\"}}\n");
  fs::path out = temp_dir("ingest_out");
  CmdResult r = run_cli("ingest " + dir.string() + " --out " + out.string() +
                        " --labels " + labels.string());
  CHECK(r.code == 0);
  CHECK(contains(r.out, "\"files_seen\": 3"));
  CHECK(fs::exists(out / "manifest.jsonl"));

  CmdResult st = run_cli("stats --corpus " + out.string());
  CHECK(st.code == 0);
  CHECK(contains(st.out, "per_label"));
}

TEST_CASE("the whole pipeline runs end to end") {
  fs::path corpus = temp_dir("e2e_corpus");
  fs::path feat = temp_dir("e2e_features");
  fs::path sm_dir = temp_dir("e2e_sm");
  fs::path grl_dir = temp_dir("e2e_grl");
  fs::path clf = io_dir() / "clf.json";

  CmdResult synth = run_cli("synth --out " + corpus.string() +
                            " --benign 16 --malicious 16 --seed 3");
  CHECK(synth.code == 0);
  CHECK(contains(synth.out, "\"samples\": 32"));

  CmdResult split = run_cli("split --corpus " + corpus.string() +
                            " --ratio 2:1:1 --seed 2");
  CHECK(split.code == 0);
  CHECK(fs::exists(corpus / "split.json"));
  std::string split_bytes = score::read_file(corpus / "split.json");
  CHECK(run_cli("split --corpus " + corpus.string() + " --ratio 2:1:1 --seed 2")
            .code == 0);
  CHECK(score::read_file(corpus / "split.json") == split_bytes);

  CmdResult extract = run_cli("extract --corpus " + corpus.string() +
                              " --out " + feat.string() +
                              " --features score_t --cap-nodes 60 "
                              "--cap-bytes 12");
  CHECK(extract.code == 0);
  CHECK(contains(extract.out, "vocab_hash"));
  for (const char* part : {"train", "val", "test"}) {
    CHECK(fs::exists(feat / (std::string(part) + ".bft.scrt")));
    CHECK(fs::exists(feat / (std::string(part) + ".dft.scrt")));
    CHECK(fs::exists(feat / (std::string(part) + ".graph.scrt")));
    CHECK(fs::exists(feat / (std::string(part) + ".features.jsonl")));
  }
  CHECK(fs::exists(feat / "vocab.txt"));
  CHECK(fs::exists(feat / "extract.json"));

  CmdResult train_sm = run_cli(
      "train-sm --features " + feat.string() + " --out " + sm_dir.string() +
      " --desk --epochs 2 --lstm-layers 1 --hidden 16 --atom-dim 8 "
      "--byte-dim 8 --batch-size 8 --lr 0.01 --target-fpr 0.5 --seed 5");
  CHECK(train_sm.code == 0);
  CHECK(contains(train_sm.out, "best_val_auroc"));
  CHECK(fs::exists(sm_dir / "config.json"));
  CHECK(fs::exists(sm_dir / "vocab.txt"));
  CHECK(fs::exists(sm_dir / "model.bin"));
  CHECK(score::split_lines(score::read_file(sm_dir / "train_log.jsonl"))
            .size() == 2);

  std::vector<std::string> shas = manifest_shas(corpus);
  score::corpus::CorpusManifest manifest =
      score::corpus::load_manifest(corpus / "manifest.jsonl");
  std::string one_script = manifest.samples[0].path;

  CmdResult scan = run_cli("scan --model " + sm_dir.string() + " " +
                           one_script);
  CHECK(scan.code == 0);
  CHECK(contains(scan.out, "\"score\":"));
  CHECK(contains(scan.out, "latency_ms"));

  fs::path report = io_dir() / "report.json";
  fs::path csv = io_dir() / "coverage.csv";
  CmdResult ev = run_cli("eval --model " + sm_dir.string() + " --corpus " +
                         corpus.string() + " --split test --out " +
                         report.string() + " --csv " + csv.string());
  CHECK(ev.code == 0);
  CHECK(contains(ev.out, "\"auroc\""));
  CHECK(contains(ev.out, "coverage"));
  CHECK(fs::exists(report));
  CHECK(contains(score::read_file(csv), "family"));

  CmdResult bench = run_cli("bench --model " + sm_dir.string() + " --corpus " +
                            corpus.string() + " --split val --limit 4");
  CHECK(bench.code == 0);
  CHECK(contains(bench.out, "mean_ms"));

  CmdResult train_grl = run_cli(
      "train-grl --features " + feat.string() + " --out " + grl_dir.string() +
      " --desk --epochs 1 --rounds 2 --state-dim 16 --embed-dim 16 "
      "--kind-dim 8 --byte-dim 8 --edge-dim 8 --pairs-per-epoch 16 "
      "--batch-pairs 8 --pair-mode label_wise --seed 5");
  CHECK(train_grl.code == 0);
  CHECK(contains(train_grl.out, "best_val_loss"));
  for (const char* part : {"train", "val", "test"})
    CHECK(fs::exists(grl_dir / ("embeddings_" + std::string(part) +
                                ".jsonl")));

  CmdResult fit = run_cli("fit-clf --embeddings " + grl_dir.string() +
                          " --out " + clf.string() +
                          " --trees 5 --max-depth 2");
  CHECK(fit.code == 0);
  CHECK(contains(fit.out, "val_auroc"));
  CHECK(fs::exists(clf));

  CmdResult gscan = run_cli("scan --model " + grl_dir.string() + " --clf " +
                            clf.string() + " " + one_script);
  CHECK(gscan.code == 0);
  CHECK(contains(gscan.out, "\"score\":"));

  CHECK(run_cli("scan --model " + grl_dir.string() + " " + one_script).code ==
        1);  // graph models need --clf

  CmdResult gev = run_cli("eval --model " + grl_dir.string() + " --clf " +
                          clf.string() + " --corpus " + corpus.string() +
                          " --split test");
  CHECK(gev.code == 0);
  CHECK(contains(gev.out, "\"model\": \"grl\""));

  CmdResult gbench = run_cli("bench --model " + grl_dir.string() + " --clf " +
                             clf.string() + " --corpus " + corpus.string() +
                             " --split val --limit 3");
  CHECK(gbench.code == 0);
  CHECK(contains(gbench.out, "mean_ms"));
}

TEST_CASE("gradient spot check command reports a verdict") {
  CmdResult r = run_cli("gradcheck --seed 3 --per-tensor 1 --tol 1e-4");
  CHECK(r.code == 0);
  CHECK(contains(r.out, "\"pass\": true"));

  CmdResult strict = run_cli("gradcheck --seed 3 --per-tensor 1 --tol 1e-18");
  CHECK(strict.code == 1);
  CHECK(contains(strict.out, "\"pass\": false"));
}

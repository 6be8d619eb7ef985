#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "score/corpus.hpp"
#include "score/eval.hpp"
#include "score/gbdt.hpp"
#include "score/gradcheck.hpp"
#include "score/pipeline.hpp"
#include "score/score_h.hpp"
#include "score/score_t.hpp"
#include "score/util/io.hpp"
#include "score/util/sha256.hpp"

namespace py = pybind11;
using namespace score;

namespace {

Language language_arg(const std::string& name) {
  Language lang = language_from_string(name);
  if (lang == Language::unknown)
    throw ConfigError("unknown language: " + name);
  return lang;
}

corpus::ScriptSample inline_sample(const std::string& source,
                                   const std::string& language) {
  corpus::ScriptSample s;
  s.sha256 = sha256_hex(source);
  s.path = "<memory>";
  s.language = language_arg(language);
  s.size_bytes = source.size();
  return s;
}

py::list scope_token_pairs(const std::string& source,
                           const std::string& language) {
  corpus::ScriptSample sample = inline_sample(source, language);
  scoreh::ScoreHFeatures features = scoreh::extract_h(source, sample);
  py::list out;
  for (const auto& pair : features.pairs)
    out.append(py::make_tuple(pair.scopes, pair.token));
  return out;
}

py::dict tree_graph(const std::string& source, const std::string& language,
                    uint32_t node_cap, uint32_t byte_cap) {
  corpus::ScriptSample sample = inline_sample(source, language);
  scoret::ScoreTCaps caps{node_cap, byte_cap};
  scoret::ScoreTFeatures features = scoret::extract_t(
      source, sample, caps, scoret::UnifiedVocabMap::builtin());
  py::list kinds, bytes;
  for (const auto& node : features.graph.nodes) {
    kinds.append(node.kind);
    bytes.append(py::bytes(node.bytes));
  }
  py::dict out;
  out["kinds"] = kinds;
  out["bytes"] = bytes;
  out["edges"] = features.graph.edges;
  return out;
}

py::dict outcome_dict(const pipeline::ScanOutcome& o) {
  py::dict d;
  d["path"] = o.path;
  if (!o.ok) {
    d["error"] = o.error;
    return d;
  }
  d["sha256"] = o.sha256;
  d["score"] = o.score;
  d["label"] = std::string(to_string(o.label));
  d["threshold"] = o.threshold;
  d["latency_ms"] = o.latency_ms;
  return d;
}

// Loads a trained model directory once and scores files against it.
class Scanner {
 public:
  Scanner(const std::string& model_dir, std::optional<std::string> clf,
          std::optional<double> threshold)
      : threshold_(threshold) {
    auto j = nlohmann::ordered_json::parse(
        read_file(std::filesystem::path(model_dir) / "config.json"));
    grl_ = j.value("model", "") == "grl";
    if (grl_) {
      if (!clf)
        throw ConfigError("graph models need a fitted classifier file");
      grl_bundle_ = pipeline::load_grl_bundle(model_dir);
      clf_ = gbdt::load(*clf);
    } else {
      sm_bundle_ = pipeline::load_sm_bundle(model_dir);
    }
  }

  py::dict scan(const std::string& path) {
    pipeline::ScanOutcome o =
        grl_ ? pipeline::scan_file_grl(grl_bundle_, clf_, path,
                                       threshold_.value_or(0.5))
             : pipeline::scan_file_sm(sm_bundle_, path, threshold_);
    return outcome_dict(o);
  }

 private:
  bool grl_ = false;
  std::optional<double> threshold_;
  pipeline::SmBundle sm_bundle_;
  pipeline::GrlBundle grl_bundle_;
  gbdt::TreeEnsemble clf_;
};

size_t synthesize_corpus(const std::string& out_dir, uint32_t benign,
                         uint32_t malicious, uint64_t seed,
                         double obfuscation_rate, uint32_t preamble) {
  corpus::SynthProfile profile;
  profile.out_dir = out_dir;
  profile.n_benign = benign;
  profile.n_malicious = malicious;
  profile.obfuscation_rate = obfuscation_rate;
  profile.preamble_statements = preamble;
  corpus::CorpusManifest manifest = corpus::synthesize(profile, seed);
  corpus::save_manifest(manifest,
                        std::filesystem::path(out_dir) / "manifest.jsonl");
  return manifest.samples.size();
}

py::dict obfuscation_marks(const std::string& text) {
  eval::ObfuscationMarks marks = eval::obfuscation_scan(text);
  auto spans = [](const std::vector<eval::MarkSpan>& v) {
    py::list out;
    for (const auto& s : v) out.append(py::make_tuple(s.begin, s.end));
    return out;
  };
  py::dict d;
  d["base64"] = spans(marks.base64);
  d["xor_loop"] = spans(marks.xor_loop);
  d["rot13"] = spans(marks.rot13);
  d["powershell_encoded"] = spans(marks.powershell_encoded);
  return d;
}

py::dict run_gradcheck(uint64_t seed, int per_tensor) {
  gradcheck::Report sm = gradcheck::check_sm(seed, per_tensor);
  gradcheck::Report grl = gradcheck::check_grl(seed, per_tensor);
  py::dict d;
  d["sequential_max_rel_err"] = sm.max_rel_err;
  d["graph_max_rel_err"] = grl.max_rel_err;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "static script malware detection core";

  py::register_exception<ScoreError>(m, "ScoreError", PyExc_RuntimeError);

  m.def("scope_token_pairs", &scope_token_pairs, py::arg("source"),
        py::arg("language"),
        "Scope-token feature pairs for a script given as text.");
  m.def("tree_graph", &tree_graph, py::arg("source"), py::arg("language"),
        py::arg("node_cap") = 700, py::arg("byte_cap") = 512,
        "Unified syntax-tree graph (kinds, node bytes, edges) for a script.");
  m.def("unified_kinds", [] { return scoret::unified_kinds(); },
        "The closed cross-language node kind vocabulary.");
  m.def("synthesize", &synthesize_corpus, py::arg("out_dir"),
        py::arg("benign"), py::arg("malicious"), py::arg("seed") = 1,
        py::arg("obfuscation_rate") = 0.0, py::arg("preamble") = 0,
        "Generate a labelled synthetic corpus; returns the sample count.");
  m.def("auroc", &eval::auroc, py::arg("scores"), py::arg("labels"),
        "Area under the ROC curve with midrank tie handling.");
  m.def("threshold_at_fpr", &eval::threshold_at_fpr, py::arg("scores"),
        py::arg("labels"), py::arg("target_fpr"),
        "Smallest threshold whose false-positive rate meets the target.");
  m.def("obfuscation_scan", &obfuscation_marks, py::arg("text"),
        "Byte spans of base64/xor/rot13/powershell obfuscation tells.");
  m.def("sha256", [](const std::string& data) { return sha256_hex(data); },
        py::arg("data"), "Lowercase hex SHA-256 of a byte string.");
  m.def("gradcheck", &run_gradcheck, py::arg("seed") = 1,
        py::arg("per_tensor") = 2,
        "Finite-difference probe of the analytic gradients.");

  py::class_<Scanner>(m, "Scanner",
                      "A trained model directory opened for scoring files.")
      .def(py::init<const std::string&, std::optional<std::string>,
                    std::optional<double>>(),
           py::arg("model_dir"), py::arg("clf") = std::nullopt,
           py::arg("threshold") = std::nullopt)
      .def("scan", &Scanner::scan, py::arg("path"),
           "Score one file; returns a verdict dict.");
}

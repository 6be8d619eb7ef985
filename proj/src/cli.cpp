#include "score/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "score/common.hpp"
#include "score/corpus.hpp"
#include "score/eval.hpp"
#include "score/gbdt.hpp"
#include "score/gradcheck.hpp"
#include "score/pipeline.hpp"
#include "score/util/io.hpp"

namespace score::cli {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void emit(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

// SCORE_SEED always wins over --seed so whole pipelines can be repinned
// from the environment.
uint64_t effective_seed(uint64_t flag_value) {
  const char* env = std::getenv("SCORE_SEED");
  if (!env || !*env) return flag_value;
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(env, &used);
    if (env[used] != '\0') throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("SCORE_SEED must be an unsigned integer, got \"") +
                      env + "\"");
  }
}

corpus::CorpusManifest load_corpus(const fs::path& dir) {
  return corpus::load_manifest(dir / "manifest.jsonl");
}

std::optional<corpus::SplitSpec> try_load_split(const fs::path& dir) {
  fs::path p = dir / "split.json";
  if (!fs::exists(p)) return std::nullopt;
  return corpus::load_split(p);
}

std::vector<const corpus::ScriptSample*> resolve_part(
    const corpus::CorpusManifest& manifest,
    const std::optional<corpus::SplitSpec>& split, const std::string& part) {
  if (part == "all" || !split) {
    if (part != "all")
      throw ConfigError("corpus has no split.json; run the split command or "
                        "use --split all");
    corpus::SplitSpec none;
    return pipeline::select_split(manifest, none, "all");
  }
  return pipeline::select_split(manifest, *split, part);
}

std::array<uint32_t, 3> parse_ratio(const std::string& text) {
  std::array<uint32_t, 3> ratio{};
  size_t from = 0;
  for (int i = 0; i < 3; i++) {
    size_t colon = text.find(':', from);
    bool last = i == 2;
    std::string piece = last ? text.substr(from)
                             : text.substr(from, colon - from);
    if ((!last && colon == std::string::npos) || piece.empty())
      throw ConfigError("ratio must look like 10:1:1, got \"" + text + "\"");
    try {
      ratio[size_t(i)] = uint32_t(std::stoul(piece));
    } catch (const std::exception&) {
      throw ConfigError("ratio must look like 10:1:1, got \"" + text + "\"");
    }
    from = colon + 1;
  }
  return ratio;
}

void report_failures(const std::vector<pipeline::ExtractFailure>& failures) {
  for (const auto& f : failures)
    std::cerr << "warning: skipped " << f.path << ": " << f.reason << "\n";
}

// ------------------------------------------------------------------ synth

struct SynthOpts {
  std::string out;
  uint32_t n_benign = 100;
  uint32_t n_malicious = 100;
  uint64_t seed = 1;
  double obfuscation_rate = 0.0;
  uint32_t preamble = 0;
  std::string languages = "bash,python";
  std::string families = "downloader,reverse_shell,miner,stealer";
};

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  size_t from = 0;
  while (from <= text.size()) {
    size_t comma = text.find(',', from);
    if (comma == std::string::npos) {
      out.push_back(text.substr(from));
      break;
    }
    out.push_back(text.substr(from, comma - from));
    from = comma + 1;
  }
  return out;
}

void cmd_synth(const SynthOpts& o) {
  corpus::SynthProfile profile;
  profile.out_dir = o.out;
  profile.n_benign = o.n_benign;
  profile.n_malicious = o.n_malicious;
  profile.obfuscation_rate = o.obfuscation_rate;
  profile.preamble_statements = o.preamble;
  profile.languages.clear();
  for (const std::string& name : split_csv(o.languages)) {
    Language lang = language_from_string(name);
    if (lang == Language::unknown)
      throw ConfigError("unknown language: " + name);
    profile.languages.push_back(lang);
  }
  profile.families = split_csv(o.families);
  corpus::CorpusManifest manifest =
      corpus::synthesize(profile, effective_seed(o.seed));
  corpus::save_manifest(manifest, fs::path(o.out) / "manifest.jsonl");
  uint64_t malicious = 0;
  for (const auto& s : manifest.samples)
    if (s.label == Label::malicious) malicious++;
  emit(ordered_json{{"out", o.out},
                    {"samples", manifest.samples.size()},
                    {"benign", manifest.samples.size() - malicious},
                    {"malicious", malicious}});
}

// ----------------------------------------------------------------- ingest

struct IngestOpts {
  std::vector<std::string> inputs;
  std::string out;
  std::string labels;
};

corpus::LabelMap load_label_map(const fs::path& path) {
  corpus::LabelMap map;
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const ordered_json::exception& e) {
    throw FormatError("bad label file " + path.string() + ": " + e.what());
  }
  if (!j.is_object())
    throw FormatError("label file must be a JSON object keyed by path");
  for (auto& [key, val] : j.items()) {
    corpus::LabelAssignment a;
    a.label = label_from_string(val.at("label").get<std::string>());
    a.family = val.value("family", "");
    map[key] = a;
  }
  return map;
}

void cmd_ingest(const IngestOpts& o) {
  corpus::LabelMap labels;
  if (!o.labels.empty()) labels = load_label_map(o.labels);
  std::vector<fs::path> paths(o.inputs.begin(), o.inputs.end());
  corpus::IngestResult result = corpus::ingest(paths, labels);
  fs::create_directories(o.out);
  corpus::save_manifest(result.manifest, fs::path(o.out) / "manifest.jsonl");
  for (const auto& skip : result.report.skipped)
    std::cerr << "warning: skipped " << skip.path << ": " << skip.reason
              << "\n";
  emit(ordered_json{{"out", o.out},
                    {"samples", result.manifest.samples.size()},
                    {"files_seen", result.report.n_files_seen},
                    {"duplicates", result.report.n_duplicates},
                    {"skipped", result.report.skipped.size()}});
}

// ------------------------------------------------------------------ stats

void cmd_stats(const std::string& corpus_dir) {
  corpus::CorpusManifest manifest = load_corpus(corpus_dir);
  std::cout << corpus::stats_to_json(corpus::stats(manifest)) << "\n";
}

// ------------------------------------------------------------------ split

struct SplitOpts {
  std::string corpus_dir;
  std::string ratio = "10:1:1";
  uint64_t seed = 1;
};

void cmd_split(const SplitOpts& o) {
  corpus::CorpusManifest manifest = load_corpus(o.corpus_dir);
  corpus::SplitSpec spec = corpus::split(manifest, parse_ratio(o.ratio),
                                         effective_seed(o.seed));
  corpus::save_split(spec, fs::path(o.corpus_dir) / "split.json");
  for (const std::string& w : spec.warnings)
    std::cerr << "warning: " << w << "\n";
  emit(ordered_json{{"train", spec.train.size()},
                    {"val", spec.val.size()},
                    {"test", spec.test.size()},
                    {"seed", spec.seed},
                    {"warnings", spec.warnings.size()}});
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
  std::string corpus_dir;
  std::string out;
  std::string features;
  uint32_t cap_pairs = 2048;
  uint32_t atom_window = 24;
  uint32_t byte_window = 128;
  uint32_t atoms_per_scope = 6;
  uint32_t cap_nodes = 700;
  uint32_t cap_bytes = 512;
  std::string kind_map;
};

ordered_json h_caps_json(const scoreh::ScoreHCaps& caps) {
  return ordered_json{{"pair_cap", caps.p_cap},
                      {"atom_window", caps.l_a},
                      {"byte_window", caps.l_b},
                      {"atoms_per_scope", caps.atoms_per_scope}};
}

ordered_json t_caps_json(const scoret::ScoreTCaps& caps) {
  return ordered_json{{"node_cap", caps.n_cap}, {"byte_cap", caps.b_cap}};
}

scoreh::ScoreHCaps h_caps_from_json(const ordered_json& j) {
  scoreh::ScoreHCaps caps;
  caps.p_cap = j.at("pair_cap").get<uint32_t>();
  caps.l_a = j.at("atom_window").get<uint32_t>();
  caps.l_b = j.at("byte_window").get<uint32_t>();
  caps.atoms_per_scope = j.at("atoms_per_scope").get<uint32_t>();
  return caps;
}

scoret::ScoreTCaps t_caps_from_json(const ordered_json& j) {
  scoret::ScoreTCaps caps;
  caps.n_cap = j.at("node_cap").get<uint32_t>();
  caps.b_cap = j.at("byte_cap").get<uint32_t>();
  return caps;
}

void cmd_extract(const ExtractOpts& o) {
  corpus::CorpusManifest manifest = load_corpus(o.corpus_dir);
  std::optional<corpus::SplitSpec> split = try_load_split(o.corpus_dir);
  std::vector<std::string> parts =
      split ? std::vector<std::string>{"train", "val", "test"}
            : std::vector<std::string>{"all"};
  fs::path out(o.out);
  fs::create_directories(out);

  ordered_json meta{{"features", o.features}};
  ordered_json part_meta = ordered_json::object();

  if (o.features == "score_h") {
    scoreh::ScoreHCaps caps{o.cap_pairs, o.atom_window, o.byte_window,
                            o.atoms_per_scope};
    meta["caps"] = h_caps_json(caps);
    scoreh::AtomVocab vocab;
    for (size_t pi = 0; pi < parts.size(); pi++) {
      const std::string& part = parts[pi];
      auto samples = resolve_part(manifest, split, part);
      std::vector<pipeline::ExtractFailure> failures;
      auto docs = pipeline::extract_h_files(samples, &failures);
      report_failures(failures);
      if (pi == 0) vocab = scoreh::AtomVocab::build(docs);
      save_h_features(docs, out / (part + ".features.jsonl"));
      save_encoded_h(pipeline::encode_h_all(docs, vocab, caps),
                     out / (part + ".scrh"));
      part_meta[part] = ordered_json{{"samples", samples.size()},
                                     {"extracted", docs.size()},
                                     {"failures", failures.size()}};
    }
    vocab.save(out / "vocab.txt");
    meta["vocab_hash"] = vocab.hash();
  } else {
    scoret::ScoreTCaps caps{o.cap_nodes, o.cap_bytes};
    meta["caps"] = t_caps_json(caps);
    scoret::UnifiedVocabMap map =
        o.kind_map.empty()
            ? scoret::UnifiedVocabMap::builtin()
            : scoret::UnifiedVocabMap::with_overrides_tsv(
                  read_file(o.kind_map));
    scoret::KindVocab vocab;
    for (size_t pi = 0; pi < parts.size(); pi++) {
      const std::string& part = parts[pi];
      auto samples = resolve_part(manifest, split, part);
      std::vector<pipeline::ExtractFailure> failures;
      auto docs = pipeline::extract_t_files(samples, caps, map, &failures);
      report_failures(failures);
      if (pi == 0) {
        std::vector<scoret::ScoreTGraph> graphs;
        for (const auto& d : docs) graphs.push_back(d.graph);
        vocab = scoret::KindVocab::build(graphs);
      }
      std::vector<scoret::ScoreTGraph> graphs;
      for (const auto& d : docs) graphs.push_back(d.graph);
      save_t_features(graphs, out / (part + ".features.jsonl"));
      save_encoded_t(
          pipeline::encode_t_all(docs, scoret::EncodedTForm::bft, vocab, caps),
          out / (part + ".bft.scrt"));
      save_encoded_t(
          pipeline::encode_t_all(docs, scoret::EncodedTForm::dft, vocab, caps),
          out / (part + ".dft.scrt"));
      save_encoded_t(pipeline::encode_t_all(docs, scoret::EncodedTForm::graph,
                                            vocab, caps),
                     out / (part + ".graph.scrt"));
      part_meta[part] = ordered_json{{"samples", samples.size()},
                                     {"extracted", docs.size()},
                                     {"failures", failures.size()}};
    }
    vocab.save(out / "vocab.txt");
    meta["vocab_hash"] = vocab.hash();
  }
  meta["vocab_part"] = parts[0];
  meta["parts"] = part_meta;
  write_file(out / "extract.json", meta.dump(2) + "\n");
  emit(meta);
}

ordered_json load_extract_meta(const fs::path& features_dir) {
  fs::path p = features_dir / "extract.json";
  try {
    return ordered_json::parse(read_file(p));
  } catch (const ordered_json::exception& e) {
    throw FormatError("bad extract metadata " + p.string() + ": " + e.what());
  }
}

// --------------------------------------------------------------- train-sm

struct TrainSmOpts {
  std::string features_dir;
  std::string out;
  std::string traversal = "bft";
  int lstm_layers = 2;
  int hidden = 256;
  int atom_dim = 64;
  int byte_dim = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 20;
  uint64_t seed = 1;
  bool desk = false;
  double target_fpr = 0.0017;
};

size_t drop_empty_seqs(std::vector<sm::TokenSeq>& seqs) {
  size_t before = seqs.size();
  std::erase_if(seqs, [](const sm::TokenSeq& s) { return s.n_tokens == 0; });
  return before - seqs.size();
}

void cmd_train_sm(const TrainSmOpts& o) {
  fs::path feat(o.features_dir);
  ordered_json meta = load_extract_meta(feat);
  std::string kind = meta.at("features").get<std::string>();

  pipeline::SmBundle bundle;
  bundle.cfg.feature_kind = sm::feature_kind_from_string(kind);
  bundle.cfg.traversal = scoret::traversal_from_string(o.traversal);
  bundle.cfg.lstm_layers = o.lstm_layers;
  bundle.cfg.lstm_hidden = o.hidden;
  bundle.cfg.atom_embed_dim = o.atom_dim;
  bundle.cfg.byte_embed_dim = o.byte_dim;
  bundle.cfg.lr = o.lr;
  bundle.cfg.weight_decay = o.weight_decay;
  bundle.cfg.batch_size = o.batch_size;
  bundle.cfg.epochs = o.epochs;
  bundle.cfg.seed = effective_seed(o.seed);
  bundle.cfg.desk_profile = o.desk;

  std::vector<sm::TokenSeq> train, val;
  if (bundle.cfg.feature_kind == sm::FeatureKind::score_h) {
    bundle.h_caps = h_caps_from_json(meta.at("caps"));
    bundle.atom_vocab = scoreh::AtomVocab::load(feat / "vocab.txt");
    scoreh::EncodedHFile ftrain = scoreh::load_encoded_h(feat / "train.scrh");
    scoreh::EncodedHFile fval = scoreh::load_encoded_h(feat / "val.scrh");
    if (ftrain.vocab_hash != bundle.atom_vocab.hash() ||
        fval.vocab_hash != bundle.atom_vocab.hash())
      throw FormatError("encoded files do not match vocab.txt in " +
                        feat.string());
    train = pipeline::to_token_seqs(ftrain);
    val = pipeline::to_token_seqs(fval);
  } else {
    bundle.t_caps = t_caps_from_json(meta.at("caps"));
    bundle.kind_vocab = scoret::KindVocab::load(feat / "vocab.txt");
    std::string stem = o.traversal + ".scrt";
    train = pipeline::to_token_seqs(
        scoret::load_encoded_t(feat / ("train." + stem)), bundle.kind_vocab);
    val = pipeline::to_token_seqs(
        scoret::load_encoded_t(feat / ("val." + stem)), bundle.kind_vocab);
  }
  size_t dropped = drop_empty_seqs(train) + drop_empty_seqs(val);
  if (dropped)
    std::cerr << "warning: dropped " << dropped << " empty sequences\n";

  bundle.init_model();
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "train_log.jsonl");
  sm::SmTrainResult result =
      sm::train_sm(bundle.model, train, val, o.target_fpr, &log);
  pipeline::save_sm_bundle(bundle, o.out);
  emit(ordered_json{{"out", o.out},
                    {"train_sequences", train.size()},
                    {"val_sequences", val.size()},
                    {"epochs", bundle.cfg.epochs},
                    {"best_epoch", result.best_epoch},
                    {"best_val_auroc", result.best_val_auroc},
                    {"threshold", result.threshold}});
}

// -------------------------------------------------------------- train-grl

struct TrainGrlOpts {
  std::string features_dir;
  std::string out;
  std::string pair_mode = "label_wise";
  int state_dim = 64;
  int embed_dim = 128;
  int rounds = 5;
  int kind_dim = 32;
  int byte_dim = 32;
  int edge_dim = 16;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int pairs_per_epoch = 1024;
  int batch_pairs = 16;
  int epochs = 10;
  uint64_t seed = 1;
  bool desk = false;
};

size_t drop_empty_graphs(std::vector<grl::GrlGraph>& graphs) {
  size_t before = graphs.size();
  std::erase_if(graphs,
                [](const grl::GrlGraph& g) { return g.n_nodes == 0; });
  return before - graphs.size();
}

void cmd_train_grl(const TrainGrlOpts& o) {
  fs::path feat(o.features_dir);
  ordered_json meta = load_extract_meta(feat);
  if (meta.at("features").get<std::string>() != "score_t")
    throw ConfigError("graph training needs tree features, got " +
                      meta.at("features").get<std::string>());

  pipeline::GrlBundle bundle;
  bundle.cfg.node_state_dim = o.state_dim;
  bundle.cfg.embed_dim = o.embed_dim;
  bundle.cfg.rounds = o.rounds;
  bundle.cfg.kind_embed_dim = o.kind_dim;
  bundle.cfg.byte_embed_dim = o.byte_dim;
  bundle.cfg.edge_dim = o.edge_dim;
  bundle.cfg.lr = o.lr;
  bundle.cfg.weight_decay = o.weight_decay;
  bundle.cfg.pair_mode = grl::pair_mode_from_string(o.pair_mode);
  bundle.cfg.pairs_per_epoch = o.pairs_per_epoch;
  bundle.cfg.batch_pairs = o.batch_pairs;
  bundle.cfg.epochs = o.epochs;
  bundle.cfg.seed = effective_seed(o.seed);
  bundle.cfg.desk_profile = o.desk;
  bundle.t_caps = t_caps_from_json(meta.at("caps"));
  bundle.kind_vocab = scoret::KindVocab::load(feat / "vocab.txt");

  auto load_graphs = [&](const std::string& part) {
    scoret::EncodedTFile file =
        scoret::load_encoded_t(feat / (part + ".graph.scrt"));
    if (file.vocab_hash != bundle.kind_vocab.hash())
      throw FormatError("encoded files do not match vocab.txt in " +
                        feat.string());
    return pipeline::to_grl_graphs(file);
  };
  std::vector<grl::GrlGraph> train = load_graphs("train");
  std::vector<grl::GrlGraph> val = load_graphs("val");
  size_t dropped = drop_empty_graphs(train) + drop_empty_graphs(val);
  if (dropped)
    std::cerr << "warning: dropped " << dropped << " empty graphs\n";

  bundle.init_model();
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "train_log.jsonl");
  grl::GrlTrainResult result = grl::train_grl(bundle.model, train, val, &log);
  pipeline::save_grl_bundle(bundle, o.out);

  ordered_json embedded = ordered_json::object();
  pipeline::save_embeddings(pipeline::embed_graphs(bundle, train),
                            fs::path(o.out) / "embeddings_train.jsonl");
  embedded["train"] = train.size();
  pipeline::save_embeddings(pipeline::embed_graphs(bundle, val),
                            fs::path(o.out) / "embeddings_val.jsonl");
  embedded["val"] = val.size();
  if (fs::exists(feat / "test.graph.scrt")) {
    std::vector<grl::GrlGraph> test = load_graphs("test");
    drop_empty_graphs(test);
    pipeline::save_embeddings(pipeline::embed_graphs(bundle, test),
                              fs::path(o.out) / "embeddings_test.jsonl");
    embedded["test"] = test.size();
  }
  emit(ordered_json{{"out", o.out},
                    {"train_graphs", train.size()},
                    {"val_graphs", val.size()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_loss", result.best_val_loss},
                    {"embeddings", embedded}});
}

// ---------------------------------------------------------------- fit-clf

struct FitClfOpts {
  std::string embeddings_dir;
  std::string out;
  int trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  int min_leaf = 4;
  uint64_t seed = 0;
};

void cmd_fit_clf(const FitClfOpts& o) {
  fs::path dir(o.embeddings_dir);
  auto train = pipeline::load_embeddings(dir / "embeddings_train.jsonl");
  if (train.empty()) throw ConfigError("no training embeddings");
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (auto& rec : train) {
    x.push_back(std::move(rec.embedding));
    y.push_back(rec.label == Label::malicious ? 1 : 0);
  }
  gbdt::GbdtConfig cfg;
  cfg.n_trees = o.trees;
  cfg.max_depth = o.max_depth;
  cfg.learning_rate = o.learning_rate;
  cfg.min_samples_leaf = o.min_leaf;
  cfg.seed = effective_seed(o.seed);
  gbdt::TreeEnsemble ens = gbdt::fit(x, y, cfg);
  gbdt::save(ens, o.out);

  ordered_json j{{"out", o.out},
                 {"trees", ens.trees.size()},
                 {"features", ens.n_features},
                 {"train_samples", x.size()}};
  fs::path val_path = dir / "embeddings_val.jsonl";
  if (fs::exists(val_path)) {
    auto val = pipeline::load_embeddings(val_path);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& rec : val) {
      scores.push_back(gbdt::predict(ens, rec.embedding));
      labels.push_back(rec.label == Label::malicious ? 1 : 0);
    }
    try {
      j["val_auroc"] = eval::auroc(scores, labels);
    } catch (const ConfigError&) {
      j["val_auroc"] = nullptr;
    }
  }
  emit(j);
}

// ------------------------------------------------------------ scan & eval

struct ModelRef {
  std::string model_dir;
  std::string clf_path;

  bool is_grl() const {
    ordered_json j;
    try {
      j = ordered_json::parse(read_file(fs::path(model_dir) / "config.json"));
    } catch (const ordered_json::exception& e) {
      throw FormatError("bad model config in " + model_dir + ": " + e.what());
    }
    return j.value("model", "") == "grl";
  }
};

struct LoadedModel {
  bool grl = false;
  pipeline::SmBundle sm;
  pipeline::GrlBundle grl_bundle;
  gbdt::TreeEnsemble clf;

  pipeline::ScanOutcome scan(const fs::path& path,
                             std::optional<double> threshold) {
    if (grl)
      return pipeline::scan_file_grl(grl_bundle, clf, path,
                                     threshold.value_or(0.5));
    return pipeline::scan_file_sm(sm, path, threshold);
  }
};

LoadedModel load_model(const ModelRef& ref) {
  LoadedModel m;
  m.grl = ref.is_grl();
  if (m.grl) {
    if (ref.clf_path.empty())
      throw ConfigError("graph models need --clf with a fitted classifier");
    m.grl_bundle = pipeline::load_grl_bundle(ref.model_dir);
    m.clf = gbdt::load(ref.clf_path);
  } else {
    m.sm = pipeline::load_sm_bundle(ref.model_dir);
  }
  return m;
}

struct ScanOpts {
  ModelRef model;
  std::optional<double> threshold;
  std::vector<std::string> inputs;
};

void cmd_scan(const ScanOpts& o) {
  LoadedModel model = load_model(o.model);
  size_t failed = 0, total = 0;
  for (const std::string& input : o.inputs) {
    for (const fs::path& file : collect_files(input)) {
      pipeline::ScanOutcome outcome = model.scan(file, o.threshold);
      std::cout << pipeline::scan_json_line(outcome) << "\n";
      total++;
      if (!outcome.ok) failed++;
    }
  }
  if (failed)
    std::cerr << failed << " of " << total << " files failed to scan\n";
}

struct EvalOpts {
  ModelRef model;
  std::string corpus_dir;
  std::string split_part = "test";
  std::optional<double> threshold;
  std::string out;
  std::string csv;
};

void cmd_eval(const EvalOpts& o) {
  LoadedModel model = load_model(o.model);
  corpus::CorpusManifest manifest = load_corpus(o.corpus_dir);
  std::optional<corpus::SplitSpec> split = try_load_split(o.corpus_dir);
  auto samples = resolve_part(manifest, split, o.split_part);
  if (samples.empty()) throw ConfigError("no samples in split " + o.split_part);

  std::vector<double> scores;
  std::vector<int> labels, detected;
  std::vector<std::string> families;
  size_t failures = 0;
  double threshold = o.threshold.value_or(0.5);
  bool threshold_seen = false;
  uint64_t n_base64 = 0, n_xor = 0, n_rot13 = 0, n_psenc = 0, n_clean = 0;
  for (const corpus::ScriptSample* s : samples) {
    pipeline::ScanOutcome outcome = model.scan(s->path, o.threshold);
    if (!outcome.ok) {
      std::cerr << "warning: " << s->path << ": " << outcome.error << "\n";
      failures++;
      continue;
    }
    if (!threshold_seen) {
      threshold = outcome.threshold;
      threshold_seen = true;
    }
    scores.push_back(outcome.score);
    labels.push_back(s->label == Label::malicious ? 1 : 0);
    detected.push_back(outcome.label == Label::malicious ? 1 : 0);
    families.push_back(s->family);
    eval::ObfuscationMarks marks = eval::obfuscation_scan(read_file(s->path));
    if (!marks.base64.empty()) n_base64++;
    if (!marks.xor_loop.empty()) n_xor++;
    if (!marks.rot13.empty()) n_rot13++;
    if (!marks.powershell_encoded.empty()) n_psenc++;
    if (!marks.any()) n_clean++;
  }
  if (scores.empty()) throw ConfigError("every sample failed to scan");

  eval::Confusion c = eval::confusion(scores, labels, threshold);
  ordered_json metrics{{"tp", c.tp},       {"fp", c.fp},
                       {"tn", c.tn},       {"fn", c.fn},
                       {"tpr", c.tpr},     {"fpr", c.fpr},
                       {"precision", c.precision}, {"f1", c.f1}};
  try {
    metrics["auroc"] = eval::auroc(scores, labels);
  } catch (const ConfigError&) {
    metrics["auroc"] = nullptr;
  }

  auto rows = eval::coverage_report(families, labels, detected);
  ordered_json coverage = ordered_json::array();
  for (const auto& row : rows)
    coverage.push_back(ordered_json{{"family", row.family},
                                    {"success", row.success},
                                    {"miss", row.miss},
                                    {"ratio", row.ratio}});

  ordered_json report{
      {"model", model.grl ? "grl" : "sm"},
      {"feature",
       model.grl ? "score_t" : sm::to_string(model.sm.cfg.feature_kind)},
      {"split", o.split_part},
      {"samples", scores.size()},
      {"failures", failures},
      {"threshold", threshold},
      {"metrics", metrics},
      {"coverage", coverage},
      {"obfuscation",
       ordered_json{{"base64", n_base64},
                    {"xor_loop", n_xor},
                    {"rot13", n_rot13},
                    {"powershell_encoded", n_psenc},
                    {"clean", n_clean}}}};
  if (!o.out.empty()) write_file(o.out, report.dump(2) + "\n");
  if (!o.csv.empty()) write_file(o.csv, eval::coverage_csv(rows));
  emit(report);
}

// ------------------------------------------------------------------ bench

struct BenchOpts {
  ModelRef model;
  std::string corpus_dir;
  std::string split_part = "test";
  size_t limit = 0;
};

void cmd_bench(const BenchOpts& o) {
  LoadedModel model = load_model(o.model);
  corpus::CorpusManifest manifest = load_corpus(o.corpus_dir);
  std::optional<corpus::SplitSpec> split = try_load_split(o.corpus_dir);
  auto samples = resolve_part(manifest, split, o.split_part);
  size_t limit = o.limit == 0 ? samples.size() : o.limit;

  pipeline::BenchStats stats;
  if (model.grl) {
    std::vector<double> latencies;
    for (const corpus::ScriptSample* s : samples) {
      if (latencies.size() >= limit) break;
      auto outcome =
          pipeline::scan_file_grl(model.grl_bundle, model.clf, s->path, 0.5);
      if (outcome.ok) latencies.push_back(outcome.latency_ms);
    }
    stats.n = latencies.size();
    if (!latencies.empty()) {
      double sum = 0.0;
      for (double v : latencies) sum += v;
      stats.mean_ms = sum / double(latencies.size());
      std::sort(latencies.begin(), latencies.end());
      size_t mid = latencies.size() / 2;
      stats.median_ms = latencies.size() % 2 == 1
                            ? latencies[mid]
                            : 0.5 * (latencies[mid - 1] + latencies[mid]);
    }
  } else {
    stats = pipeline::bench_sm(model.sm, samples, limit);
  }
  emit(ordered_json{{"files", stats.n},
                    {"mean_ms", stats.mean_ms},
                    {"median_ms", stats.median_ms}});
}

// -------------------------------------------------------------- gradcheck

struct GradcheckOpts {
  uint64_t seed = 1;
  double tol = 1e-4;
  int per_tensor = 2;
};

int cmd_gradcheck(const GradcheckOpts& o) {
  uint64_t seed = effective_seed(o.seed);
  gradcheck::Report sm_report = gradcheck::check_sm(seed, o.per_tensor);
  gradcheck::Report grl_report = gradcheck::check_grl(seed, o.per_tensor);
  bool pass =
      sm_report.max_rel_err <= o.tol && grl_report.max_rel_err <= o.tol;
  emit(ordered_json{{"seed", seed},
                    {"tolerance", o.tol},
                    {"sequential_max_rel_err", sm_report.max_rel_err},
                    {"graph_max_rel_err", grl_report.max_rel_err},
                    {"pass", pass}});
  return pass ? 0 : 1;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"script malware detection toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--benign", synth.n_benign, "benign scripts");
  synth_cmd->add_option("--malicious", synth.n_malicious, "malicious scripts");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--obfuscation-rate", synth.obfuscation_rate,
                        "fraction of malicious payloads wrapped in base64");
  synth_cmd->add_option("--preamble", synth.preamble,
                        "benign filler statements before each payload");
  synth_cmd->add_option("--languages", synth.languages,
                        "comma-separated languages");
  synth_cmd->add_option("--families", synth.families,
                        "comma-separated malicious families");
  synth_cmd->callback([&] { cmd_synth(synth); });

  IngestOpts ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a corpus manifest");
  ingest_cmd->add_option("inputs", ingest.inputs, "files or directories")
      ->required();
  ingest_cmd->add_option("--out", ingest.out, "corpus directory")->required();
  ingest_cmd->add_option("--labels", ingest.labels,
                         "JSON file of per-path label overrides");
  ingest_cmd->callback([&] { cmd_ingest(ingest); });

  std::string stats_corpus;
  auto* stats_cmd = app.add_subcommand("stats", "corpus composition report");
  stats_cmd->add_option("--corpus", stats_corpus, "corpus directory")
      ->required();
  stats_cmd->callback([&] { cmd_stats(stats_corpus); });

  SplitOpts split;
  auto* split_cmd =
      app.add_subcommand("split", "deterministic train/val/test split");
  split_cmd->add_option("--corpus", split.corpus_dir, "corpus directory")
      ->required();
  split_cmd->add_option("--ratio", split.ratio, "train:val:test ratio");
  split_cmd->add_option("--seed", split.seed, "split seed");
  split_cmd->callback([&] { cmd_split(split); });

  ExtractOpts extract;
  auto* extract_cmd =
      app.add_subcommand("extract", "extract and encode features");
  extract_cmd->add_option("--corpus", extract.corpus_dir, "corpus directory")
      ->required();
  extract_cmd->add_option("--out", extract.out, "feature directory")
      ->required();
  extract_cmd
      ->add_option("--features", extract.features,
                   "feature kind: score_h or score_t")
      ->required()
      ->check(CLI::IsMember({"score_h", "score_t"}));
  extract_cmd->add_option("--cap-pairs", extract.cap_pairs,
                          "max scope-token pairs per script");
  extract_cmd->add_option("--atom-window", extract.atom_window,
                          "scope atom window length");
  extract_cmd->add_option("--byte-window", extract.byte_window,
                          "token byte window length");
  extract_cmd->add_option("--atoms-per-scope", extract.atoms_per_scope,
                          "atoms allotted to one scope");
  extract_cmd->add_option("--cap-nodes", extract.cap_nodes,
                          "max tree nodes per script");
  extract_cmd->add_option("--cap-bytes", extract.cap_bytes,
                          "max bytes carried per node");
  extract_cmd->add_option("--kind-map", extract.kind_map,
                          "TSV overrides for the unified kind table");
  extract_cmd->callback([&] { cmd_extract(extract); });

  TrainSmOpts train_sm;
  auto* train_sm_cmd =
      app.add_subcommand("train-sm", "train the sequential detector");
  train_sm_cmd
      ->add_option("--features", train_sm.features_dir, "feature directory")
      ->required();
  train_sm_cmd->add_option("--out", train_sm.out, "model directory")
      ->required();
  train_sm_cmd
      ->add_option("--traversal", train_sm.traversal,
                   "node order for tree features")
      ->check(CLI::IsMember({"bft", "dft"}));
  train_sm_cmd->add_option("--lstm-layers", train_sm.lstm_layers,
                           "stacked recurrent layers");
  train_sm_cmd->add_option("--hidden", train_sm.hidden,
                           "recurrent hidden width");
  train_sm_cmd->add_option("--atom-dim", train_sm.atom_dim,
                           "syntax embedding width");
  train_sm_cmd->add_option("--byte-dim", train_sm.byte_dim,
                           "byte embedding width");
  train_sm_cmd->add_option("--lr", train_sm.lr, "learning rate");
  train_sm_cmd->add_option("--weight-decay", train_sm.weight_decay,
                           "decoupled weight decay");
  train_sm_cmd->add_option("--batch-size", train_sm.batch_size, "batch size");
  train_sm_cmd->add_option("--epochs", train_sm.epochs, "training epochs");
  train_sm_cmd->add_option("--seed", train_sm.seed, "training seed");
  train_sm_cmd->add_flag("--desk", train_sm.desk,
                         "quarter-width profile for workstation runs");
  train_sm_cmd->add_option("--target-fpr", train_sm.target_fpr,
                           "false-positive rate for threshold calibration");
  train_sm_cmd->callback([&] { cmd_train_sm(train_sm); });

  TrainGrlOpts train_grl;
  auto* train_grl_cmd =
      app.add_subcommand("train-grl", "train the graph embedder");
  train_grl_cmd
      ->add_option("--features", train_grl.features_dir, "feature directory")
      ->required();
  train_grl_cmd->add_option("--out", train_grl.out, "model directory")
      ->required();
  train_grl_cmd
      ->add_option("--pair-mode", train_grl.pair_mode,
                   "pair sampling: label_wise or threat_wise")
      ->check(CLI::IsMember({"label_wise", "threat_wise"}));
  train_grl_cmd->add_option("--state-dim", train_grl.state_dim,
                            "node state width");
  train_grl_cmd->add_option("--embed-dim", train_grl.embed_dim,
                            "graph embedding width");
  train_grl_cmd->add_option("--rounds", train_grl.rounds,
                            "message passing rounds");
  train_grl_cmd->add_option("--kind-dim", train_grl.kind_dim,
                            "kind embedding width");
  train_grl_cmd->add_option("--byte-dim", train_grl.byte_dim,
                            "byte embedding width");
  train_grl_cmd->add_option("--edge-dim", train_grl.edge_dim,
                            "edge feature width");
  train_grl_cmd->add_option("--lr", train_grl.lr, "learning rate");
  train_grl_cmd->add_option("--weight-decay", train_grl.weight_decay,
                            "decoupled weight decay");
  train_grl_cmd->add_option("--pairs-per-epoch", train_grl.pairs_per_epoch,
                            "training pairs sampled per epoch");
  train_grl_cmd->add_option("--batch-pairs", train_grl.batch_pairs,
                            "pairs per optimizer step");
  train_grl_cmd->add_option("--epochs", train_grl.epochs, "training epochs");
  train_grl_cmd->add_option("--seed", train_grl.seed, "training seed");
  train_grl_cmd->add_flag("--desk", train_grl.desk,
                          "quarter-width profile for workstation runs");
  train_grl_cmd->callback([&] { cmd_train_grl(train_grl); });

  FitClfOpts fit_clf;
  auto* fit_clf_cmd = app.add_subcommand(
      "fit-clf", "fit the boosted classifier on graph embeddings");
  fit_clf_cmd
      ->add_option("--embeddings", fit_clf.embeddings_dir,
                   "directory with embeddings_*.jsonl")
      ->required();
  fit_clf_cmd->add_option("--out", fit_clf.out, "classifier file")
      ->required();
  fit_clf_cmd->add_option("--trees", fit_clf.trees, "boosting rounds");
  fit_clf_cmd->add_option("--max-depth", fit_clf.max_depth, "tree depth");
  fit_clf_cmd->add_option("--learning-rate", fit_clf.learning_rate,
                          "shrinkage per tree");
  fit_clf_cmd->add_option("--min-leaf", fit_clf.min_leaf,
                          "min samples per leaf");
  fit_clf_cmd->add_option("--seed", fit_clf.seed, "reserved");
  fit_clf_cmd->callback([&] { cmd_fit_clf(fit_clf); });

  ScanOpts scan;
  auto* scan_cmd = app.add_subcommand("scan", "score files with a model");
  scan_cmd->add_option("--model", scan.model.model_dir, "model directory")
      ->required();
  scan_cmd->add_option("--clf", scan.model.clf_path,
                       "classifier file for graph models");
  scan_cmd->add_option("--threshold", scan.threshold, "decision threshold");
  scan_cmd->add_option("inputs", scan.inputs, "files or directories")
      ->required();
  scan_cmd->callback([&] { cmd_scan(scan); });

  EvalOpts eval_opts;
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a model on a corpus split");
  eval_cmd->add_option("--model", eval_opts.model.model_dir, "model directory")
      ->required();
  eval_cmd->add_option("--clf", eval_opts.model.clf_path,
                       "classifier file for graph models");
  eval_cmd->add_option("--corpus", eval_opts.corpus_dir, "corpus directory")
      ->required();
  eval_cmd->add_option("--split", eval_opts.split_part, "split part")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--threshold", eval_opts.threshold,
                       "decision threshold");
  eval_cmd->add_option("--out", eval_opts.out, "write the report here too");
  eval_cmd->add_option("--csv", eval_opts.csv, "write per-family coverage CSV");
  eval_cmd->callback([&] { cmd_eval(eval_opts); });

  BenchOpts bench;
  auto* bench_cmd =
      app.add_subcommand("bench", "per-file inference latency");
  bench_cmd->add_option("--model", bench.model.model_dir, "model directory")
      ->required();
  bench_cmd->add_option("--clf", bench.model.clf_path,
                        "classifier file for graph models");
  bench_cmd->add_option("--corpus", bench.corpus_dir, "corpus directory")
      ->required();
  bench_cmd->add_option("--split", bench.split_part, "split part")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  bench_cmd->add_option("--limit", bench.limit, "max files to time");
  bench_cmd->callback([&] { cmd_bench(bench); });

  GradcheckOpts gradcheck_opts;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of the analytic gradients");
  gradcheck_cmd->add_option("--seed", gradcheck_opts.seed, "probe seed");
  gradcheck_cmd->add_option("--tol", gradcheck_opts.tol,
                            "max relative error accepted");
  gradcheck_cmd->add_option("--per-tensor", gradcheck_opts.per_tensor,
                            "entries probed per tensor");
  gradcheck_cmd->callback([&] { rc = cmd_gradcheck(gradcheck_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ScoreError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

}  // namespace score::cli

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "score/sm_model.hpp"

namespace {

using score::Label;
using score::Rng;

// Hand-built token sequence with label-correlated byte content so a
// couple of epochs can separate the classes.
score::sm::TokenSeq make_seq(uint64_t salt, uint32_t n_tokens, Label label,
                             uint32_t syn_window, uint32_t byte_window) {
  Rng rng(0x7700 + salt);
  score::sm::TokenSeq seq;
  seq.sha256 = std::string(64, char('a' + int(salt % 16)));
  seq.label = label;
  seq.family = label == Label::malicious ? "downloader" : "";
  seq.n_tokens = n_tokens;
  seq.syn_window = syn_window;
  seq.byte_window = byte_window;
  seq.syn_off.push_back(0);
  seq.byte_off.push_back(0);
  const int syn_lo = label == Label::malicious ? 2 : 30;
  const unsigned char byte_base = label == Label::malicious ? 'X' : 'a';
  for (uint32_t i = 0; i < n_tokens; i++) {
    uint32_t ls = uint32_t(rng.between(1, int(syn_window)));
    for (uint32_t j = 0; j < ls; j++)
      seq.syn_ids.push_back(uint32_t(rng.between(syn_lo, syn_lo + 18)));
    seq.syn_off.push_back(uint32_t(seq.syn_ids.size()));
    uint32_t lb = uint32_t(rng.between(1, int(byte_window)));
    for (uint32_t j = 0; j < lb; j++)
      seq.byte_ids.push_back(uint32_t(byte_base + rng.below(3)) + 2);
    seq.byte_off.push_back(uint32_t(seq.byte_ids.size()));
  }
  return seq;
}

score::sm::SmConfig tiny_config() {
  score::sm::SmConfig cfg;
  cfg.feature_kind = score::sm::FeatureKind::score_t;
  cfg.desk_profile = true;
  cfg.atom_embed_dim = 8;
  cfg.byte_embed_dim = 8;
  cfg.lstm_hidden = 16;
  cfg.lstm_layers = 1;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.lr = 1e-2;
  cfg.seed = 7;
  return cfg;
}

constexpr uint32_t kSynWin = 12;
constexpr uint32_t kByteWin = 16;

score::sm::SmModel<double> tiny_model() {
  score::sm::SmModel<double> m;
  m.init(tiny_config(), 64, kSynWin, kByteWin, "vhash");
  return m;
}

std::vector<score::sm::TokenSeq> make_split(uint64_t base, int n) {
  std::vector<score::sm::TokenSeq> out;
  for (int i = 0; i < n; i++) {
    Label label = i % 2 == 0 ? Label::benign : Label::malicious;
    out.push_back(make_seq(base + uint64_t(i), 4 + uint32_t(i % 3), label,
                           kSynWin, kByteWin));
  }
  return out;
}

}  // namespace

TEST_CASE("token sequence from scope-token records trims trailing pads") {
  score::scoreh::ScoreHCaps caps;
  caps.l_a = 4;
  caps.l_b = 6;
  score::scoreh::EncodedHRecord rec;
  rec.sha256 = std::string(64, 'f');
  rec.label = Label::malicious;
  rec.family = "miner";
  rec.enc.n_pairs = 3;
  rec.enc.atom_ids = {2, 3, 0, 0,   //
                      0, 0, 0, 0,   //
                      5, 0, 7, 0};  // interior pad survives, tail does not
  rec.enc.byte_ids = {uint32_t('e') + 2, uint32_t('c') + 2, 0, 0, 0, 0,  //
                      9, 9, 9, 9, 9, 9,                                  //
                      0, 0, 0, 0, 0, 0};

  score::sm::TokenSeq seq = score::sm::to_token_seq(rec, caps);
  CHECK(seq.sha256 == rec.sha256);
  CHECK(seq.label == Label::malicious);
  CHECK(seq.family == "miner");
  CHECK(seq.n_tokens == 3);
  CHECK(seq.syn_window == caps.l_a);
  CHECK(seq.byte_window == caps.l_b);
  CHECK(seq.syn_off == std::vector<uint32_t>{0, 2, 2, 5});
  CHECK(seq.syn_ids == std::vector<uint32_t>{2, 3, 5, 0, 7});
  CHECK(seq.syn_len(0) == 2);
  CHECK(seq.syn_len(1) == 0);
  CHECK(seq.syn_len(2) == 3);
  CHECK(seq.byte_off == std::vector<uint32_t>{0, 2, 8, 8});
  CHECK(seq.byte_ids[0] == uint32_t('e') + 2);
  CHECK(seq.byte_len(2) == 0);
}

TEST_CASE("token sequence from tree records spells kind names as bytes") {
  score::scoret::KindVocab vocab = score::scoret::KindVocab::build({});
  score::scoret::ScoreTCaps caps;
  caps.b_cap = 5;
  score::scoret::EncodedTRecord rec;
  rec.sha256 = std::string(64, '1');
  rec.label = Label::benign;
  rec.n_nodes = 3;
  rec.kind_ids = {2, score::scoret::KindVocab::kPad, 4};
  rec.byte_ids = {10, 11, 0, 0, 0,  //
                  0,  0,  0, 0, 0,  //
                  7,  0,  9, 0, 0};

  score::sm::TokenSeq seq = score::sm::to_token_seq(rec, vocab, caps);
  CHECK(seq.n_tokens == 3);
  CHECK(seq.syn_window == uint32_t(score::sm::kKindCharWindow));
  CHECK(seq.byte_window == caps.b_cap);

  const std::string& name0 = vocab.kinds()[0];
  REQUIRE(seq.syn_len(0) == name0.size());
  for (size_t j = 0; j < name0.size(); j++)
    CHECK(seq.syn_ids[seq.syn_off[0] + j] ==
          uint32_t((unsigned char)name0[j]) + 2);
  CHECK(seq.syn_len(1) == 0);  // pad id carries no kind name
  const std::string& name2 = vocab.kinds()[2];
  CHECK(seq.syn_len(2) == name2.size());
  CHECK(seq.byte_off == std::vector<uint32_t>{0, 2, 2, 5});
  CHECK(seq.byte_ids == std::vector<uint32_t>{10, 11, 7, 0, 9});
}

TEST_CASE("model digest tracks configuration and vocabulary") {
  score::sm::SmConfig cfg = tiny_config();
  std::string base =
      score::sm::SmModel<double>::compute_digest(cfg, 258, kSynWin, kByteWin,
                                                 "vhash");
  CHECK(base ==
        score::sm::SmModel<double>::compute_digest(cfg, 258, kSynWin, kByteWin,
                                                   "vhash"));
  CHECK(base !=
        score::sm::SmModel<double>::compute_digest(cfg, 258, kSynWin, kByteWin,
                                                   "other"));
  score::sm::SmConfig dft = cfg;
  dft.traversal = score::scoret::Traversal::dft;
  CHECK(base !=
        score::sm::SmModel<double>::compute_digest(dft, 258, kSynWin, kByteWin,
                                                   "vhash"));
  score::sm::SmConfig wide = cfg;
  wide.desk_profile = false;
  CHECK(base !=
        score::sm::SmModel<double>::compute_digest(wide, 258, kSynWin,
                                                   kByteWin, "vhash"));
  CHECK(base !=
        score::sm::SmModel<double>::compute_digest(cfg, 258, kSynWin + 1,
                                                   kByteWin, "vhash"));

  score::sm::SmModel<double> m = tiny_model();
  CHECK(m.digest == base);
}

TEST_CASE("tree featureset pins the syntactic vocabulary to byte ids") {
  score::sm::SmModel<double> m = tiny_model();
  CHECK(m.syn_rows == 258);  // the 64 passed to init is for scope atoms only
  CHECK(m.syn.embed.shape[0] == 258);
  CHECK(m.syn.conv_w.size() == 3);

  score::sm::SmConfig cfg = tiny_config();
  cfg.feature_kind = score::sm::FeatureKind::score_h;
  score::sm::SmModel<double> h;
  h.init(cfg, 64, kSynWin, kByteWin, "vhash");
  CHECK(h.syn_rows == 64);
  CHECK(h.syn.embed.shape[0] == 64);
  CHECK(h.syn.conv_w.size() == 6);
  CHECK(h.digest != m.digest);
}

TEST_CASE("checkpoint tensor set adds only the decision threshold") {
  score::sm::SmModel<double> m = tiny_model();
  auto trained = m.tensors();
  auto stored = m.checkpoint_tensors();
  CHECK(stored.size() == trained.size() + 1);
  for (auto* t : trained) CHECK(t->name != "head.threshold");
  CHECK(stored.back()->name == "head.threshold");
  CHECK(stored.back()->data[0] == 0.5);
}

TEST_CASE("untrained model scores exactly one half") {
  score::sm::SmModel<double> m = tiny_model();
  score::sm::TokenSeq seq = make_seq(1, 5, Label::benign, kSynWin, kByteWin);
  // the output head starts at zero, so the logit is zero regardless of input
  score::sm::SmVerdict v = score::sm::predict_sm(m, seq);
  CHECK(v.score == 0.5);
  CHECK(v.threshold == 0.5);
  CHECK(v.label == Label::malicious);  // score >= threshold flags
}

TEST_CASE("explicit threshold overrides the stored default") {
  score::sm::SmModel<double> m = tiny_model();
  score::sm::TokenSeq seq = make_seq(2, 5, Label::benign, kSynWin, kByteWin);
  score::sm::SmVerdict hi = score::sm::predict_sm(m, seq, 0.75);
  CHECK(hi.threshold == 0.75);
  CHECK(hi.label == Label::benign);
  score::sm::SmVerdict lo = score::sm::predict_sm(m, seq, 0.25);
  CHECK(lo.threshold == 0.25);
  CHECK(lo.label == Label::malicious);

  m.threshold.data[0] = 0.9;
  score::sm::SmVerdict stored = score::sm::predict_sm(m, seq);
  CHECK(stored.threshold == 0.9);
  CHECK(stored.label == Label::benign);
}

TEST_CASE("empty token sequences are rejected") {
  score::sm::SmModel<double> m = tiny_model();
  score::sm::TokenSeq empty;
  empty.sha256 = std::string(64, '0');
  empty.syn_off.push_back(0);
  empty.byte_off.push_back(0);
  empty.syn_window = kSynWin;
  empty.byte_window = kByteWin;
  CHECK_THROWS_AS(score::sm::predict_sm(m, empty), score::ConfigError);
}

TEST_CASE("batch scoring matches one-at-a-time prediction") {
  score::sm::SmModel<double> m = tiny_model();
  std::vector<score::sm::TokenSeq> seqs = make_split(40, 7);
  std::vector<double> batched = score::sm::sm_scores(m, seqs, 3);
  REQUIRE(batched.size() == seqs.size());
  for (size_t i = 0; i < seqs.size(); i++) {
    double solo = score::sm::predict_sm(m, seqs[i]).score;
    CHECK(batched[i] == doctest::Approx(solo).epsilon(1e-9));
    CHECK(batched[i] > 0.0);
    CHECK(batched[i] < 1.0);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  std::vector<score::sm::TokenSeq> train = make_split(100, 8);
  std::vector<score::sm::TokenSeq> val = make_split(200, 4);

  score::sm::SmModel<double> a = tiny_model();
  std::ostringstream log_a;
  score::sm::SmTrainResult ra = score::sm::train_sm(a, train, val, 0.25,
                                                    &log_a);
  score::sm::SmModel<double> b = tiny_model();
  std::ostringstream log_b;
  score::sm::SmTrainResult rb = score::sm::train_sm(b, train, val, 0.25,
                                                    &log_b);

  REQUIRE(ra.log.size() == size_t(tiny_config().epochs));
  CHECK(log_a.str() == log_b.str());
  CHECK(ra.best_epoch == rb.best_epoch);
  CHECK(ra.threshold == rb.threshold);
  REQUIRE(ra.checkpoint.tensors.size() == rb.checkpoint.tensors.size());
  for (size_t i = 0; i < ra.checkpoint.tensors.size(); i++) {
    CHECK(ra.checkpoint.tensors[i].name == rb.checkpoint.tensors[i].name);
    CHECK(ra.checkpoint.tensors[i].values == rb.checkpoint.tensors[i].values);
  }

  score::sm::SmModel<double> c;
  score::sm::SmConfig other = tiny_config();
  other.seed = 8;
  c.init(other, 64, kSynWin, kByteWin, "vhash");
  score::sm::SmTrainResult rc = score::sm::train_sm(c, train, val, 0.25);
  CHECK(rc.log[0].train_loss != ra.log[0].train_loss);
}

TEST_CASE("training keeps the best validation epoch") {
  std::vector<score::sm::TokenSeq> train = make_split(300, 10);
  std::vector<score::sm::TokenSeq> val = make_split(400, 6);
  score::sm::SmModel<double> m = tiny_model();
  score::sm::SmTrainResult r = score::sm::train_sm(m, train, val, 0.25);

  double best = 0.0;
  for (const auto& e : r.log) best = std::max(best, e.val_auroc);
  CHECK(r.best_val_auroc == best);
  CHECK(r.log[size_t(r.best_epoch)].val_auroc == best);

  // the model left behind is the best epoch, so rescoring reproduces it
  std::vector<double> scores = score::sm::sm_scores(m, val, 4);
  std::vector<int> labels;
  for (const auto& s : val)
    labels.push_back(s.label == Label::malicious ? 1 : 0);
  CHECK(score::eval::auroc(scores, labels) ==
        doctest::Approx(r.best_val_auroc).epsilon(1e-12));
  CHECK(m.threshold.data[0] == r.threshold);

  // stored checkpoint carries the calibrated threshold
  bool found = false;
  for (const auto& t : r.checkpoint.tensors)
    if (t.name == "head.threshold") {
      found = true;
      CHECK(double(t.values[0]) == doctest::Approx(r.threshold));
    }
  CHECK(found);
}

TEST_CASE("checkpoints only load into a matching model") {
  std::vector<score::sm::TokenSeq> train = make_split(500, 8);
  std::vector<score::sm::TokenSeq> val = make_split(600, 4);
  score::sm::SmModel<double> m = tiny_model();
  score::sm::SmTrainResult r = score::sm::train_sm(m, train, val, 0.25);

  score::sm::SmModel<double> fresh = tiny_model();
  score::sm::load_sm_weights(fresh, r.checkpoint);
  CHECK(fresh.threshold.data[0] == doctest::Approx(r.threshold));
  score::sm::TokenSeq probe = make_seq(9, 6, Label::malicious, kSynWin,
                                       kByteWin);
  CHECK(score::sm::predict_sm(fresh, probe).score ==
        doctest::Approx(score::sm::predict_sm(m, probe).score)
            .epsilon(1e-12));

  score::sm::SmModel<double> other;
  score::sm::SmConfig cfg = tiny_config();
  cfg.lstm_hidden = 32;
  other.init(cfg, 64, kSynWin, kByteWin, "vhash");
  CHECK_THROWS_AS(score::sm::load_sm_weights(other, r.checkpoint),
                  score::FormatError);
}

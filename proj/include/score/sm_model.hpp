#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "score/common.hpp"
#include "score/eval.hpp"
#include "score/nn/adam.hpp"
#include "score/nn/checkpoint.hpp"
#include "score/nn/layers.hpp"
#include "score/score_h.hpp"
#include "score/score_t.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

namespace score::sm {

enum class FeatureKind : uint8_t { score_h = 0, score_t = 1 };

inline const char* to_string(FeatureKind k) {
  return k == FeatureKind::score_h ? "score_h" : "score_t";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "score_h") return FeatureKind::score_h;
  if (s == "score_t") return FeatureKind::score_t;
  throw ConfigError("unknown feature kind: " + std::string(s));
}

struct ConvSpec {
  int filters = 0;
  int kernel = 0;
};

// Kind names feed the syntactic convolutions of the tree featureset as
// character windows of this length; the longest unified kind name is
// well under it.
inline constexpr int kKindCharWindow = 32;

// Sequential detector configuration. Paper-scale dimensions are the
// defaults; desk_profile divides the widths by four for training runs
// that have to fit a small time budget.
struct SmConfig {
  FeatureKind feature_kind = FeatureKind::score_t;
  scoret::Traversal traversal = scoret::Traversal::bft;
  int lstm_layers = 2;
  int lstm_hidden = 256;
  int atom_embed_dim = 64;
  int byte_embed_dim = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 20;
  uint64_t seed = 1;
  bool desk_profile = false;

  int scale() const { return desk_profile ? 4 : 1; }
  int syn_dim() const { return std::max(1, atom_embed_dim / scale()); }
  int byte_dim() const { return std::max(1, byte_embed_dim / scale()); }
  int hidden() const { return std::max(1, lstm_hidden / scale()); }

  std::vector<ConvSpec> syntactic_convs() const {
    std::vector<ConvSpec> specs;
    if (feature_kind == FeatureKind::score_h)
      specs = {{64, 1}, {128, 2}, {192, 3}, {64, 6}, {128, 12}, {192, 18}};
    else
      specs = {{64, 6}, {128, 12}, {192, 18}};
    for (ConvSpec& s : specs) s.filters = std::max(1, s.filters / scale());
    return specs;
  }

  std::vector<ConvSpec> byte_convs() const {
    std::vector<ConvSpec> specs = {{64, 16}, {128, 32}, {192, 128}};
    for (ConvSpec& s : specs) s.filters = std::max(1, s.filters / scale());
    return specs;
  }
};

// One script as the detector consumes it: a sequence of tokens, each
// carrying a syntactic id window and a byte id window. Windows are
// stored trimmed at the last non-pad position (offsets index into the
// id pools), since everything past it is reconstructible padding.
struct TokenSeq {
  std::string sha256;
  Label label = Label::benign;
  std::string family;
  uint32_t n_tokens = 0;
  uint32_t syn_window = 0;
  uint32_t byte_window = 0;
  std::vector<uint32_t> syn_off;  // n_tokens + 1
  std::vector<uint32_t> byte_off;
  std::vector<uint32_t> syn_ids;
  std::vector<uint32_t> byte_ids;

  uint32_t syn_len(size_t i) const { return syn_off[i + 1] - syn_off[i]; }
  uint32_t byte_len(size_t i) const { return byte_off[i + 1] - byte_off[i]; }
};

namespace detail {

inline void push_trimmed(const uint32_t* window, uint32_t win_len,
                         std::vector<uint32_t>& pool,
                         std::vector<uint32_t>& off) {
  uint32_t lc = win_len;
  while (lc > 0 && window[lc - 1] == 0) lc--;
  pool.insert(pool.end(), window, window + lc);
  off.push_back(uint32_t(pool.size()));
}

}  // namespace detail

inline TokenSeq to_token_seq(const scoreh::EncodedHRecord& rec,
                             const scoreh::ScoreHCaps& caps) {
  TokenSeq seq;
  seq.sha256 = rec.sha256;
  seq.label = rec.label;
  seq.family = rec.family;
  seq.n_tokens = rec.enc.n_pairs;
  seq.syn_window = caps.l_a;
  seq.byte_window = caps.l_b;
  seq.syn_off.push_back(0);
  seq.byte_off.push_back(0);
  for (uint32_t i = 0; i < seq.n_tokens; i++) {
    detail::push_trimmed(rec.enc.atom_ids.data() + size_t(i) * caps.l_a,
                         caps.l_a, seq.syn_ids, seq.syn_off);
    detail::push_trimmed(rec.enc.byte_ids.data() + size_t(i) * caps.l_b,
                         caps.l_b, seq.byte_ids, seq.byte_off);
  }
  return seq;
}

inline TokenSeq to_token_seq(const scoret::EncodedTRecord& rec,
                             const scoret::KindVocab& vocab,
                             const scoret::ScoreTCaps& caps) {
  TokenSeq seq;
  seq.sha256 = rec.sha256;
  seq.label = rec.label;
  seq.family = rec.family;
  seq.n_tokens = rec.n_nodes;
  seq.syn_window = kKindCharWindow;
  seq.byte_window = caps.b_cap;
  seq.syn_off.push_back(0);
  seq.byte_off.push_back(0);
  const auto& kinds = vocab.kinds();
  for (uint32_t i = 0; i < seq.n_tokens; i++) {
    uint32_t kid = rec.kind_ids[i];
    if (kid >= 2) {
      const std::string& name = kinds[kid - 2];
      uint32_t n = uint32_t(std::min<size_t>(name.size(), kKindCharWindow));
      for (uint32_t j = 0; j < n; j++)
        seq.syn_ids.push_back(uint32_t((unsigned char)name[j]) + 2);
    }
    seq.syn_off.push_back(uint32_t(seq.syn_ids.size()));
    detail::push_trimmed(rec.byte_ids.data() + size_t(i) * caps.b_cap,
                         caps.b_cap, seq.byte_ids, seq.byte_off);
  }
  return seq;
}

namespace detail {

// Content lengths are quantized up this ladder before batching, so
// tokens fall into few distinct convolution shapes. Padding content to
// the bucket length is exact: padded rows embed to zero vectors, and a
// window position over zeros reproduces the bias-only candidate.
inline constexpr int kBucketLadder[] = {1,  2,  3,  4,   6,   8,   12,  16, 24,
                                        32, 48, 64, 96, 128, 192, 256, 384,
                                        512};

inline int quantize_len(uint32_t lc, uint32_t window) {
  for (int step : kBucketLadder)
    if (uint32_t(step) >= lc) return int(std::min<uint32_t>(step, window));
  return int(window);
}

}  // namespace detail

// Parameters for one feature side: id embedding, parallel banks of
// width-F_i kernel-K_i convolutions over the embedded window, and a
// highway layer over the concatenated pooled filters.
template <class Real>
struct SmSideParams {
  nn::Tensor<Real> embed;
  std::vector<nn::Tensor<Real>> conv_w, conv_b;
  nn::HighwayParams<Real> highway;
  std::vector<ConvSpec> specs;
  int window = 0;

  int out_dim() const {
    int sum = 0;
    for (const ConvSpec& s : specs) sum += s.filters;
    return sum;
  }

  void init(const std::string& prefix, int rows, int dim, int win,
            const std::vector<ConvSpec>& conv_specs, Rng& rng) {
    specs = conv_specs;
    window = win;
    embed = nn::Tensor<Real>(prefix + ".embed", {rows, dim});
    embed.init_kaiming(rng, dim);
    std::fill(embed.data.begin(), embed.data.begin() + dim, Real(0));
    conv_w.clear();
    conv_b.clear();
    for (size_t i = 0; i < specs.size(); i++) {
      nn::Tensor<Real> w(prefix + ".conv" + std::to_string(i) + ".w",
                         {specs[i].filters, specs[i].kernel * dim});
      w.init_kaiming(rng, specs[i].kernel * dim);
      conv_w.push_back(std::move(w));
      conv_b.emplace_back(prefix + ".conv" + std::to_string(i) + ".b",
                          std::vector<int>{specs[i].filters});
    }
    highway.init(prefix + ".highway", out_dim(), rng);
  }

  std::vector<nn::Tensor<Real>*> tensors() {
    std::vector<nn::Tensor<Real>*> out{&embed};
    for (size_t i = 0; i < conv_w.size(); i++) {
      out.push_back(&conv_w[i]);
      out.push_back(&conv_b[i]);
    }
    for (auto* t : highway.tensors()) out.push_back(t);
    return out;
  }
};

template <class Real>
struct SmModel {
  SmConfig cfg;
  uint32_t syn_rows = 0;
  std::string vocab_hash;
  std::string digest;

  SmSideParams<Real> syn, byte;
  nn::BilstmParams<Real> lstm;
  nn::AttentionParams<Real> attn;
  nn::Tensor<Real> out_w, out_b;
  nn::Tensor<Real> threshold;  // decision default, not a trained weight

  int joint_dim() const { return syn.out_dim() + byte.out_dim(); }

  static std::string compute_digest(const SmConfig& cfg, uint32_t syn_rows,
                                    uint32_t syn_window, uint32_t byte_window,
                                    const std::string& vocab_hash) {
    std::string text = "sm-config-v1\n";
    text += std::string("feature=") + to_string(cfg.feature_kind) + "\n";
    text += std::string("traversal=") + scoret::to_string(cfg.traversal) + "\n";
    auto add = [&](const char* k, long long v) {
      text += std::string(k) + "=" + std::to_string(v) + "\n";
    };
    add("syn_rows", syn_rows);
    add("syn_window", syn_window);
    add("byte_window", byte_window);
    add("syn_dim", cfg.syn_dim());
    add("byte_dim", cfg.byte_dim());
    add("hidden", cfg.hidden());
    add("layers", cfg.lstm_layers);
    auto add_convs = [&](const char* k, const std::vector<ConvSpec>& specs) {
      text += std::string(k) + "=";
      for (size_t i = 0; i < specs.size(); i++) {
        if (i) text += ",";
        text += std::to_string(specs[i].filters) + ":" +
                std::to_string(specs[i].kernel);
      }
      text += "\n";
    };
    add_convs("syn_convs", cfg.syntactic_convs());
    add_convs("byte_convs", cfg.byte_convs());
    text += "vocab=" + vocab_hash + "\n";
    return sha256_hex(text);
  }

  // syn_vocab_rows: atom vocabulary size for the scope-token featureset,
  // ignored for the tree featureset (kind names are consumed as bytes).
  void init(const SmConfig& config, uint32_t syn_vocab_rows,
            uint32_t syn_window, uint32_t byte_window,
            const std::string& vocab_hash_in) {
    cfg = config;
    vocab_hash = vocab_hash_in;
    syn_rows = cfg.feature_kind == FeatureKind::score_h ? syn_vocab_rows : 258;
    Rng rng(cfg.seed);
    syn.init("syn", int(syn_rows), cfg.syn_dim(), int(syn_window),
             cfg.syntactic_convs(), rng);
    byte.init("byte", 258, cfg.byte_dim(), int(byte_window), cfg.byte_convs(),
              rng);
    lstm.init("lstm", joint_dim(), cfg.hidden(), cfg.lstm_layers, rng);
    attn.init("attn", 2 * cfg.hidden(), cfg.hidden(), rng);
    out_w = nn::Tensor<Real>("head.w", {1, 2 * cfg.hidden()});
    out_b = nn::Tensor<Real>("head.b", {1});
    threshold = nn::Tensor<Real>("head.threshold", {1});
    threshold.fill(Real(0.5));
    digest = compute_digest(cfg, syn_rows, syn_window, byte_window,
                            vocab_hash);
  }

  std::vector<nn::Tensor<Real>*> tensors() {
    std::vector<nn::Tensor<Real>*> out;
    for (auto* t : syn.tensors()) out.push_back(t);
    for (auto* t : byte.tensors()) out.push_back(t);
    for (auto* t : lstm.tensors()) out.push_back(t);
    for (auto* t : attn.tensors()) out.push_back(t);
    out.push_back(&out_w);
    out.push_back(&out_b);
    return out;
  }

  std::vector<nn::Tensor<Real>*> checkpoint_tensors() {
    auto out = tensors();
    out.push_back(&threshold);
    return out;
  }
};

// ------------------------------------------------- batched side pipeline

template <class Real>
struct ConvSideCtx {
  struct Bucket {
    int lc = 0;
    std::vector<uint32_t> tokens;  // indices into the batch token axis
    std::vector<uint32_t> ids;     // [B, lc] padded to the bucket length
    std::vector<Real> x;           // [B, lc*D] embedded content
    std::vector<nn::ConvPoolCtx<Real>> mod;
  };
  std::vector<Bucket> buckets;
  int total = 0;
  std::vector<Real> concat;  // [total, out_dim] pooled filters
  nn::HighwayCtx<Real> hw;
  std::vector<Real> out;  // [total, out_dim]
};

// ids/offsets describe `total` tokens of window content (trimmed); the
// result is one pooled feature row per token.
template <class Real>
void conv_side_forward(SmSideParams<Real>& p, const std::vector<uint32_t>& ids,
                       const std::vector<uint32_t>& off, int total,
                       ConvSideCtx<Real>& ctx) {
  const int d = int(p.embed.shape[1]);
  const int fsum = p.out_dim();
  ctx.total = total;
  ctx.buckets.clear();
  std::map<int, std::vector<uint32_t>> grouped;
  for (int i = 0; i < total; i++) {
    uint32_t lc = off[i + 1] - off[i];
    grouped[detail::quantize_len(lc, uint32_t(p.window))].push_back(
        uint32_t(i));
  }
  ctx.concat.assign(size_t(total) * fsum, Real(0));
  for (auto& [lq, tokens] : grouped) {
    typename ConvSideCtx<Real>::Bucket bucket;
    bucket.lc = lq;
    bucket.tokens = std::move(tokens);
    const int nb = int(bucket.tokens.size());
    bucket.ids.assign(size_t(nb) * lq, 0);
    for (int b = 0; b < nb; b++) {
      uint32_t tok = bucket.tokens[b];
      std::copy(ids.begin() + off[tok], ids.begin() + off[tok + 1],
                bucket.ids.begin() + size_t(b) * lq);
    }
    bucket.x.assign(size_t(nb) * lq * d, Real(0));
    nn::gather_forward(p.embed, bucket.ids.data(), nb * lq, bucket.x.data());
    bucket.mod.resize(p.specs.size());
    std::vector<Real> pooled;
    int foff = 0;
    for (size_t m = 0; m < p.specs.size(); m++) {
      const int f = p.specs[m].filters;
      pooled.assign(size_t(nb) * f, Real(0));
      nn::conv_relu_maxpool_forward(bucket.x.data(), nb, lq, d, p.conv_w[m],
                                    p.conv_b[m], p.specs[m].kernel, p.window,
                                    pooled.data(), &bucket.mod[m]);
      for (int b = 0; b < nb; b++)
        std::copy(pooled.begin() + size_t(b) * f,
                  pooled.begin() + size_t(b + 1) * f,
                  ctx.concat.begin() + size_t(bucket.tokens[b]) * fsum + foff);
      foff += f;
    }
    ctx.buckets.push_back(std::move(bucket));
  }
  ctx.out.assign(size_t(total) * fsum, Real(0));
  nn::highway_forward(ctx.concat.data(), total, fsum, p.highway,
                      ctx.out.data(), &ctx.hw);
}

template <class Real>
void conv_side_backward(SmSideParams<Real>& p, const Real* dout,
                        ConvSideCtx<Real>& ctx) {
  const int d = int(p.embed.shape[1]);
  const int fsum = p.out_dim();
  std::vector<Real> dconcat(size_t(ctx.total) * fsum, Real(0));
  nn::highway_backward(dout, ctx.concat.data(), ctx.total, fsum, p.highway,
                       ctx.hw, dconcat.data());
  std::vector<Real> dx, slice;
  for (auto& bucket : ctx.buckets) {
    const int nb = int(bucket.tokens.size());
    const int lq = bucket.lc;
    dx.assign(size_t(nb) * lq * d, Real(0));
    int foff = 0;
    for (size_t m = 0; m < p.specs.size(); m++) {
      const int f = p.specs[m].filters;
      slice.assign(size_t(nb) * f, Real(0));
      for (int b = 0; b < nb; b++)
        std::copy(
            dconcat.begin() + size_t(bucket.tokens[b]) * fsum + foff,
            dconcat.begin() + size_t(bucket.tokens[b]) * fsum + foff + f,
            slice.begin() + size_t(b) * f);
      nn::conv_relu_maxpool_backward(slice.data(), bucket.x.data(), p.conv_w[m],
                                     p.conv_b[m], bucket.mod[m], dx.data());
      foff += f;
    }
    nn::gather_backward(p.embed, bucket.ids.data(), nb * lq, dx.data());
  }
}

// ------------------------------------------------------- batch forward

template <class Real>
struct SeqHeadCtx {
  nn::BilstmCtx<Real> lstm;
  nn::AttentionCtx<Real> attn;
  std::vector<Real> lstm_out;  // [T, 2H]
  std::vector<Real> pooled;    // [2H]
};

template <class Real>
struct SmBatchCtx {
  std::vector<const TokenSeq*> seqs;
  int total = 0;
  std::vector<uint32_t> starts;  // per-seq token offset
  std::vector<uint32_t> syn_ids, byte_ids, syn_off, byte_off;
  ConvSideCtx<Real> syn, byte;
  std::vector<Real> joint;  // [total, J]
  std::vector<SeqHeadCtx<Real>> heads;
  std::vector<Real> probs;  // per seq
};

template <class Real>
void sm_forward(SmModel<Real>& m, const std::vector<const TokenSeq*>& seqs,
                SmBatchCtx<Real>& ctx) {
  ctx.seqs = seqs;
  ctx.total = 0;
  ctx.starts.assign(seqs.size() + 1, 0);
  for (size_t s = 0; s < seqs.size(); s++) {
    if (seqs[s]->n_tokens == 0)
      throw ConfigError("empty token sequence: " + seqs[s]->sha256);
    ctx.starts[s] = uint32_t(ctx.total);
    ctx.total += int(seqs[s]->n_tokens);
  }
  ctx.starts[seqs.size()] = uint32_t(ctx.total);
  ctx.syn_ids.clear();
  ctx.byte_ids.clear();
  ctx.syn_off.assign(1, 0);
  ctx.byte_off.assign(1, 0);
  for (const TokenSeq* seq : seqs) {
    for (uint32_t i = 0; i < seq->n_tokens; i++) {
      ctx.syn_ids.insert(ctx.syn_ids.end(),
                         seq->syn_ids.begin() + seq->syn_off[i],
                         seq->syn_ids.begin() + seq->syn_off[i + 1]);
      ctx.syn_off.push_back(uint32_t(ctx.syn_ids.size()));
      ctx.byte_ids.insert(ctx.byte_ids.end(),
                          seq->byte_ids.begin() + seq->byte_off[i],
                          seq->byte_ids.begin() + seq->byte_off[i + 1]);
      ctx.byte_off.push_back(uint32_t(ctx.byte_ids.size()));
    }
  }
  conv_side_forward(m.syn, ctx.syn_ids, ctx.syn_off, ctx.total, ctx.syn);
  conv_side_forward(m.byte, ctx.byte_ids, ctx.byte_off, ctx.total, ctx.byte);
  const int fs = m.syn.out_dim(), fb = m.byte.out_dim();
  const int j = fs + fb;
  ctx.joint.assign(size_t(ctx.total) * j, Real(0));
  for (int t = 0; t < ctx.total; t++) {
    std::copy(ctx.syn.out.begin() + size_t(t) * fs,
              ctx.syn.out.begin() + size_t(t + 1) * fs,
              ctx.joint.begin() + size_t(t) * j);
    std::copy(ctx.byte.out.begin() + size_t(t) * fb,
              ctx.byte.out.begin() + size_t(t + 1) * fb,
              ctx.joint.begin() + size_t(t) * j + fs);
  }
  const int h2 = 2 * m.cfg.hidden();
  ctx.heads.assign(seqs.size(), {});
  ctx.probs.assign(seqs.size(), Real(0));
  for (size_t s = 0; s < seqs.size(); s++) {
    SeqHeadCtx<Real>& head = ctx.heads[s];
    const int t_len = int(seqs[s]->n_tokens);
    head.lstm_out.assign(size_t(t_len) * h2, Real(0));
    nn::bilstm_forward(ctx.joint.data() + size_t(ctx.starts[s]) * j, t_len, j,
                       m.lstm, head.lstm_out.data(), head.lstm);
    head.pooled.assign(h2, Real(0));
    nn::attention_forward(head.lstm_out.data(), t_len, h2, m.attn,
                          head.pooled.data(), head.attn);
    Real logit = m.out_b.data[0];
    for (int i = 0; i < h2; i++) logit += m.out_w.data[i] * head.pooled[i];
    ctx.probs[s] = Real(1) / (Real(1) + std::exp(-logit));
  }
}

// dlogit: one gradient per sequence at the pre-sigmoid output.
template <class Real>
void sm_backward(SmModel<Real>& m, const std::vector<Real>& dlogit,
                 SmBatchCtx<Real>& ctx) {
  const int fs = m.syn.out_dim(), fb = m.byte.out_dim();
  const int j = fs + fb;
  const int h2 = 2 * m.cfg.hidden();
  std::vector<Real> djoint(size_t(ctx.total) * j, Real(0));
  for (size_t s = 0; s < ctx.seqs.size(); s++) {
    SeqHeadCtx<Real>& head = ctx.heads[s];
    const int t_len = int(ctx.seqs[s]->n_tokens);
    Real g = dlogit[s];
    std::vector<Real> dpooled(h2);
    for (int i = 0; i < h2; i++) {
      dpooled[i] = g * m.out_w.data[i];
      m.out_w.grad[i] += g * head.pooled[i];
    }
    m.out_b.grad[0] += g;
    std::vector<Real> dlstm(size_t(t_len) * h2, Real(0));
    nn::attention_backward(dpooled.data(), head.lstm_out.data(), t_len, h2,
                           m.attn, head.attn, dlstm.data());
    nn::bilstm_backward(dlstm.data(), t_len, j, m.lstm, head.lstm,
                        djoint.data() + size_t(ctx.starts[s]) * j);
  }
  std::vector<Real> dsyn(size_t(ctx.total) * fs), dbyte(size_t(ctx.total) * fb);
  for (int t = 0; t < ctx.total; t++) {
    std::copy(djoint.begin() + size_t(t) * j,
              djoint.begin() + size_t(t) * j + fs,
              dsyn.begin() + size_t(t) * fs);
    std::copy(djoint.begin() + size_t(t) * j + fs,
              djoint.begin() + size_t(t + 1) * j,
              dbyte.begin() + size_t(t) * fb);
  }
  conv_side_backward(m.syn, dsyn.data(), ctx.syn);
  conv_side_backward(m.byte, dbyte.data(), ctx.byte);
}

// Scores a set of sequences in batches; returns one probability each.
template <class Real>
std::vector<double> sm_scores(SmModel<Real>& m,
                              const std::vector<TokenSeq>& seqs,
                              int batch_size) {
  std::vector<double> out;
  out.reserve(seqs.size());
  SmBatchCtx<Real> ctx;
  for (size_t at = 0; at < seqs.size(); at += size_t(batch_size)) {
    std::vector<const TokenSeq*> batch;
    for (size_t i = at; i < std::min(seqs.size(), at + size_t(batch_size)); i++)
      batch.push_back(&seqs[i]);
    sm_forward(m, batch, ctx);
    for (Real p : ctx.probs) out.push_back(double(p));
  }
  return out;
}

// --------------------------------------------------------------- training

struct TrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
};

struct SmTrainResult {
  nn::CheckpointData checkpoint;  // best validation epoch, threshold set
  std::vector<TrainLogEntry> log;
  double best_val_auroc = 0.0;
  int best_epoch = -1;
  double threshold = 0.5;
};

// Minibatch Adam over binary cross-entropy. Keeps the parameters from
// the best validation epoch and calibrates the default decision
// threshold on the validation split at the target false-positive rate.
// Writes one JSON object per epoch to log_stream when given.
template <class Real>
SmTrainResult train_sm(SmModel<Real>& m, const std::vector<TokenSeq>& train,
                       const std::vector<TokenSeq>& val,
                       double target_fpr = 0.0017,
                       std::ostream* log_stream = nullptr) {
  if (train.empty()) throw ConfigError("training split is empty");
  if (val.empty()) throw ConfigError("validation split is empty");
  nn::Adam<Real> opt(m.tensors(), Real(m.cfg.lr), Real(m.cfg.weight_decay));
  std::vector<int> val_labels;
  for (const TokenSeq& s : val)
    val_labels.push_back(s.label == Label::malicious ? 1 : 0);
  SmTrainResult result;
  nn::CheckpointData best;
  std::vector<double> best_val_scores;
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); i++) order[i] = i;
  Rng shuffle_rng = Rng(m.cfg.seed).fork(0x5b);
  SmBatchCtx<Real> ctx;
  for (int epoch = 0; epoch < m.cfg.epochs; epoch++) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t at = 0; at < order.size(); at += size_t(m.cfg.batch_size)) {
      size_t stop = std::min(order.size(), at + size_t(m.cfg.batch_size));
      std::vector<const TokenSeq*> batch;
      std::vector<Real> targets;
      for (size_t i = at; i < stop; i++) {
        batch.push_back(&train[order[i]]);
        targets.push_back(
            train[order[i]].label == Label::malicious ? Real(1) : Real(0));
      }
      opt.zero_grad();
      sm_forward(m, batch, ctx);
      Real loss = nn::bce_loss(ctx.probs.data(), targets.data(),
                               int(batch.size()));
      loss_sum += double(loss) * double(batch.size());
      // combined sigmoid + cross-entropy gradient, stable in the tails
      std::vector<Real> dlogit(batch.size());
      for (size_t i = 0; i < batch.size(); i++)
        dlogit[i] = (ctx.probs[i] - targets[i]) / Real(batch.size());
      sm_backward(m, dlogit, ctx);
      opt.step();
    }
    std::vector<double> val_scores = sm_scores(m, val, m.cfg.batch_size);
    double val_auroc = eval::auroc(val_scores, val_labels);
    TrainLogEntry entry{epoch, loss_sum / double(train.size()), val_auroc};
    result.log.push_back(entry);
    if (log_stream)
      *log_stream << "{\"epoch\":" << entry.epoch
                  << ",\"train_loss\":" << entry.train_loss
                  << ",\"val_auroc\":" << entry.val_auroc << "}\n";
    if (result.best_epoch < 0 || val_auroc > result.best_val_auroc) {
      result.best_val_auroc = val_auroc;
      result.best_epoch = epoch;
      best = nn::snapshot(m.tensors(), m.digest);
      best_val_scores = val_scores;
    }
  }
  nn::restore(best, m.tensors());
  result.threshold = eval::threshold_at_fpr(best_val_scores, val_labels,
                                            target_fpr);
  m.threshold.data[0] = Real(result.threshold);
  result.checkpoint = nn::snapshot(m.checkpoint_tensors(), m.digest);
  return result;
}

// -------------------------------------------------------------- inference

struct SmVerdict {
  double score = 0.0;
  Label label = Label::benign;
  double threshold = 0.5;
};

template <class Real>
SmVerdict predict_sm(SmModel<Real>& m, const TokenSeq& seq,
                     std::optional<double> threshold = std::nullopt) {
  SmBatchCtx<Real> ctx;
  sm_forward(m, {&seq}, ctx);
  SmVerdict v;
  v.score = double(ctx.probs[0]);
  v.threshold = threshold.value_or(double(m.threshold.data[0]));
  v.label = v.score >= v.threshold ? Label::malicious : Label::benign;
  return v;
}

// Restores a checkpoint into an already-initialized model after checking
// that it was produced under the same configuration digest.
template <class Real>
void load_sm_weights(SmModel<Real>& m, const nn::CheckpointData& data) {
  if (data.config_digest != m.digest)
    throw FormatError("checkpoint digest " + data.config_digest +
                      " does not match model digest " + m.digest);
  nn::restore(data, m.checkpoint_tensors());
}

}  // namespace score::sm

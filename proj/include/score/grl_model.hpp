#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "score/common.hpp"
#include "score/nn/adam.hpp"
#include "score/nn/checkpoint.hpp"
#include "score/nn/layers.hpp"
#include "score/score_t.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

namespace score::grl {

enum class PairMode : uint8_t { label_wise = 0, threat_wise = 1 };

inline const char* to_string(PairMode m) {
  return m == PairMode::label_wise ? "label_wise" : "threat_wise";
}

inline PairMode pair_mode_from_string(std::string_view s) {
  if (s == "label_wise") return PairMode::label_wise;
  if (s == "threat_wise") return PairMode::threat_wise;
  throw ConfigError("unknown pair mode: " + std::string(s));
}

// Graph embedder configuration. Paper-scale defaults; desk_profile
// divides widths by four.
struct GrlConfig {
  int node_state_dim = 64;
  int embed_dim = 128;  // final graph embedding width
  int rounds = 5;       // message-passing rounds
  int kind_embed_dim = 32;
  int byte_embed_dim = 32;
  int edge_input_dim = 4;  // constant-ones edge feature fed to the edge MLP
  int edge_dim = 16;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  PairMode pair_mode = PairMode::label_wise;
  int pairs_per_epoch = 1024;
  int batch_pairs = 16;
  int epochs = 10;
  uint64_t seed = 1;
  bool desk_profile = false;

  int scale() const { return desk_profile ? 4 : 1; }
  int state() const { return std::max(1, node_state_dim / scale()); }
  int embed() const { return std::max(1, embed_dim / scale()); }
  int kind_dim() const { return std::max(1, kind_embed_dim / scale()); }
  int byte_dim() const { return std::max(1, byte_embed_dim / scale()); }
  int edge() const { return std::max(1, edge_dim / scale()); }
};

// Tree graph as the embedder consumes it: node kind ids, per-node byte
// content (trimmed, ids are byte value + 2), and parent->child edges.
struct GrlGraph {
  std::string sha256;
  Label label = Label::benign;
  std::string family;
  uint32_t n_nodes = 0;
  std::vector<uint32_t> kind_ids;
  std::vector<uint32_t> byte_off;  // n_nodes + 1
  std::vector<uint32_t> byte_ids;
  std::vector<std::pair<uint32_t, uint32_t>> edges;
};

inline GrlGraph to_grl_graph(const scoret::EncodedTRecord& rec,
                             const scoret::ScoreTCaps& caps) {
  GrlGraph g;
  g.sha256 = rec.sha256;
  g.label = rec.label;
  g.family = rec.family;
  g.n_nodes = rec.n_nodes;
  g.kind_ids = rec.kind_ids;
  g.edges = rec.edges;
  g.byte_off.push_back(0);
  for (uint32_t i = 0; i < rec.n_nodes; i++) {
    const uint32_t* win = rec.byte_ids.data() + size_t(i) * caps.b_cap;
    uint32_t lc = caps.b_cap;
    while (lc > 0 && win[lc - 1] == 0) lc--;
    g.byte_ids.insert(g.byte_ids.end(), win, win + lc);
    g.byte_off.push_back(uint32_t(g.byte_ids.size()));
  }
  return g;
}

template <class Real>
struct GrlModel {
  GrlConfig cfg;
  uint32_t kind_rows = 0;
  std::string vocab_hash;
  std::string digest;

  nn::Tensor<Real> kind_embed, byte_embed;
  nn::MlpParams<Real> node_mlp, edge_mlp, msg_mlp;
  nn::GruParams<Real> gru;
  nn::MlpParams<Real> gate_mlp, trans_mlp, out_mlp;

  static std::string compute_digest(const GrlConfig& cfg, uint32_t kind_rows,
                                    const std::string& vocab_hash) {
    std::string text = "grl-config-v1\n";
    auto add = [&](const char* k, long long v) {
      text += std::string(k) + "=" + std::to_string(v) + "\n";
    };
    add("kind_rows", kind_rows);
    add("state", cfg.state());
    add("embed", cfg.embed());
    add("rounds", cfg.rounds);
    add("kind_dim", cfg.kind_dim());
    add("byte_dim", cfg.byte_dim());
    add("edge_input", cfg.edge_input_dim);
    add("edge", cfg.edge());
    text += "vocab=" + vocab_hash + "\n";
    return sha256_hex(text);
  }

  void init(const GrlConfig& config, uint32_t kind_vocab_rows,
            const std::string& vocab_hash_in) {
    cfg = config;
    if (cfg.rounds < 1) throw ConfigError("propagation rounds must be >= 1");
    if (cfg.embed() < 1 || cfg.state() < 1)
      throw ConfigError("embedding and state widths must be >= 1");
    kind_rows = kind_vocab_rows;
    vocab_hash = vocab_hash_in;
    Rng rng(cfg.seed);
    const int s = cfg.state(), h = cfg.embed(), e = cfg.edge();
    kind_embed = nn::Tensor<Real>("kind_embed", {int(kind_rows),
                                                 cfg.kind_dim()});
    kind_embed.init_kaiming(rng, cfg.kind_dim());
    std::fill(kind_embed.data.begin(), kind_embed.data.begin() + cfg.kind_dim(),
              Real(0));
    byte_embed = nn::Tensor<Real>("byte_embed", {258, cfg.byte_dim()});
    byte_embed.init_kaiming(rng, cfg.byte_dim());
    std::fill(byte_embed.data.begin(), byte_embed.data.begin() + cfg.byte_dim(),
              Real(0));
    node_mlp.init("node_mlp", {cfg.kind_dim() + cfg.byte_dim(), s, s}, rng);
    edge_mlp.init("edge_mlp", {cfg.edge_input_dim, e, e}, rng);
    msg_mlp.init("msg_mlp", {2 * s + e, s, s}, rng);
    gru.init("gru", s, s, rng);
    gate_mlp.init("gate_mlp", {s, h}, rng);
    trans_mlp.init("trans_mlp", {s, h}, rng);
    out_mlp.init("out_mlp", {h, h}, rng);
    digest = compute_digest(cfg, kind_rows, vocab_hash);
  }

  std::vector<nn::Tensor<Real>*> tensors() {
    std::vector<nn::Tensor<Real>*> out{&kind_embed, &byte_embed};
    for (auto* group : {&node_mlp, &edge_mlp, &msg_mlp})
      for (auto* t : group->tensors()) out.push_back(t);
    for (auto* t : gru.tensors()) out.push_back(t);
    for (auto* group : {&gate_mlp, &trans_mlp, &out_mlp})
      for (auto* t : group->tensors()) out.push_back(t);
    return out;
  }
};

// ----------------------------------------------------------- forward pass

template <class Real>
struct GrlRoundCtx {
  std::vector<Real> h_in;    // [n, s] state entering the round
  std::vector<Real> msg_in;  // [2E, 2s+e]
  nn::MlpCtx<Real> msg_ctx;
  std::vector<Real> msgs;  // [2E, s]
  std::vector<Real> msum;  // [n, s]
  nn::GruCtx<Real> gru_ctx;
};

template <class Real>
struct GrlFwdCtx {
  int n = 0;
  std::vector<uint32_t> dst, src;  // directed edges, sorted by (dst, src)
  std::vector<Real> x;             // [n, kd+bd]
  nn::MlpCtx<Real> node_ctx, edge_ctx;
  std::vector<Real> ones;  // edge MLP input
  std::vector<Real> evec;  // [e] shared by every edge
  std::vector<GrlRoundCtx<Real>> rounds;
  std::vector<Real> h_final;                 // [n, s]
  std::vector<Real> gate, trans, pooled;     // gate/trans [n, h]
  nn::MlpCtx<Real> gate_ctx, trans_ctx, out_ctx;
  std::vector<Real> hg;  // [h] pre-tanh graph embedding
};

template <class Real>
void grl_forward(GrlModel<Real>& m, const GrlGraph& g, GrlFwdCtx<Real>& ctx) {
  if (g.n_nodes == 0) throw ConfigError("empty graph: " + g.sha256);
  const int n = int(g.n_nodes);
  const int kd = m.cfg.kind_dim(), bd = m.cfg.byte_dim();
  const int s = m.cfg.state(), h = m.cfg.embed(), e = m.cfg.edge();
  ctx.n = n;

  // node inputs: kind embedding next to the mean of the byte embeddings
  ctx.x.assign(size_t(n) * (kd + bd), Real(0));
  for (int i = 0; i < n; i++) {
    const Real* krow = m.kind_embed.data.data() + size_t(g.kind_ids[i]) * kd;
    std::copy(krow, krow + kd, ctx.x.begin() + size_t(i) * (kd + bd));
    uint32_t b0 = g.byte_off[i], b1 = g.byte_off[i + 1];
    if (b1 == b0) continue;
    Real inv = Real(1) / Real(b1 - b0);
    Real* out = ctx.x.data() + size_t(i) * (kd + bd) + kd;
    for (uint32_t b = b0; b < b1; b++) {
      const Real* row = m.byte_embed.data.data() + size_t(g.byte_ids[b]) * bd;
      for (int c = 0; c < bd; c++) out[c] += row[c] * inv;
    }
  }

  std::vector<Real> h0(size_t(n) * s);
  nn::mlp_forward(ctx.x.data(), n, m.node_mlp, h0.data(), &ctx.node_ctx);

  ctx.ones.assign(size_t(m.cfg.edge_input_dim), Real(1));
  ctx.evec.assign(size_t(e), Real(0));
  nn::mlp_forward(ctx.ones.data(), 1, m.edge_mlp, ctx.evec.data(),
                  &ctx.edge_ctx);

  ctx.dst.clear();
  ctx.src.clear();
  for (auto [p, c] : g.edges) {
    if (p >= g.n_nodes || c >= g.n_nodes)
      throw FormatError("edge endpoint past node count in " + g.sha256);
    ctx.dst.push_back(p);
    ctx.src.push_back(c);
    ctx.dst.push_back(c);
    ctx.src.push_back(p);
  }
  {
    std::vector<uint32_t> order(ctx.dst.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = uint32_t(i);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      if (ctx.dst[a] != ctx.dst[b]) return ctx.dst[a] < ctx.dst[b];
      return ctx.src[a] < ctx.src[b];
    });
    std::vector<uint32_t> dst2(order.size()), src2(order.size());
    for (size_t i = 0; i < order.size(); i++) {
      dst2[i] = ctx.dst[order[i]];
      src2[i] = ctx.src[order[i]];
    }
    ctx.dst = std::move(dst2);
    ctx.src = std::move(src2);
  }
  const int ne = int(ctx.dst.size());

  ctx.rounds.assign(size_t(m.cfg.rounds), {});
  std::vector<Real> hcur = h0;
  for (int r = 0; r < m.cfg.rounds; r++) {
    GrlRoundCtx<Real>& rc = ctx.rounds[r];
    rc.h_in = hcur;
    rc.msg_in.assign(size_t(ne) * (2 * s + e), Real(0));
    for (int i = 0; i < ne; i++) {
      Real* row = rc.msg_in.data() + size_t(i) * (2 * s + e);
      std::copy(rc.h_in.begin() + size_t(ctx.dst[i]) * s,
                rc.h_in.begin() + size_t(ctx.dst[i] + 1) * s, row);
      std::copy(rc.h_in.begin() + size_t(ctx.src[i]) * s,
                rc.h_in.begin() + size_t(ctx.src[i] + 1) * s, row + s);
      std::copy(ctx.evec.begin(), ctx.evec.end(), row + 2 * s);
    }
    rc.msgs.assign(size_t(ne) * s, Real(0));
    if (ne)
      nn::mlp_forward(rc.msg_in.data(), ne, m.msg_mlp, rc.msgs.data(),
                      &rc.msg_ctx);
    rc.msum.assign(size_t(n) * s, Real(0));
    nn::segment_sum_forward(rc.msgs.data(), ctx.dst.data(), ne, s,
                            rc.msum.data(), n);
    std::vector<Real> hnext(size_t(n) * s);
    nn::gru_forward(rc.h_in.data(), rc.msum.data(), n, s, s, m.gru,
                    hnext.data(), rc.gru_ctx);
    hcur = std::move(hnext);
  }
  ctx.h_final = hcur;

  // gated sum over nodes, then the output transform
  ctx.gate.assign(size_t(n) * h, Real(0));
  nn::mlp_forward(ctx.h_final.data(), n, m.gate_mlp, ctx.gate.data(),
                  &ctx.gate_ctx);
  nn::sigmoid_forward(ctx.gate.data(), ctx.gate.size());
  ctx.trans.assign(size_t(n) * h, Real(0));
  nn::mlp_forward(ctx.h_final.data(), n, m.trans_mlp, ctx.trans.data(),
                  &ctx.trans_ctx);
  ctx.pooled.assign(size_t(h), Real(0));
  for (int i = 0; i < n; i++)
    for (int c = 0; c < h; c++)
      ctx.pooled[c] += ctx.gate[size_t(i) * h + c] * ctx.trans[size_t(i) * h + c];
  ctx.hg.assign(size_t(h), Real(0));
  nn::mlp_forward(ctx.pooled.data(), 1, m.out_mlp, ctx.hg.data(), &ctx.out_ctx);
}

template <class Real>
void grl_backward(GrlModel<Real>& m, const GrlGraph& g,
                  const std::vector<Real>& dhg, GrlFwdCtx<Real>& ctx) {
  const int n = ctx.n;
  const int kd = m.cfg.kind_dim(), bd = m.cfg.byte_dim();
  const int s = m.cfg.state(), h = m.cfg.embed(), e = m.cfg.edge();
  const int ne = int(ctx.dst.size());

  std::vector<Real> dpooled(size_t(h), Real(0));
  nn::mlp_backward(dhg.data(), ctx.pooled.data(), 1, m.out_mlp, ctx.out_ctx,
                   dpooled.data());
  std::vector<Real> dgate(size_t(n) * h), dtrans(size_t(n) * h);
  for (int i = 0; i < n; i++)
    for (int c = 0; c < h; c++) {
      dgate[size_t(i) * h + c] = dpooled[c] * ctx.trans[size_t(i) * h + c];
      dtrans[size_t(i) * h + c] = dpooled[c] * ctx.gate[size_t(i) * h + c];
    }
  nn::sigmoid_backward(ctx.gate.data(), dgate.data(), dgate.size());
  std::vector<Real> dh(size_t(n) * s, Real(0));
  nn::mlp_backward(dgate.data(), ctx.h_final.data(), n, m.gate_mlp,
                   ctx.gate_ctx, dh.data());
  nn::mlp_backward(dtrans.data(), ctx.h_final.data(), n, m.trans_mlp,
                   ctx.trans_ctx, dh.data());

  std::vector<Real> devec(size_t(e), Real(0));
  for (int r = m.cfg.rounds - 1; r >= 0; r--) {
    GrlRoundCtx<Real>& rc = ctx.rounds[r];
    std::vector<Real> dh_prev(size_t(n) * s, Real(0));
    std::vector<Real> dmsum(size_t(n) * s, Real(0));
    nn::gru_backward(dh.data(), rc.h_in.data(), rc.msum.data(), n, s, s, m.gru,
                     rc.gru_ctx, dh_prev.data(), dmsum.data());
    if (ne) {
      std::vector<Real> dmsgs(size_t(ne) * s);
      nn::segment_sum_backward(dmsum.data(), ctx.dst.data(), ne, s,
                               dmsgs.data());
      std::vector<Real> dmsg_in(size_t(ne) * (2 * s + e), Real(0));
      nn::mlp_backward(dmsgs.data(), rc.msg_in.data(), ne, m.msg_mlp,
                       rc.msg_ctx, dmsg_in.data());
      for (int i = 0; i < ne; i++) {
        const Real* row = dmsg_in.data() + size_t(i) * (2 * s + e);
        Real* ddst = dh_prev.data() + size_t(ctx.dst[i]) * s;
        Real* dsrc = dh_prev.data() + size_t(ctx.src[i]) * s;
        for (int c = 0; c < s; c++) {
          ddst[c] += row[c];
          dsrc[c] += row[s + c];
        }
        for (int c = 0; c < e; c++) devec[c] += row[2 * s + c];
      }
    }
    dh = std::move(dh_prev);
  }

  std::vector<Real> dones(size_t(m.cfg.edge_input_dim), Real(0));
  nn::mlp_backward(devec.data(), ctx.ones.data(), 1, m.edge_mlp, ctx.edge_ctx,
                   dones.data());

  std::vector<Real> dx(size_t(n) * (kd + bd), Real(0));
  nn::mlp_backward(dh.data(), ctx.x.data(), n, m.node_mlp, ctx.node_ctx,
                   dx.data());
  for (int i = 0; i < n; i++) {
    uint32_t kid = g.kind_ids[i];
    const Real* drow = dx.data() + size_t(i) * (kd + bd);
    if (kid != 0) {
      Real* krow = m.kind_embed.grad.data() + size_t(kid) * kd;
      for (int c = 0; c < kd; c++) krow[c] += drow[c];
    }
    uint32_t b0 = g.byte_off[i], b1 = g.byte_off[i + 1];
    if (b1 == b0) continue;
    Real inv = Real(1) / Real(b1 - b0);
    for (uint32_t b = b0; b < b1; b++) {
      Real* row = m.byte_embed.grad.data() + size_t(g.byte_ids[b]) * bd;
      for (int c = 0; c < bd; c++) row[c] += drow[kd + c] * inv;
    }
  }
}

// Pre-tanh graph embedding for downstream classifiers.
template <class Real>
std::vector<double> grl_embed(GrlModel<Real>& m, const GrlGraph& g) {
  GrlFwdCtx<Real> ctx;
  grl_forward(m, g, ctx);
  return std::vector<double>(ctx.hg.begin(), ctx.hg.end());
}

// ----------------------------------------------------- pair loss machinery

// Mean of elementwise tanh agreement; +1 on identical sign-saturated
// embeddings, -1 on opposite ones.
template <class Real>
Real hamming_similarity(const std::vector<Real>& a, const std::vector<Real>& b) {
  if (a.size() != b.size())
    throw ConfigError("embedding length mismatch: " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()));
  if (a.empty()) throw ConfigError("empty embeddings");
  Real sum = Real(0);
  for (size_t i = 0; i < a.size(); i++)
    sum += std::tanh(a[i]) * std::tanh(b[i]);
  return sum / Real(a.size());
}

// loss = (ell - s)^2 / 4; bounded to [0, 1] since s and ell are in [-1, 1]
template <class Real>
Real pair_loss(Real similarity, int ell) {
  Real d = Real(ell) - similarity;
  return d * d / Real(4);
}

// Gradients of the pair loss through the similarity into both pre-tanh
// embeddings; accumulates into da/db.
template <class Real>
void pair_loss_backward(const std::vector<Real>& a, const std::vector<Real>& b,
                        int ell, Real weight, std::vector<Real>& da,
                        std::vector<Real>& db) {
  Real s = hamming_similarity(a, b);
  Real ds = weight * (s - Real(ell)) / Real(2);
  Real inv = Real(1) / Real(a.size());
  for (size_t i = 0; i < a.size(); i++) {
    Real ta = std::tanh(a[i]), tb = std::tanh(b[i]);
    da[i] += ds * inv * (Real(1) - ta * ta) * tb;
    db[i] += ds * inv * (Real(1) - tb * tb) * ta;
  }
}

// ------------------------------------------------------------ pair sampling

struct PairSample {
  uint32_t a = 0;
  uint32_t b = 0;
  int ell = 1;
};

// Balanced positive/negative pairs. label_wise groups by label;
// threat_wise groups malicious samples by family (each must carry one)
// and treats all benign samples as one pseudo-family.
inline std::vector<PairSample> sample_pairs(const std::vector<GrlGraph>& graphs,
                                            PairMode mode, uint64_t seed,
                                            size_t count) {
  std::map<std::string, std::vector<uint32_t>> groups;
  for (uint32_t i = 0; i < graphs.size(); i++) {
    const GrlGraph& g = graphs[i];
    if (mode == PairMode::label_wise) {
      groups[g.label == Label::malicious ? "malicious" : "benign"].push_back(i);
    } else {
      if (g.label == Label::benign) {
        groups["\tbenign"].push_back(i);
      } else {
        if (g.family.empty())
          throw ConfigError("threat-wise pairing needs family tags: " +
                            g.sha256);
        groups[g.family].push_back(i);
      }
    }
  }
  std::vector<const std::vector<uint32_t>*> all, big;
  for (auto& [_, members] : groups) {
    all.push_back(&members);
    if (members.size() >= 2) big.push_back(&members);
  }
  if (all.size() < 2)
    throw ConfigError("pair sampling needs at least two groups");
  if (big.empty())
    throw ConfigError("pair sampling needs a group with two members");
  Rng rng(seed);
  std::vector<PairSample> pairs;
  pairs.reserve(count);
  for (size_t i = 0; i < count; i++) {
    PairSample p;
    if (i % 2 == 0) {
      const auto& members = *big[size_t(rng.below(big.size()))];
      p.a = members[size_t(rng.below(members.size()))];
      do {
        p.b = members[size_t(rng.below(members.size()))];
      } while (p.b == p.a);
      p.ell = 1;
    } else {
      size_t ga = size_t(rng.below(all.size())), gb;
      do {
        gb = size_t(rng.below(all.size()));
      } while (gb == ga);
      p.a = (*all[ga])[size_t(rng.below(all[ga]->size()))];
      p.b = (*all[gb])[size_t(rng.below(all[gb]->size()))];
      p.ell = -1;
    }
    pairs.push_back(p);
  }
  return pairs;
}

// --------------------------------------------------------------- training

struct GrlTrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct GrlTrainResult {
  nn::CheckpointData checkpoint;  // best validation epoch
  std::vector<GrlTrainLogEntry> log;
  double best_val_loss = 0.0;
  int best_epoch = -1;
};

template <class Real>
double mean_pair_loss(GrlModel<Real>& m, const std::vector<GrlGraph>& graphs,
                      const std::vector<PairSample>& pairs) {
  if (pairs.empty()) throw ConfigError("no pairs to score");
  GrlFwdCtx<Real> ca, cb;
  double total = 0.0;
  for (const PairSample& p : pairs) {
    grl_forward(m, graphs[p.a], ca);
    grl_forward(m, graphs[p.b], cb);
    total += double(pair_loss(hamming_similarity(ca.hg, cb.hg), p.ell));
  }
  return total / double(pairs.size());
}

template <class Real>
GrlTrainResult train_grl(GrlModel<Real>& m, const std::vector<GrlGraph>& train,
                         const std::vector<GrlGraph>& val,
                         std::ostream* log_stream = nullptr) {
  if (train.empty()) throw ConfigError("training split is empty");
  if (val.empty()) throw ConfigError("validation split is empty");
  nn::Adam<Real> opt(m.tensors(), Real(m.cfg.lr), Real(m.cfg.weight_decay));
  Rng seeds = Rng(m.cfg.seed).fork(0x6e);
  size_t val_count = std::max<size_t>(64, size_t(m.cfg.pairs_per_epoch) / 4);
  std::vector<PairSample> val_pairs =
      sample_pairs(val, m.cfg.pair_mode, seeds.fork(0xabcd).seed(), val_count);
  GrlTrainResult result;
  nn::CheckpointData best;
  GrlFwdCtx<Real> ca, cb;
  for (int epoch = 0; epoch < m.cfg.epochs; epoch++) {
    std::vector<PairSample> pairs =
        sample_pairs(train, m.cfg.pair_mode, seeds.fork(uint64_t(epoch)).seed(),
                     size_t(m.cfg.pairs_per_epoch));
    double loss_sum = 0.0;
    for (size_t at = 0; at < pairs.size(); at += size_t(m.cfg.batch_pairs)) {
      size_t stop = std::min(pairs.size(), at + size_t(m.cfg.batch_pairs));
      opt.zero_grad();
      Real weight = Real(1) / Real(stop - at);
      for (size_t i = at; i < stop; i++) {
        const PairSample& p = pairs[i];
        grl_forward(m, train[p.a], ca);
        grl_forward(m, train[p.b], cb);
        Real s = hamming_similarity(ca.hg, cb.hg);
        loss_sum += double(pair_loss(s, p.ell));
        std::vector<Real> da(ca.hg.size(), Real(0)), db(cb.hg.size(), Real(0));
        pair_loss_backward(ca.hg, cb.hg, p.ell, weight, da, db);
        grl_backward(m, train[p.a], da, ca);
        grl_backward(m, train[p.b], db, cb);
      }
      opt.step();
    }
    double val_loss = mean_pair_loss(m, val, val_pairs);
    GrlTrainLogEntry entry{epoch, loss_sum / double(pairs.size()), val_loss};
    result.log.push_back(entry);
    if (log_stream)
      *log_stream << "{\"epoch\":" << entry.epoch
                  << ",\"train_loss\":" << entry.train_loss
                  << ",\"val_loss\":" << entry.val_loss << "}\n";
    if (result.best_epoch < 0 || val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = nn::snapshot(m.tensors(), m.digest);
    }
  }
  nn::restore(best, m.tensors());
  result.checkpoint = best;
  return result;
}

template <class Real>
void load_grl_weights(GrlModel<Real>& m, const nn::CheckpointData& data) {
  if (data.config_digest != m.digest)
    throw FormatError("checkpoint digest " + data.config_digest +
                      " does not match model digest " + m.digest);
  nn::restore(data, m.tensors());
}

}  // namespace score::grl

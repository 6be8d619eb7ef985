#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "score/grl_model.hpp"
#include "score/nn/tensor.hpp"
#include "score/sm_model.hpp"
#include "score/util/rng.hpp"

// Central-difference validation of the analytic gradients, run on small
// randomly built models. Spot-checks a handful of entries per tensor.
namespace score::gradcheck {

namespace detail {

// Zero-initialized biases sit exactly on ReLU kinks (a pooled window
// with no content under it scores exactly the bias), where a central
// difference straddles the corner. Jitter the bias vectors off zero;
// 2-D tables keep their pinned padding rows.
inline void jitter_biases(const std::vector<nn::Tensor<double>*>& params,
                          Rng& rng) {
  for (auto* t : params)
    if (t->shape.size() == 1)
      for (auto& v : t->data) v += rng.uniform(-0.1, 0.1);
}

}  // namespace detail

struct BlockReport {
  std::string tensor;
  double max_rel_err = 0.0;
};

struct Report {
  std::vector<BlockReport> blocks;
  double max_rel_err = 0.0;
};

namespace detail {

// loss_fn() zeroes gradients, runs forward and backward, and returns
// the scalar loss; it must be deterministic for fixed parameters.
template <class LossFn>
Report check_params(const std::vector<nn::Tensor<double>*>& params,
                    LossFn&& loss_fn, int per_tensor, Rng& rng) {
  loss_fn();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* t : params) analytic.push_back(t->grad);

  Report report;
  for (size_t ti = 0; ti < params.size(); ti++) {
    nn::Tensor<double>* t = params[ti];
    BlockReport block{t->name, 0.0};
    size_t n = t->data.size();
    if (n == 0) continue;
    size_t picks = std::min<size_t>(size_t(per_tensor), n);
    for (size_t p = 0; p < picks; p++) {
      size_t idx = n <= size_t(per_tensor) ? p : rng.below(uint64_t(n));
      double w = t->data[idx];
      double h = 1e-5 * std::max(1.0, std::abs(w));
      t->data[idx] = w + h;
      double up = loss_fn();
      t->data[idx] = w - h;
      double down = loss_fn();
      t->data[idx] = w;
      double fd = (up - down) / (2.0 * h);
      double g = analytic[ti][idx];
      double scale = std::max({1e-8, std::abs(fd), std::abs(g)});
      block.max_rel_err = std::max(block.max_rel_err, std::abs(fd - g) / scale);
    }
    report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

inline sm::TokenSeq random_seq(Rng& rng, uint32_t syn_rows, uint32_t syn_win,
                               uint32_t byte_win, int label) {
  sm::TokenSeq seq;
  seq.sha256 = "gradcheck";
  seq.label = label ? Label::malicious : Label::benign;
  seq.n_tokens = uint32_t(2 + rng.below(4));
  seq.syn_window = syn_win;
  seq.byte_window = byte_win;
  seq.syn_off.push_back(0);
  seq.byte_off.push_back(0);
  for (uint32_t i = 0; i < seq.n_tokens; i++) {
    uint32_t ls = 1 + uint32_t(rng.below(syn_win));
    for (uint32_t j = 0; j < ls; j++)
      seq.syn_ids.push_back(2 + uint32_t(rng.below(syn_rows - 2)));
    seq.syn_off.push_back(uint32_t(seq.syn_ids.size()));
    uint32_t lb = uint32_t(rng.below(byte_win + 1));
    for (uint32_t j = 0; j < lb; j++)
      seq.byte_ids.push_back(2 + uint32_t(rng.below(256)));
    seq.byte_off.push_back(uint32_t(seq.byte_ids.size()));
  }
  return seq;
}

inline grl::GrlGraph random_graph(Rng& rng, uint32_t kind_rows,
                                  uint32_t byte_cap) {
  grl::GrlGraph g;
  g.sha256 = "gradcheck";
  g.n_nodes = uint32_t(4 + rng.below(3));
  g.byte_off.push_back(0);
  for (uint32_t i = 0; i < g.n_nodes; i++) {
    g.kind_ids.push_back(2 + uint32_t(rng.below(kind_rows - 2)));
    uint32_t lb = uint32_t(rng.below(byte_cap + 1));
    for (uint32_t j = 0; j < lb; j++)
      g.byte_ids.push_back(2 + uint32_t(rng.below(256)));
    g.byte_off.push_back(uint32_t(g.byte_ids.size()));
  }
  for (uint32_t c = 1; c < g.n_nodes; c++) {
    uint32_t parent = c == 1 ? 0 : uint32_t(rng.below(c));
    g.edges.emplace_back(parent, c);
  }
  return g;
}

}  // namespace detail

inline Report check_sm(uint64_t seed, int per_tensor = 2) {
  Rng rng(seed);
  sm::SmConfig cfg;
  cfg.feature_kind = sm::FeatureKind::score_h;
  cfg.lstm_layers = 2;
  cfg.lstm_hidden = 10;
  cfg.atom_embed_dim = 8;
  cfg.byte_embed_dim = 6;
  cfg.desk_profile = true;
  cfg.seed = seed;

  const uint32_t syn_rows = 12, syn_win = 8, byte_win = 6;
  sm::SmModel<double> m;
  m.init(cfg, syn_rows, syn_win, byte_win, "gradcheck");
  // exercise the head path too; zero init would hide its gradient
  Rng head_rng = rng.fork(0x11);
  m.out_w.init_kaiming(head_rng, m.out_w.shape[1]);
  Rng bias_rng = rng.fork(0x44);
  detail::jitter_biases(m.tensors(), bias_rng);

  std::vector<sm::TokenSeq> seqs;
  Rng data_rng = rng.fork(0x22);
  for (int i = 0; i < 4; i++)
    seqs.push_back(
        detail::random_seq(data_rng, syn_rows, syn_win, byte_win, i % 2));
  std::vector<const sm::TokenSeq*> batch;
  std::vector<double> targets;
  for (const auto& s : seqs) {
    batch.push_back(&s);
    targets.push_back(s.label == Label::malicious ? 1.0 : 0.0);
  }

  auto params = m.tensors();
  sm::SmBatchCtx<double> ctx;
  auto loss_fn = [&]() {
    for (auto* t : params) t->zero_grad();
    sm::sm_forward(m, batch, ctx);
    double loss =
        double(nn::bce_loss(ctx.probs.data(), targets.data(), batch.size()));
    std::vector<double> dlogit(batch.size());
    for (size_t i = 0; i < batch.size(); i++)
      dlogit[i] = (ctx.probs[i] - targets[i]) / double(batch.size());
    sm::sm_backward(m, dlogit, ctx);
    return loss;
  };

  Rng pick_rng = rng.fork(0x33);
  return detail::check_params(params, loss_fn, per_tensor, pick_rng);
}

inline Report check_grl(uint64_t seed, int per_tensor = 2) {
  Rng rng(seed);
  grl::GrlConfig cfg;
  cfg.node_state_dim = 6;
  cfg.embed_dim = 8;
  cfg.rounds = 2;
  cfg.kind_embed_dim = 5;
  cfg.byte_embed_dim = 4;
  cfg.edge_dim = 3;
  cfg.seed = seed;

  const uint32_t kind_rows = 10, byte_cap = 5;
  grl::GrlModel<double> m;
  m.init(cfg, kind_rows, "gradcheck");
  Rng bias_rng = rng.fork(0x44);
  detail::jitter_biases(m.tensors(), bias_rng);

  Rng data_rng = rng.fork(0x22);
  grl::GrlGraph g0 = detail::random_graph(data_rng, kind_rows, byte_cap);
  grl::GrlGraph g1 = detail::random_graph(data_rng, kind_rows, byte_cap);
  grl::GrlGraph g2 = detail::random_graph(data_rng, kind_rows, byte_cap);

  auto params = m.tensors();
  grl::GrlFwdCtx<double> ca, cb;
  auto loss_fn = [&]() {
    for (auto* t : params) t->zero_grad();
    double loss = 0.0;
    std::vector<double> da, db;

    grl::grl_forward(m, g0, ca);
    grl::grl_forward(m, g1, cb);
    double s = grl::hamming_similarity(ca.hg, cb.hg);
    loss += 0.5 * grl::pair_loss(s, 1);
    da.assign(ca.hg.size(), 0.0);
    db.assign(cb.hg.size(), 0.0);
    grl::pair_loss_backward(ca.hg, cb.hg, 1, 0.5, da, db);
    grl::grl_backward(m, g0, da, ca);
    grl::grl_backward(m, g1, db, cb);

    grl::grl_forward(m, g0, ca);
    grl::grl_forward(m, g2, cb);
    s = grl::hamming_similarity(ca.hg, cb.hg);
    loss += 0.5 * grl::pair_loss(s, -1);
    da.assign(ca.hg.size(), 0.0);
    db.assign(cb.hg.size(), 0.0);
    grl::pair_loss_backward(ca.hg, cb.hg, -1, 0.5, da, db);
    grl::grl_backward(m, g0, da, ca);
    grl::grl_backward(m, g2, db, cb);
    return loss;
  };

  Rng pick_rng = rng.fork(0x33);
  return detail::check_params(params, loss_fn, per_tensor, pick_rng);
}

}  // namespace score::gradcheck

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "score/common.hpp"
#include "score/nn/gemm.hpp"
#include "score/nn/tensor.hpp"

// Layer primitives as forward/backward pairs. Forward fills a context
// with whatever the matching backward needs; backward ACCUMULATES into
// parameter .grad buffers and into caller-provided input-gradient
// buffers, so callers zero those once per step and may feed one input
// into several layers.

namespace score::nn {

template <class Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

// ---------------------------------------------------------------- linear

template <class Real>
void linear_forward(const Real* x, int m, int in_dim, const Tensor<Real>& w,
                    const Tensor<Real>& b, Real* y) {
  gemm(false, true, m, int(w.shape[0]), in_dim, Real(1), x, in_dim,
       w.data.data(), in_dim, Real(0), y, int(w.shape[0]));
  int out_dim = w.shape[0];
  for (int i = 0; i < m; i++)
    for (int j = 0; j < out_dim; j++) y[size_t(i) * out_dim + j] += b.data[j];
}

template <class Real>
void linear_backward(const Real* dy, const Real* x, int m, int in_dim,
                     Tensor<Real>& w, Tensor<Real>& b, Real* dx) {
  int out_dim = w.shape[0];
  gemm(true, false, out_dim, in_dim, m, Real(1), dy, out_dim, x, in_dim,
       Real(1), w.grad.data(), in_dim);
  for (int i = 0; i < m; i++)
    for (int j = 0; j < out_dim; j++) b.grad[j] += dy[size_t(i) * out_dim + j];
  if (dx)
    gemm(false, false, m, in_dim, out_dim, Real(1), dy, out_dim, w.data.data(),
         in_dim, Real(1), dx, in_dim);
}

// ---------------------------------------------------------- activations

template <class Real>
void relu_forward(Real* y, size_t n) {
  for (size_t i = 0; i < n; i++) y[i] = y[i] > Real(0) ? y[i] : Real(0);
}

template <class Real>
void relu_backward(const Real* y, Real* dy, size_t n) {
  for (size_t i = 0; i < n; i++)
    if (y[i] <= Real(0)) dy[i] = Real(0);
}

template <class Real>
void sigmoid_forward(Real* y, size_t n) {
  for (size_t i = 0; i < n; i++) y[i] = sigmoid(y[i]);
}

template <class Real>
void sigmoid_backward(const Real* y, Real* dy, size_t n) {
  for (size_t i = 0; i < n; i++) dy[i] *= y[i] * (Real(1) - y[i]);
}

template <class Real>
void tanh_forward(Real* y, size_t n) {
  for (size_t i = 0; i < n; i++) y[i] = std::tanh(y[i]);
}

template <class Real>
void tanh_backward(const Real* y, Real* dy, size_t n) {
  for (size_t i = 0; i < n; i++) dy[i] *= Real(1) - y[i] * y[i];
}

// ---------------------------------------------------------------- gather

// Embedding lookup. Row 0 is the PAD row: it is pinned to zero and the
// backward pass never writes to it, which is what makes content-length
// truncation in the convolutions exact.
template <class Real>
void gather_forward(const Tensor<Real>& table, const uint32_t* ids, int n,
                    Real* y) {
  int d = table.shape[1];
  for (int i = 0; i < n; i++) {
    const Real* row = table.data.data() + size_t(ids[i]) * d;
    std::copy(row, row + d, y + size_t(i) * d);
  }
}

template <class Real>
void gather_backward(Tensor<Real>& table, const uint32_t* ids, int n,
                     const Real* dy) {
  int d = table.shape[1];
  for (int i = 0; i < n; i++) {
    if (ids[i] == 0) continue;
    Real* row = table.grad.data() + size_t(ids[i]) * d;
    const Real* g = dy + size_t(i) * d;
    for (int j = 0; j < d; j++) row[j] += g[j];
  }
}

// --------------------------------------------------------------- highway

template <class Real>
struct HighwayParams {
  Tensor<Real> wh, bh, wt, bt, wc, bc;

  void init(const std::string& prefix, int d, Rng& rng) {
    wh = Tensor<Real>(prefix + ".wh", {d, d});
    bh = Tensor<Real>(prefix + ".bh", {d});
    wt = Tensor<Real>(prefix + ".wt", {d, d});
    bt = Tensor<Real>(prefix + ".bt", {d});
    wc = Tensor<Real>(prefix + ".wc", {d, d});
    bc = Tensor<Real>(prefix + ".bc", {d});
    wh.init_kaiming(rng, d);
    wt.init_kaiming(rng, d);
    wc.init_kaiming(rng, d);
    bt.fill(Real(-2));  // favor the carry path early in training
  }

  std::vector<Tensor<Real>*> tensors() {
    return {&wh, &bh, &wt, &bt, &wc, &bc};
  }
};

template <class Real>
struct HighwayCtx {
  std::vector<Real> h, t, c;
};

// y = H(x) .* T(x) + x .* C(x); H relu, T and C logistic.
template <class Real>
void highway_forward(const Real* x, int m, int d, const HighwayParams<Real>& p,
                     Real* y, HighwayCtx<Real>* ctx) {
  std::vector<Real> h(size_t(m) * d), t(size_t(m) * d), c(size_t(m) * d);
  linear_forward(x, m, d, p.wh, p.bh, h.data());
  relu_forward(h.data(), h.size());
  linear_forward(x, m, d, p.wt, p.bt, t.data());
  sigmoid_forward(t.data(), t.size());
  linear_forward(x, m, d, p.wc, p.bc, c.data());
  sigmoid_forward(c.data(), c.size());
  for (size_t i = 0; i < h.size(); i++) y[i] = h[i] * t[i] + x[i] * c[i];
  if (ctx) {
    ctx->h = std::move(h);
    ctx->t = std::move(t);
    ctx->c = std::move(c);
  }
}

template <class Real>
void highway_backward(const Real* dy, const Real* x, int m, int d,
                      HighwayParams<Real>& p, const HighwayCtx<Real>& ctx,
                      Real* dx) {
  size_t n = size_t(m) * d;
  std::vector<Real> dh(n), dt(n), dc(n);
  for (size_t i = 0; i < n; i++) {
    dh[i] = dy[i] * ctx.t[i];
    dt[i] = dy[i] * ctx.h[i];
    dc[i] = dy[i] * x[i];
    dx[i] += dy[i] * ctx.c[i];
  }
  relu_backward(ctx.h.data(), dh.data(), n);
  sigmoid_backward(ctx.t.data(), dt.data(), n);
  sigmoid_backward(ctx.c.data(), dc.data(), n);
  linear_backward(dh.data(), x, m, d, p.wh, p.bh, dx);
  linear_backward(dt.data(), x, m, d, p.wt, p.bt, dx);
  linear_backward(dc.data(), x, m, d, p.wc, p.bc, dx);
}

// ------------------------------------------- fused conv + relu + max-pool

// Cross-correlation with zero "same" padding (left pad (K-1)/2) over a
// pooling window of l_win positions, followed by max-pool over the
// window and a ReLU. Batched over nb items that each carry exactly lc
// rows of content (callers bucket by content length and zero-pad up to
// the bucket length); window positions past lc + left see only padding
// and all equal the bias, so a single bias candidate stands in for that
// whole tail. Weights are [F, K*D], tap-major. Per output position the
// reachable content rows are contiguous, so each position is one GEMM
// against a contiguous slice of the weights and no im2col copy is made.
template <class Real>
struct ConvPoolCtx {
  int b = 0, lc = 0, d = 0, k = 0, f = 0, l_win = 0;
  std::vector<int> argmax;    // [B*F] winning position; -1 = bias tail
  std::vector<Real> premax;   // [B*F] pre-relu max, for the relu gate
};

template <class Real>
void conv_relu_maxpool_forward(const Real* x, int nb, int lc, int d,
                               const Tensor<Real>& w, const Tensor<Real>& bias,
                               int k, int l_win, Real* out,
                               ConvPoolCtx<Real>* ctx) {
  if (lc > l_win)
    throw ConfigError("conv window shorter than content (" +
                      std::to_string(lc) + " > " + std::to_string(l_win) +
                      ")");
  const int f = int(w.shape[0]);
  const int left = (k - 1) / 2;
  const int l_eff = lc == 0 ? 0 : std::min(l_win, lc + left);
  std::vector<int> argmax(size_t(nb) * f, -1);
  std::vector<Real> premax(size_t(nb) * f,
                           -std::numeric_limits<Real>::infinity());
  thread_local std::vector<Real> tmp;
  tmp.assign(size_t(nb) * f, Real(0));
  for (int t = 0; t < l_eff; t++) {
    const int tau0 = std::max(0, t - left);
    const int tau1 = std::min(lc, t - left + k);
    gemm(false, true, nb, f, (tau1 - tau0) * d, Real(1),
         x + size_t(tau0) * d, lc * d,
         w.data.data() + size_t(tau0 - t + left) * d, k * d, Real(0),
         tmp.data(), f);
    for (int b = 0; b < nb; b++)
      for (int fi = 0; fi < f; fi++) {
        size_t ix = size_t(b) * f + fi;
        Real v = tmp[ix] + bias.data[fi];
        if (v > premax[ix]) {
          premax[ix] = v;
          argmax[ix] = t;
        }
      }
  }
  if (l_eff < l_win)
    for (int b = 0; b < nb; b++)
      for (int fi = 0; fi < f; fi++) {
        size_t ix = size_t(b) * f + fi;
        if (bias.data[fi] > premax[ix]) {
          premax[ix] = bias.data[fi];
          argmax[ix] = -1;
        }
      }
  for (size_t i = 0; i < size_t(nb) * f; i++)
    out[i] = premax[i] > Real(0) ? premax[i] : Real(0);
  if (ctx) {
    ctx->b = nb;
    ctx->lc = lc;
    ctx->d = d;
    ctx->k = k;
    ctx->f = f;
    ctx->l_win = l_win;
    ctx->argmax = std::move(argmax);
    ctx->premax = std::move(premax);
  }
}

template <class Real>
void conv_relu_maxpool_backward(const Real* dout, const Real* x,
                                Tensor<Real>& w, Tensor<Real>& bias,
                                const ConvPoolCtx<Real>& ctx, Real* dx) {
  const int d = ctx.d, lc = ctx.lc, f = ctx.f, left = (ctx.k - 1) / 2;
  for (int b = 0; b < ctx.b; b++)
    for (int fi = 0; fi < f; fi++) {
      size_t ix = size_t(b) * f + fi;
      if (ctx.premax[ix] <= Real(0)) continue;
      Real g = dout[ix];
      if (g == Real(0)) continue;
      bias.grad[fi] += g;
      int t = ctx.argmax[ix];
      if (t < 0) continue;  // bias tail: no content under the taps
      const int tau0 = std::max(0, t - left);
      const int tau1 = std::min(lc, t - left + ctx.k);
      const Real* xr = x + size_t(b) * lc * d;
      Real* xg = dx + size_t(b) * lc * d;
      for (int tau = tau0; tau < tau1; tau++) {
        int j = tau - t + left;
        Real* wg = w.grad.data() + (size_t(fi) * ctx.k + j) * d;
        const Real* wr = w.data.data() + (size_t(fi) * ctx.k + j) * d;
        for (int c = 0; c < d; c++) {
          wg[c] += g * xr[size_t(tau) * d + c];
          xg[c + size_t(tau) * d] += g * wr[c];
        }
      }
    }
}

// Plain same-padding conv1d over one sequence (no pooling); used where
// the pooled fusion does not apply and by the unit tests.
template <class Real>
void conv1d_forward(const Real* x, int l, int d, const Tensor<Real>& w,
                    const Tensor<Real>& bias, int k, Real* y) {
  const int f = w.shape[0];
  const int left = (k - 1) / 2;
  for (int t = 0; t < l; t++)
    for (int fi = 0; fi < f; fi++) {
      Real acc = bias.data[fi];
      const Real* wr = w.data.data() + size_t(fi) * k * d;
      for (int j = 0; j < k; j++) {
        int tau = t - left + j;
        if (tau < 0 || tau >= l) continue;
        const Real* xr = x + size_t(tau) * d;
        for (int c = 0; c < d; c++) acc += wr[size_t(j) * d + c] * xr[c];
      }
      y[size_t(t) * f + fi] = acc;
    }
}

// -------------------------------------------------------------- bi-LSTM

template <class Real>
struct LstmDirParams {
  Tensor<Real> wx, wh, b;  // gate order i, f, g, o

  void init(const std::string& prefix, int in_dim, int hidden, Rng& rng) {
    wx = Tensor<Real>(prefix + ".wx", {4 * hidden, in_dim});
    wh = Tensor<Real>(prefix + ".wh", {4 * hidden, hidden});
    b = Tensor<Real>(prefix + ".b", {4 * hidden});
    wx.init_kaiming(rng, in_dim);
    wh.init_kaiming(rng, hidden);
    for (int i = hidden; i < 2 * hidden; i++) b.data[i] = Real(1);  // forget
  }

  std::vector<Tensor<Real>*> tensors() { return {&wx, &wh, &b}; }
};

template <class Real>
struct BilstmParams {
  int layers = 2;
  int hidden = 0;
  std::vector<LstmDirParams<Real>> dirs;  // [layer*2 + dir]

  void init(const std::string& prefix, int in_dim, int h, int n_layers,
            Rng& rng) {
    layers = n_layers;
    hidden = h;
    dirs.clear();
    for (int l = 0; l < n_layers; l++)
      for (int d = 0; d < 2; d++) {
        LstmDirParams<Real> p;
        p.init(prefix + ".l" + std::to_string(l) + (d == 0 ? ".fw" : ".bw"),
               l == 0 ? in_dim : 2 * h, h, rng);
        dirs.push_back(std::move(p));
      }
  }

  std::vector<Tensor<Real>*> tensors() {
    std::vector<Tensor<Real>*> out;
    for (auto& p : dirs)
      for (auto* t : p.tensors()) out.push_back(t);
    return out;
  }
};

template <class Real>
struct LstmDirCtx {
  std::vector<Real> gates;  // [T,4H] post-activation
  std::vector<Real> c;      // [T,H]
  std::vector<Real> tanhc;  // [T,H]
  std::vector<Real> h;      // [T,H]
};

template <class Real>
struct BilstmCtx {
  int t_len = 0;
  std::vector<std::vector<Real>> layer_in;  // input seq per layer
  std::vector<LstmDirCtx<Real>> dir_ctx;    // [layer*2 + dir]
};

template <class Real>
void lstm_dir_forward(const Real* x, int t_len, int in_dim,
                      const LstmDirParams<Real>& p, int h, bool reverse,
                      LstmDirCtx<Real>& ctx) {
  const int g4 = 4 * h;
  ctx.gates.assign(size_t(t_len) * g4, Real(0));
  ctx.c.assign(size_t(t_len) * h, Real(0));
  ctx.tanhc.assign(size_t(t_len) * h, Real(0));
  ctx.h.assign(size_t(t_len) * h, Real(0));
  // input projections for every step in one pass
  std::vector<Real> proj(size_t(t_len) * g4);
  linear_forward(x, t_len, in_dim, p.wx, p.b, proj.data());
  std::vector<Real> hprev(h, Real(0)), cprev(h, Real(0)), a(g4);
  for (int i = 0; i < t_len; i++) {
    int t = reverse ? t_len - 1 - i : i;
    std::copy(proj.begin() + size_t(t) * g4, proj.begin() + size_t(t + 1) * g4,
              a.begin());
    gemm(false, true, 1, g4, h, Real(1), hprev.data(), h, p.wh.data.data(), h,
         Real(1), a.data(), g4);
    Real* gates = ctx.gates.data() + size_t(t) * g4;
    Real* c = ctx.c.data() + size_t(t) * h;
    Real* tc = ctx.tanhc.data() + size_t(t) * h;
    Real* hs = ctx.h.data() + size_t(t) * h;
    for (int j = 0; j < h; j++) {
      Real ig = sigmoid(a[j]);
      Real fg = sigmoid(a[h + j]);
      Real gg = std::tanh(a[2 * h + j]);
      Real og = sigmoid(a[3 * h + j]);
      gates[j] = ig;
      gates[h + j] = fg;
      gates[2 * h + j] = gg;
      gates[3 * h + j] = og;
      c[j] = fg * cprev[j] + ig * gg;
      tc[j] = std::tanh(c[j]);
      hs[j] = og * tc[j];
    }
    std::copy(c, c + h, cprev.begin());
    std::copy(hs, hs + h, hprev.begin());
  }
}

template <class Real>
void lstm_dir_backward(const Real* dh_seq, const Real* x, int t_len,
                       int in_dim, LstmDirParams<Real>& p, int h, bool reverse,
                       const LstmDirCtx<Real>& ctx, Real* dx) {
  const int g4 = 4 * h;
  std::vector<Real> da_seq(size_t(t_len) * g4, Real(0));
  std::vector<Real> dh(h, Real(0)), dc(h, Real(0)), da(g4);
  for (int i = t_len - 1; i >= 0; i--) {
    int t = reverse ? t_len - 1 - i : i;
    int t_prev = i > 0 ? (reverse ? t + 1 : t - 1) : -1;
    const Real* gates = ctx.gates.data() + size_t(t) * g4;
    const Real* tc = ctx.tanhc.data() + size_t(t) * h;
    for (int j = 0; j < h; j++) dh[j] += dh_seq[size_t(t) * h + j];
    for (int j = 0; j < h; j++) {
      Real ig = gates[j], fg = gates[h + j], gg = gates[2 * h + j],
           og = gates[3 * h + j];
      Real cprev = t_prev >= 0 ? ctx.c[size_t(t_prev) * h + j] : Real(0);
      Real dog = dh[j] * tc[j];
      Real dct = dh[j] * og * (Real(1) - tc[j] * tc[j]) + dc[j];
      Real dig = dct * gg;
      Real dfg = dct * cprev;
      Real dgg = dct * ig;
      dc[j] = dct * fg;
      da[j] = dig * ig * (Real(1) - ig);
      da[h + j] = dfg * fg * (Real(1) - fg);
      da[2 * h + j] = dgg * (Real(1) - gg * gg);
      da[3 * h + j] = dog * og * (Real(1) - og);
    }
    std::copy(da.begin(), da.end(), da_seq.begin() + size_t(t) * g4);
    std::fill(dh.begin(), dh.end(), Real(0));
    gemm(false, false, 1, h, g4, Real(1), da.data(), g4, p.wh.data.data(), h,
         Real(1), dh.data(), h);
  }
  // weight gradients batched over time
  gemm(true, false, g4, in_dim, t_len, Real(1), da_seq.data(), g4, x, in_dim,
       Real(1), p.wx.grad.data(), in_dim);
  std::vector<Real> hprev_seq(size_t(t_len) * h, Real(0));
  for (int i = 1; i < t_len; i++) {
    int t = reverse ? t_len - 1 - i : i;
    int t_prev = reverse ? t + 1 : t - 1;
    std::copy(ctx.h.begin() + size_t(t_prev) * h,
              ctx.h.begin() + size_t(t_prev + 1) * h,
              hprev_seq.begin() + size_t(t) * h);
  }
  gemm(true, false, g4, h, t_len, Real(1), da_seq.data(), g4, hprev_seq.data(),
       h, Real(1), p.wh.grad.data(), h);
  for (int t = 0; t < t_len; t++)
    for (int j = 0; j < g4; j++) p.b.grad[j] += da_seq[size_t(t) * g4 + j];
  if (dx)
    gemm(false, false, t_len, in_dim, g4, Real(1), da_seq.data(), g4,
         p.wx.data.data(), in_dim, Real(1), dx, in_dim);
}

template <class Real>
void bilstm_forward(const Real* x, int t_len, int in_dim,
                    const BilstmParams<Real>& p, Real* y, BilstmCtx<Real>& ctx) {
  if (t_len < 1) throw ConfigError("bilstm: empty sequence");
  const int h = p.hidden;
  ctx.t_len = t_len;
  ctx.layer_in.assign(p.layers, {});
  ctx.dir_ctx.assign(size_t(p.layers) * 2, {});
  std::vector<Real> cur(x, x + size_t(t_len) * in_dim);
  int cur_dim = in_dim;
  for (int l = 0; l < p.layers; l++) {
    ctx.layer_in[l] = cur;
    std::vector<Real> next(size_t(t_len) * 2 * h);
    for (int dir = 0; dir < 2; dir++) {
      auto& dctx = ctx.dir_ctx[size_t(l) * 2 + dir];
      lstm_dir_forward(cur.data(), t_len, cur_dim, p.dirs[size_t(l) * 2 + dir],
                       h, dir == 1, dctx);
      for (int t = 0; t < t_len; t++)
        std::copy(dctx.h.begin() + size_t(t) * h,
                  dctx.h.begin() + size_t(t + 1) * h,
                  next.begin() + size_t(t) * 2 * h + size_t(dir) * h);
    }
    cur = std::move(next);
    cur_dim = 2 * h;
  }
  std::copy(cur.begin(), cur.end(), y);
}

template <class Real>
void bilstm_backward(const Real* dy, int t_len, int in_dim,
                     BilstmParams<Real>& p, const BilstmCtx<Real>& ctx,
                     Real* dx) {
  const int h = p.hidden;
  std::vector<Real> dcur(dy, dy + size_t(t_len) * 2 * h);
  for (int l = p.layers - 1; l >= 0; l--) {
    int dim_in = l == 0 ? in_dim : 2 * h;
    std::vector<Real> dprev(size_t(t_len) * dim_in, Real(0));
    for (int dir = 0; dir < 2; dir++) {
      std::vector<Real> dh_seq(size_t(t_len) * h);
      for (int t = 0; t < t_len; t++)
        std::copy(dcur.begin() + size_t(t) * 2 * h + size_t(dir) * h,
                  dcur.begin() + size_t(t) * 2 * h + size_t(dir + 1) * h,
                  dh_seq.begin() + size_t(t) * h);
      lstm_dir_backward(dh_seq.data(), ctx.layer_in[l].data(), t_len, dim_in,
                        p.dirs[size_t(l) * 2 + dir], h, dir == 1,
                        ctx.dir_ctx[size_t(l) * 2 + dir], dprev.data());
    }
    if (l == 0) {
      if (dx)
        for (size_t i = 0; i < dprev.size(); i++) dx[i] += dprev[i];
    } else {
      dcur = std::move(dprev);
    }
  }
}

// ------------------------------------------------------ attention pool

template <class Real>
struct AttentionParams {
  Tensor<Real> w, b, v;

  void init(const std::string& prefix, int d, int a, Rng& rng) {
    w = Tensor<Real>(prefix + ".w", {a, d});
    b = Tensor<Real>(prefix + ".b", {a});
    v = Tensor<Real>(prefix + ".v", {a});
    w.init_kaiming(rng, d);
    v.init_kaiming(rng, a);
  }

  std::vector<Tensor<Real>*> tensors() { return {&w, &b, &v}; }
};

template <class Real>
struct AttentionCtx {
  std::vector<Real> u;      // [T,A] post tanh
  std::vector<Real> alpha;  // [T]
};

template <class Real>
void attention_forward(const Real* s, int t_len, int d,
                       const AttentionParams<Real>& p, Real* out,
                       AttentionCtx<Real>& ctx) {
  if (t_len < 1) throw ConfigError("attention_pool: empty sequence");
  const int a = p.w.shape[0];
  ctx.u.assign(size_t(t_len) * a, Real(0));
  linear_forward(s, t_len, d, p.w, p.b, ctx.u.data());
  tanh_forward(ctx.u.data(), ctx.u.size());
  std::vector<Real> e(t_len, Real(0));
  for (int t = 0; t < t_len; t++)
    for (int j = 0; j < a; j++) e[t] += ctx.u[size_t(t) * a + j] * p.v.data[j];
  Real mx = *std::max_element(e.begin(), e.end());
  Real z = Real(0);
  ctx.alpha.assign(t_len, Real(0));
  for (int t = 0; t < t_len; t++) z += std::exp(e[t] - mx);
  for (int t = 0; t < t_len; t++) ctx.alpha[t] = std::exp(e[t] - mx) / z;
  std::fill(out, out + d, Real(0));
  for (int t = 0; t < t_len; t++)
    for (int j = 0; j < d; j++) out[j] += ctx.alpha[t] * s[size_t(t) * d + j];
}

template <class Real>
void attention_backward(const Real* dout, const Real* s, int t_len, int d,
                        AttentionParams<Real>& p, const AttentionCtx<Real>& ctx,
                        Real* ds) {
  const int a = p.w.shape[0];
  std::vector<Real> dalpha(t_len, Real(0));
  for (int t = 0; t < t_len; t++) {
    for (int j = 0; j < d; j++) {
      ds[size_t(t) * d + j] += ctx.alpha[t] * dout[j];
      dalpha[t] += s[size_t(t) * d + j] * dout[j];
    }
  }
  Real dot = Real(0);
  for (int t = 0; t < t_len; t++) dot += ctx.alpha[t] * dalpha[t];
  std::vector<Real> du(size_t(t_len) * a);
  for (int t = 0; t < t_len; t++) {
    Real de = ctx.alpha[t] * (dalpha[t] - dot);
    for (int j = 0; j < a; j++) {
      p.v.grad[j] += ctx.u[size_t(t) * a + j] * de;
      du[size_t(t) * a + j] = de * p.v.data[j];
    }
  }
  tanh_backward(ctx.u.data(), du.data(), du.size());
  linear_backward(du.data(), s, t_len, d, p.w, p.b, ds);
}

// ------------------------------------------------------------------ MLP

template <class Real>
struct MlpParams {
  std::vector<Tensor<Real>> w, b;

  // sizes = {in, hidden..., out}; hidden layers use ReLU, output linear
  void init(const std::string& prefix, const std::vector<int>& sizes,
            Rng& rng) {
    w.clear();
    b.clear();
    for (size_t i = 0; i + 1 < sizes.size(); i++) {
      w.emplace_back(prefix + ".w" + std::to_string(i),
                     std::vector<int>{sizes[i + 1], sizes[i]});
      b.emplace_back(prefix + ".b" + std::to_string(i),
                     std::vector<int>{sizes[i + 1]});
      w.back().init_kaiming(rng, sizes[i]);
    }
  }

  int out_dim() const { return w.back().shape[0]; }
  int in_dim() const { return int(w.front().shape[1]); }

  std::vector<Tensor<Real>*> tensors() {
    std::vector<Tensor<Real>*> out;
    for (size_t i = 0; i < w.size(); i++) {
      out.push_back(&w[i]);
      out.push_back(&b[i]);
    }
    return out;
  }
};

template <class Real>
struct MlpCtx {
  std::vector<std::vector<Real>> act;  // post-activation per layer
};

template <class Real>
void mlp_forward(const Real* x, int m, const MlpParams<Real>& p, Real* y,
                 MlpCtx<Real>* ctx) {
  if (ctx) ctx->act.assign(p.w.size(), {});
  std::vector<Real> cur(x, x + size_t(m) * p.in_dim());
  for (size_t i = 0; i < p.w.size(); i++) {
    std::vector<Real> next(size_t(m) * p.w[i].shape[0]);
    linear_forward(cur.data(), m, int(p.w[i].shape[1]), p.w[i], p.b[i],
                   next.data());
    if (i + 1 < p.w.size()) relu_forward(next.data(), next.size());
    if (ctx) ctx->act[i] = next;
    cur = std::move(next);
  }
  std::copy(cur.begin(), cur.end(), y);
}

template <class Real>
void mlp_backward(const Real* dy, const Real* x, int m, MlpParams<Real>& p,
                  const MlpCtx<Real>& ctx, Real* dx) {
  std::vector<Real> dcur(dy, dy + size_t(m) * p.out_dim());
  for (size_t i = p.w.size(); i-- > 0;) {
    if (i + 1 < p.w.size())
      relu_backward(ctx.act[i].data(), dcur.data(), dcur.size());
    const Real* input = i == 0 ? x : ctx.act[i - 1].data();
    std::vector<Real> dprev(size_t(m) * p.w[i].shape[1], Real(0));
    linear_backward(dcur.data(), input, m, int(p.w[i].shape[1]), p.w[i], p.b[i],
                    i == 0 ? dx : dprev.data());
    if (i > 0) dcur = std::move(dprev);
  }
}

// ------------------------------------------------------------- GRU cell

template <class Real>
struct GruParams {
  Tensor<Real> wmz, whz, bz, wmr, whr, br, wmh, whh, bh;

  void init(const std::string& prefix, int m_dim, int h_dim, Rng& rng) {
    auto mk = [&](const char* n, int out, int in) {
      Tensor<Real> t(prefix + "." + n, {out, in});
      t.init_kaiming(rng, in);
      return t;
    };
    wmz = mk("wmz", h_dim, m_dim);
    whz = mk("whz", h_dim, h_dim);
    bz = Tensor<Real>(prefix + ".bz", {h_dim});
    wmr = mk("wmr", h_dim, m_dim);
    whr = mk("whr", h_dim, h_dim);
    br = Tensor<Real>(prefix + ".br", {h_dim});
    wmh = mk("wmh", h_dim, m_dim);
    whh = mk("whh", h_dim, h_dim);
    bh = Tensor<Real>(prefix + ".bh", {h_dim});
  }

  std::vector<Tensor<Real>*> tensors() {
    return {&wmz, &whz, &bz, &wmr, &whr, &br, &wmh, &whh, &bh};
  }
};

template <class Real>
struct GruCtx {
  std::vector<Real> z, r, cand, rh;
};

// h' = (1-z) .* h + z .* tanh-candidate; z==0 keeps the old state.
template <class Real>
void gru_forward(const Real* h, const Real* m, int n, int h_dim, int m_dim,
                 const GruParams<Real>& p, Real* h_new, GruCtx<Real>& ctx) {
  size_t total = size_t(n) * h_dim;
  ctx.z.assign(total, Real(0));
  ctx.r.assign(total, Real(0));
  ctx.cand.assign(total, Real(0));
  ctx.rh.assign(total, Real(0));
  std::vector<Real> tmp(total);
  linear_forward(m, n, m_dim, p.wmz, p.bz, ctx.z.data());
  gemm(false, true, n, h_dim, h_dim, Real(1), h, h_dim, p.whz.data.data(),
       h_dim, Real(1), ctx.z.data(), h_dim);
  sigmoid_forward(ctx.z.data(), total);
  linear_forward(m, n, m_dim, p.wmr, p.br, ctx.r.data());
  gemm(false, true, n, h_dim, h_dim, Real(1), h, h_dim, p.whr.data.data(),
       h_dim, Real(1), ctx.r.data(), h_dim);
  sigmoid_forward(ctx.r.data(), total);
  for (size_t i = 0; i < total; i++) ctx.rh[i] = ctx.r[i] * h[i];
  linear_forward(m, n, m_dim, p.wmh, p.bh, ctx.cand.data());
  gemm(false, true, n, h_dim, h_dim, Real(1), ctx.rh.data(), h_dim,
       p.whh.data.data(), h_dim, Real(1), ctx.cand.data(), h_dim);
  tanh_forward(ctx.cand.data(), total);
  for (size_t i = 0; i < total; i++)
    h_new[i] = (Real(1) - ctx.z[i]) * h[i] + ctx.z[i] * ctx.cand[i];
}

template <class Real>
void gru_backward(const Real* dh_new, const Real* h, const Real* m, int n,
                  int h_dim, int m_dim, GruParams<Real>& p,
                  const GruCtx<Real>& ctx, Real* dh, Real* dm) {
  size_t total = size_t(n) * h_dim;
  std::vector<Real> dz(total), dcand(total), dr(total), drh(total, Real(0));
  for (size_t i = 0; i < total; i++) {
    dz[i] = dh_new[i] * (ctx.cand[i] - h[i]);
    dcand[i] = dh_new[i] * ctx.z[i];
    dh[i] += dh_new[i] * (Real(1) - ctx.z[i]);
  }
  tanh_backward(ctx.cand.data(), dcand.data(), total);
  linear_backward(dcand.data(), m, n, m_dim, p.wmh, p.bh, dm);
  // the whh product consumed rh, not m
  gemm(true, false, h_dim, h_dim, n, Real(1), dcand.data(), h_dim,
       ctx.rh.data(), h_dim, Real(1), p.whh.grad.data(), h_dim);
  gemm(false, false, n, h_dim, h_dim, Real(1), dcand.data(), h_dim,
       p.whh.data.data(), h_dim, Real(1), drh.data(), h_dim);
  for (size_t i = 0; i < total; i++) {
    dr[i] = drh[i] * h[i];
    dh[i] += drh[i] * ctx.r[i];
  }
  sigmoid_backward(ctx.r.data(), dr.data(), total);
  linear_backward(dr.data(), m, n, m_dim, p.wmr, p.br, dm);
  gemm(true, false, h_dim, h_dim, n, Real(1), dr.data(), h_dim, h, h_dim,
       Real(1), p.whr.grad.data(), h_dim);
  gemm(false, false, n, h_dim, h_dim, Real(1), dr.data(), h_dim,
       p.whr.data.data(), h_dim, Real(1), dh, h_dim);
  sigmoid_backward(ctx.z.data(), dz.data(), total);
  linear_backward(dz.data(), m, n, m_dim, p.wmz, p.bz, dm);
  gemm(true, false, h_dim, h_dim, n, Real(1), dz.data(), h_dim, h, h_dim,
       Real(1), p.whz.grad.data(), h_dim);
  gemm(false, false, n, h_dim, h_dim, Real(1), dz.data(), h_dim,
       p.whz.data.data(), h_dim, Real(1), dh, h_dim);
}

// ---------------------------------------------------------- segment sum

template <class Real>
void segment_sum_forward(const Real* x, const uint32_t* seg, int n, int d,
                         Real* out, int n_seg) {
  std::fill(out, out + size_t(n_seg) * d, Real(0));
  for (int i = 0; i < n; i++) {
    Real* o = out + size_t(seg[i]) * d;
    const Real* xi = x + size_t(i) * d;
    for (int j = 0; j < d; j++) o[j] += xi[j];
  }
}

template <class Real>
void segment_sum_backward(const Real* dout, const uint32_t* seg, int n, int d,
                          Real* dx) {
  for (int i = 0; i < n; i++) {
    const Real* o = dout + size_t(seg[i]) * d;
    Real* xi = dx + size_t(i) * d;
    for (int j = 0; j < d; j++) xi[j] += o[j];
  }
}

// -------------------------------------------------------------- BCE loss

template <class Real>
Real bce_loss(const Real* preds, const Real* labels, int n) {
  if (n < 1) throw ConfigError("bce_loss: empty batch");
  const Real eps = Real(1e-7);
  Real total = Real(0);
  for (int i = 0; i < n; i++) {
    Real p = std::clamp(preds[i], eps, Real(1) - eps);
    total += -(labels[i] * std::log(p) +
               (Real(1) - labels[i]) * std::log(Real(1) - p));
  }
  return total / Real(n);
}

template <class Real>
void bce_loss_backward(const Real* preds, const Real* labels, int n,
                       Real* dpreds) {
  const Real eps = Real(1e-7);
  for (int i = 0; i < n; i++) {
    if (preds[i] < eps || preds[i] > Real(1) - eps) continue;  // clamp is flat
    dpreds[i] += (preds[i] - labels[i]) /
                 (preds[i] * (Real(1) - preds[i])) / Real(n);
  }
}

}  // namespace score::nn

#pragma once

// Finite-difference checks for every trainable layer, at 64-bit. Each
// check builds a small instance with seed-derived weights and data,
// takes a fixed random linear functional of the layer output as the
// loss, and compares analytic gradients against central differences on
// every entry of every input tensor. Biases start away from zero so no
// activation sits exactly on a kink.

#include <array>
#include <cstdint>
#include <vector>

#include "score/grl_model.hpp"
#include "score/nn/grad_check.hpp"
#include "score/nn/layers.hpp"
#include "score/nn/tensor.hpp"
#include "score/util/rng.hpp"

namespace score::layerchecks {

using nn::Tensor;

namespace detail {

inline void fill_uniform(std::vector<double>& v, Rng& rng, double lo, double hi) {
  for (auto& x : v) x = rng.uniform(lo, hi);
}

inline std::vector<double> coeffs(size_t n, Rng& rng) {
  std::vector<double> c(n);
  fill_uniform(c, rng, -1.0, 1.0);
  return c;
}

inline double dot(const std::vector<double>& c, const std::vector<double>& y) {
  double s = 0.0;
  for (size_t i = 0; i < c.size(); i++) s += c[i] * y[i];
  return s;
}

constexpr double kEps = 1e-5;

}  // namespace detail

inline double check_conv(uint64_t seed) {
  Rng rng(seed);
  const int nb = 2, lc = 5, d = 3, k = 3, f = 4, l_win = 7;
  Tensor<double> x("x", {nb, lc, d});
  Tensor<double> w("w", {f, k * d});
  Tensor<double> bias("bias", {f});
  detail::fill_uniform(x.data, rng, -1.0, 1.0);
  w.init_kaiming(rng, k * d);
  detail::fill_uniform(bias.data, rng, -0.3, 0.3);
  auto c = detail::coeffs(size_t(nb) * f, rng);
  auto fn = [&](bool with_grad) {
    std::vector<double> out(size_t(nb) * f);
    nn::ConvPoolCtx<double> ctx;
    nn::conv_relu_maxpool_forward(x.data.data(), nb, lc, d, w, bias, k, l_win,
                                  out.data(), with_grad ? &ctx : nullptr);
    if (with_grad)
      nn::conv_relu_maxpool_backward(c.data(), x.data.data(), w, bias, ctx,
                                     x.grad.data());
    return detail::dot(c, out);
  };
  return nn::grad_check<double>(fn, {&x, &w, &bias}, detail::kEps);
}

inline double check_highway(uint64_t seed) {
  Rng rng(seed);
  const int m = 3, d = 5;
  Tensor<double> x("x", {m, d});
  detail::fill_uniform(x.data, rng, -1.0, 1.0);
  nn::HighwayParams<double> p;
  p.init("hw", d, rng);
  detail::fill_uniform(p.bh.data, rng, -0.3, 0.3);
  detail::fill_uniform(p.bt.data, rng, -0.5, 0.5);
  detail::fill_uniform(p.bc.data, rng, -0.5, 0.5);
  auto c = detail::coeffs(size_t(m) * d, rng);
  std::vector<Tensor<double>*> inputs = {&x};
  for (auto* t : p.tensors()) inputs.push_back(t);
  auto fn = [&](bool with_grad) {
    std::vector<double> y(size_t(m) * d);
    nn::HighwayCtx<double> ctx;
    nn::highway_forward(x.data.data(), m, d, p, y.data(),
                        with_grad ? &ctx : nullptr);
    if (with_grad)
      nn::highway_backward(c.data(), x.data.data(), m, d, p, ctx,
                           x.grad.data());
    return detail::dot(c, y);
  };
  return nn::grad_check<double>(fn, inputs, detail::kEps);
}

inline double check_bilstm(uint64_t seed) {
  Rng rng(seed);
  const int t_len = 4, in_dim = 3, h = 3, layers = 2;
  Tensor<double> x("x", {t_len, in_dim});
  detail::fill_uniform(x.data, rng, -1.0, 1.0);
  nn::BilstmParams<double> p;
  p.init("lstm", in_dim, h, layers, rng);
  for (auto& dir : p.dirs) detail::fill_uniform(dir.b.data, rng, -0.4, 0.4);
  auto c = detail::coeffs(size_t(t_len) * 2 * h, rng);
  std::vector<Tensor<double>*> inputs = {&x};
  for (auto* t : p.tensors()) inputs.push_back(t);
  auto fn = [&](bool with_grad) {
    std::vector<double> y(size_t(t_len) * 2 * h);
    nn::BilstmCtx<double> ctx;
    nn::bilstm_forward(x.data.data(), t_len, in_dim, p, y.data(), ctx);
    if (with_grad)
      nn::bilstm_backward(c.data(), t_len, in_dim, p, ctx, x.grad.data());
    return detail::dot(c, y);
  };
  return nn::grad_check<double>(fn, inputs, detail::kEps);
}

inline double check_attention(uint64_t seed) {
  Rng rng(seed);
  const int t_len = 5, d = 4, a = 3;
  Tensor<double> s("s", {t_len, d});
  detail::fill_uniform(s.data, rng, -1.0, 1.0);
  nn::AttentionParams<double> p;
  p.init("att", d, a, rng);
  detail::fill_uniform(p.b.data, rng, -0.3, 0.3);
  auto c = detail::coeffs(size_t(d), rng);
  std::vector<Tensor<double>*> inputs = {&s};
  for (auto* t : p.tensors()) inputs.push_back(t);
  auto fn = [&](bool with_grad) {
    std::vector<double> out(c.size());
    nn::AttentionCtx<double> ctx;
    nn::attention_forward(s.data.data(), t_len, d, p, out.data(), ctx);
    if (with_grad)
      nn::attention_backward(c.data(), s.data.data(), t_len, d, p, ctx,
                             s.grad.data());
    return detail::dot(c, out);
  };
  return nn::grad_check<double>(fn, inputs, detail::kEps);
}

inline double check_gru(uint64_t seed) {
  Rng rng(seed);
  const int n = 3, h_dim = 4, m_dim = 3;
  Tensor<double> h("h", {n, h_dim});
  Tensor<double> m("m", {n, m_dim});
  detail::fill_uniform(h.data, rng, -1.0, 1.0);
  detail::fill_uniform(m.data, rng, -1.0, 1.0);
  nn::GruParams<double> p;
  p.init("gru", m_dim, h_dim, rng);
  detail::fill_uniform(p.bz.data, rng, -0.3, 0.3);
  detail::fill_uniform(p.br.data, rng, -0.3, 0.3);
  detail::fill_uniform(p.bh.data, rng, -0.3, 0.3);
  auto c = detail::coeffs(size_t(n) * h_dim, rng);
  std::vector<Tensor<double>*> inputs = {&h, &m};
  for (auto* t : p.tensors()) inputs.push_back(t);
  auto fn = [&](bool with_grad) {
    std::vector<double> h_new(size_t(n) * h_dim);
    nn::GruCtx<double> ctx;
    nn::gru_forward(h.data.data(), m.data.data(), n, h_dim, m_dim, p,
                    h_new.data(), ctx);
    if (with_grad)
      nn::gru_backward(c.data(), h.data.data(), m.data.data(), n, h_dim,
                       m_dim, p, ctx, h.grad.data(), m.grad.data());
    return detail::dot(c, h_new);
  };
  return nn::grad_check<double>(fn, inputs, detail::kEps);
}

inline double check_mlp(uint64_t seed) {
  Rng rng(seed);
  const int m = 2;
  Tensor<double> x("x", {m, 4});
  detail::fill_uniform(x.data, rng, -1.0, 1.0);
  nn::MlpParams<double> p;
  p.init("mlp", {4, 6, 3}, rng);
  for (auto& b : p.b) detail::fill_uniform(b.data, rng, -0.3, 0.3);
  auto c = detail::coeffs(size_t(m) * 3, rng);
  std::vector<Tensor<double>*> inputs = {&x};
  for (auto* t : p.tensors()) inputs.push_back(t);
  auto fn = [&](bool with_grad) {
    std::vector<double> y(size_t(m) * 3);
    nn::MlpCtx<double> ctx;
    nn::mlp_forward(x.data.data(), m, p, y.data(), with_grad ? &ctx : nullptr);
    if (with_grad) nn::mlp_backward(c.data(), x.data.data(), m, p, ctx, x.grad.data());
    return detail::dot(c, y);
  };
  return nn::grad_check<double>(fn, inputs, detail::kEps);
}

inline double check_aggregation(uint64_t seed) {
  Rng rng(seed);
  const int n = 6, d = 3, n_seg = 3;
  Tensor<double> x("x", {n, d});
  detail::fill_uniform(x.data, rng, -1.0, 1.0);
  std::vector<uint32_t> seg(n);
  for (auto& s : seg) s = uint32_t(rng.below(n_seg));
  auto c = detail::coeffs(size_t(n_seg) * d, rng);
  auto fn = [&](bool with_grad) {
    std::vector<double> out(size_t(n_seg) * d);
    nn::segment_sum_forward(x.data.data(), seg.data(), n, d, out.data(), n_seg);
    if (with_grad)
      nn::segment_sum_backward(c.data(), seg.data(), n, d, x.grad.data());
    return detail::dot(c, out);
  };
  return nn::grad_check<double>(fn, {&x}, detail::kEps);
}

inline double check_pair_loss(uint64_t seed) {
  Rng rng(seed);
  const int h = 7;
  Tensor<double> a("a", {h});
  Tensor<double> b("b", {h});
  detail::fill_uniform(a.data, rng, -1.5, 1.5);
  detail::fill_uniform(b.data, rng, -1.5, 1.5);
  auto fn = [&](bool with_grad) {
    double s = grl::hamming_similarity(a.data, b.data);
    double loss = 0.7 * grl::pair_loss(s, 1) + 0.3 * grl::pair_loss(s, -1);
    if (with_grad) {
      grl::pair_loss_backward(a.data, b.data, 1, 0.7, a.grad, b.grad);
      grl::pair_loss_backward(a.data, b.data, -1, 0.3, a.grad, b.grad);
    }
    return loss;
  };
  return nn::grad_check<double>(fn, {&a, &b}, detail::kEps);
}

inline double check_bce(uint64_t seed) {
  Rng rng(seed);
  const int n = 6;
  Tensor<double> preds("preds", {n});
  detail::fill_uniform(preds.data, rng, 0.1, 0.9);
  std::vector<double> labels(n);
  for (auto& l : labels) l = double(rng.below(2));
  auto fn = [&](bool with_grad) {
    double loss = nn::bce_loss(preds.data.data(), labels.data(), n);
    if (with_grad)
      nn::bce_loss_backward(preds.data.data(), labels.data(), n,
                            preds.grad.data());
    return loss;
  };
  return nn::grad_check<double>(fn, {&preds}, detail::kEps);
}

struct LayerCheck {
  const char* name;
  double (*fn)(uint64_t seed);
};

inline constexpr std::array<LayerCheck, 9> kAllChecks = {{
    {"conv_relu_maxpool", check_conv},
    {"highway", check_highway},
    {"bilstm", check_bilstm},
    {"attention_pool", check_attention},
    {"gru", check_gru},
    {"mlp", check_mlp},
    {"aggregation", check_aggregation},
    {"pair_loss", check_pair_loss},
    {"bce", check_bce},
}};

}  // namespace score::layerchecks

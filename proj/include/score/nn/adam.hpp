#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "score/common.hpp"
#include "score/nn/tensor.hpp"

namespace score::nn {

// Bias-corrected Adam with decoupled weight decay. Bound to a fixed
// parameter list so moment buffers line up by index.
template <class Real>
class Adam {
 public:
  Adam(std::vector<Tensor<Real>*> params, Real lr, Real weight_decay)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); i++) {
      m_[i].assign(params_[i]->data.size(), Real(0));
      v_[i].assign(params_[i]->data.size(), Real(0));
    }
  }

  void step() {
    t_++;
    const Real b1 = Real(0.9), b2 = Real(0.999), eps = Real(1e-8);
    Real bc1 = Real(1) - std::pow(b1, Real(t_));
    Real bc2 = Real(1) - std::pow(b2, Real(t_));
    for (size_t i = 0; i < params_.size(); i++) {
      Tensor<Real>& p = *params_[i];
      for (size_t j = 0; j < p.data.size(); j++) {
        Real g = p.grad[j];
        if (!std::isfinite(g))
          throw ScoreError("non-finite gradient in " + p.name);
        m_[i][j] = b1 * m_[i][j] + (Real(1) - b1) * g;
        v_[i][j] = b2 * v_[i][j] + (Real(1) - b2) * g * g;
        Real mhat = m_[i][j] / bc1;
        Real vhat = v_[i][j] / bc2;
        p.data[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps) + wd_ * p.data[j]);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  int64_t step_count() const { return t_; }
  Real lr() const { return lr_; }
  void set_lr(Real lr) { lr_ = lr; }

 private:
  std::vector<Tensor<Real>*> params_;
  Real lr_, wd_;
  int64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

}  // namespace score::nn

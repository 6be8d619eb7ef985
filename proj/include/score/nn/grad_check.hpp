#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "score/nn/tensor.hpp"

namespace score::nn {

// Central finite differences against analytic gradients.
// `fn(true)` must run forward + backward, accumulating into the .grad
// of every tensor in `inputs` (which this harness zeroes first);
// `fn(false)` must return the same scalar loss without touching grads.
template <class Real>
double grad_check(const std::function<Real(bool)>& fn,
                  const std::vector<Tensor<Real>*>& inputs,
                  Real eps = Real(1e-4)) {
  for (auto* t : inputs) t->zero_grad();
  fn(true);
  double worst = 0.0;
  for (auto* t : inputs) {
    for (size_t i = 0; i < t->data.size(); i++) {
      Real saved = t->data[i];
      t->data[i] = saved + eps;
      double up = double(fn(false));
      t->data[i] = saved - eps;
      double down = double(fn(false));
      t->data[i] = saved;
      double numeric = (up - down) / (2.0 * double(eps));
      double analytic = double(t->grad[i]);
      double rel = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace score::nn

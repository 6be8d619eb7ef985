#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "score/common.hpp"
#include "score/util/rng.hpp"

namespace score::nn {

// Dense named parameter/value array. Gradients live alongside the data
// and are accumulated across a step, then zeroed for the next one.
template <class Real>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> data;
  std::vector<Real> grad;

  Tensor() = default;
  Tensor(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    data.assign(numel(), Real(0));
    grad.assign(numel(), Real(0));
  }

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  // Uniform fan-in scaling, bound sqrt(6/fan_in).
  void init_kaiming(Rng& rng, int fan_in) {
    double bound = std::sqrt(6.0 / double(fan_in > 0 ? fan_in : 1));
    for (auto& v : data) v = Real(rng.uniform(-bound, bound));
  }
};

template <class Real>
inline void check_shape(const Tensor<Real>& t, std::initializer_list<int> shape,
                        const char* what) {
  bool ok = t.shape.size() == shape.size();
  if (ok) {
    size_t i = 0;
    for (int d : shape) ok = ok && t.shape[i++] == d;
  }
  if (!ok) throw ConfigError(std::string(what) + ": unexpected shape for " + t.name);
}

}  // namespace score::nn

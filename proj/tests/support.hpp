#pragma once

// Shared helpers for the test suite: random tensors and small conveniences.
// Brute-force reference implementations live in oracles.hpp.

#include <cmath>
#include <vector>

#include "temposurv/autodiff.hpp"
#include "temposurv/rng.hpp"

namespace tsupport {

using temposurv::Rng;
using temposurv::ad::Shape;
using temposurv::ad::Tensor;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// random values bounded away from zero, for ops with kinks or poles there
inline Tensor random_tensor_away_from_zero(Rng& rng, Shape shape, double min_abs = 0.2,
                                           double max_abs = 1.5) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) {
    const double mag = rng.uniform(min_abs, max_abs);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

inline Tensor random_positive_tensor(Rng& rng, Shape shape, double lo = 0.1,
                                     double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<double> constant_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace tsupport

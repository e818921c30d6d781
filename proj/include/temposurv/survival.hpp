#pragma once

// Survival head: a feed-forward net maps the instance representation to
// per-interval hazard complements r(t), from which the survival curve and
// expected duration follow by cumulative product and summation.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "temposurv/autodiff.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/rng.hpp"

namespace temposurv {

using ad::Graph;
using ad::Tensor;

struct SurvivalHeadParams {
  int d_in = 0;
  int t_max = 0;
  std::vector<Tensor> weights;  // layer i: [in_i x out_i]
  std::vector<Tensor> biases;   // layer i: [out_i]

  static SurvivalHeadParams init(int d_in, const std::vector<int>& hidden, int t_max,
                                 Rng& rng) {
    if (d_in <= 0 || t_max < 1) throw ConfigError("survival head needs d_in > 0, t_max >= 1");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("survival head hidden sizes must be positive");
    SurvivalHeadParams p;
    p.d_in = d_in;
    p.t_max = t_max;
    std::vector<int> sizes{d_in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(t_max);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      Tensor w = Tensor::zeros({sizes[i], sizes[i + 1]}, true);
      const double bound = std::sqrt(6.0 / (sizes[i] + sizes[i + 1]));
      for (auto& v : w.values()) v = rng.uniform(-bound, bound);
      p.weights.push_back(w);
      p.biases.push_back(Tensor::zeros({sizes[i + 1]}, true));
    }
    return p;
  }

  void named_params(std::vector<std::pair<std::string, Tensor>>& out,
                    const std::string& prefix) const {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.emplace_back(prefix + ".w" + std::to_string(i), weights[i]);
      out.emplace_back(prefix + ".b" + std::to_string(i), biases[i]);
    }
  }
};

struct SurvivalOutput {
  Tensor r;   // [t_max], each in (0,1)
  Tensor s;   // [t_max], cumulative product of r
  Tensor mu;  // scalar, sum of s
};

inline SurvivalOutput predict(Graph& g, const Tensor& u, const SurvivalHeadParams& p) {
  if (u.rank() != 1 || u.shape()[0] != p.d_in)
    throw DimensionError("predict: representation width " +
                         std::to_string(u.rank() == 1 ? u.shape()[0] : -1) + ", expected " +
                         std::to_string(p.d_in));
  if (!u.all_finite()) throw NumericError("predict: non-finite representation");
  Tensor x = u;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    x = g.add(g.vecmat(x, p.weights[i]), p.biases[i]);
    if (i + 1 < p.weights.size()) x = g.relu(x);
  }
  if (!x.all_finite()) throw NumericError("predict: non-finite survival logits");
  SurvivalOutput out;
  out.r = g.sigmoid(x);
  out.s = g.cumprod(out.r);
  out.mu = g.sum(out.s);
  return out;
}

// builds the derived quantities from given hazard complements, for tests and
// for evaluating ground-truth curves
inline SurvivalOutput survival_from_r(Graph& g, const Tensor& r) {
  for (double v : r.values())
    if (!(v > 0.0 && v < 1.0))
      throw ValidationError("hazard complements must lie strictly inside (0,1)");
  SurvivalOutput out;
  out.r = r;
  out.s = g.cumprod(r);
  out.mu = g.sum(out.s);
  return out;
}

inline double hazard(const SurvivalOutput& out, int t) {
  if (t < 1 || t > static_cast<int>(out.r.values().size()))
    throw DimensionError("hazard: interval " + std::to_string(t) + " out of range");
  return 1.0 - out.r[t - 1];
}

inline double event_pmf(const SurvivalOutput& out, int t) {
  if (t < 1 || t > static_cast<int>(out.s.values().size()))
    throw DimensionError("event_pmf: interval " + std::to_string(t) + " out of range");
  const double s_prev = t == 1 ? 1.0 : out.s[t - 2];
  return s_prev - out.s[t - 1];
}

}  // namespace temposurv

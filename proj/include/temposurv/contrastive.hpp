#pragma once

// Censoring-aware weighted contrastive learning over survival durations:
// pair labeling with a positive window, adaptive per-negative temperatures,
// a training-only projection head, and the batch loss.

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

enum class PairKind { Positive, Negative, Excluded };

struct PairLabel {
  PairKind kind = PairKind::Excluded;
  double temperature = 0.0;  // set for Negative only
};

constexpr double kTemperatureFloor = 1e-6;

// Observed partners are positive inside [t_i - T/2, t_i + T/2) and negative
// outside. Censored partners are negative from t_i + T/2 on; before that
// their outcome inside the window is unknowable, so they are excluded.
inline PairLabel label_pair(int t_i, int k_i, int t_j, int k_j, double window) {
  if (window <= 0.0) throw ConfigError("pair window must be positive");
  if (k_i != 1) throw DomainError("anchor must be an observed instance");
  if (t_i < 1 || t_j < 1) throw ValidationError("durations must be >= 1");

  const double lo = t_i - window / 2.0;
  const double hi = t_i + window / 2.0;

  auto negative = [&]() {
    const double gap = std::abs(static_cast<double>(t_i - t_j));
    return PairLabel{PairKind::Negative, std::max(1.0 / std::max(gap, 1e-300), kTemperatureFloor)};
  };

  if (k_j == 1) {
    if (lo <= t_j && t_j < hi) return PairLabel{PairKind::Positive, 0.0};
    return negative();
  }
  if (t_j >= hi) return negative();
  return PairLabel{PairKind::Excluded, 0.0};
}

struct ProjectionHead {
  int d_in = 0;
  int d_proj = 0;
  Tensor w1, b1;  // [D x D], [D]
  Tensor w2, b2;  // [D x D_proj], [D_proj]

  static ProjectionHead init(int d_in, int d_proj, Rng& rng) {
    if (d_in <= 0 || d_proj <= 0)
      throw ConfigError("projection head dimensions must be positive");
    ProjectionHead h;
    h.d_in = d_in;
    h.d_proj = d_proj;
    auto glorot = [&rng](int r, int c) {
      Tensor t = Tensor::zeros({r, c}, true);
      const double bound = std::sqrt(6.0 / (r + c));
      for (auto& v : t.values()) v = rng.uniform(-bound, bound);
      return t;
    };
    h.w1 = glorot(d_in, d_in);
    h.b1 = Tensor::zeros({d_in}, true);
    h.w2 = glorot(d_in, d_proj);
    h.b2 = Tensor::zeros({d_proj}, true);
    return h;
  }

  void named_params(std::vector<std::pair<std::string, Tensor>>& out,
                    const std::string& prefix) const {
    out.emplace_back(prefix + ".w1", w1);
    out.emplace_back(prefix + ".b1", b1);
    out.emplace_back(prefix + ".w2", w2);
    out.emplace_back(prefix + ".b2", b2);
  }
};

inline Tensor project(Graph& g, const Tensor& u, const ProjectionHead& head) {
  Tensor hidden = g.relu(g.add(g.vecmat(u, head.w1), head.b1));
  Tensor raw = g.add(g.vecmat(hidden, head.w2), head.b2);
  return g.l2_normalize(raw);  // zero output rejected inside
}

struct ContrastiveInstance {
  Tensor z;  // unit-norm projection
  int t = 0;
  int k = 0;
};

inline Tensor supwcon_loss(Graph& g, const std::vector<ContrastiveInstance>& batch,
                           double tau_pos, double window) {
  if (batch.size() < 2) throw ValidationError("contrastive batch needs at least 2 instances");
  if (tau_pos <= 0.0) throw ConfigError("tau_pos must be positive");
  for (const ContrastiveInstance& inst : batch) {
    double nrm = 0.0;
    for (double v : inst.z.values()) nrm += v * v;
    if (std::abs(std::sqrt(nrm) - 1.0) > 1e-6)
      throw ValidationError("contrastive embedding is not unit-norm");
  }

  const int n = static_cast<int>(batch.size());
  Tensor total = g.constant_scalar(0.0);
  bool any = false;

  for (int i = 0; i < n; ++i) {
    if (batch[i].k != 1) continue;

    std::vector<int> positives;
    std::vector<std::pair<int, double>> members;  // denominator: (index, temperature)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      PairLabel label = label_pair(batch[i].t, batch[i].k, batch[j].t, batch[j].k, window);
      if (label.kind == PairKind::Positive) {
        positives.push_back(j);
        members.emplace_back(j, tau_pos);
      } else if (label.kind == PairKind::Negative) {
        members.emplace_back(j, label.temperature);
      }
    }
    if (positives.empty()) continue;

    std::vector<Tensor> exps;
    exps.reserve(members.size());
    for (const auto& [j, tau] : members)
      exps.push_back(g.exp(g.scale(g.dot(batch[i].z, batch[j].z), 1.0 / tau)));
    Tensor log_denom = g.log(g.sum(g.stack_scalars(exps)));

    const double inv_p = 1.0 / static_cast<double>(positives.size());
    for (int p : positives) {
      Tensor s = g.scale(g.dot(batch[i].z, batch[p].z), 1.0 / tau_pos);
      total = g.add(total, g.scale(g.sub(log_denom, s), inv_p));
    }
    any = true;
  }
  return any ? total : g.constant_scalar(0.0);
}

}  // namespace temposurv

#pragma once

// The four training losses and their weighted combination.

#include <cmath>
#include <string>
#include <vector>

#include "temposurv/autodiff.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/rng.hpp"
#include "temposurv/survival.hpp"

namespace temposurv {

struct LossWeights {
  double loglik = 1.0;
  double ranking = 1.0;
  double supwcon = 0.1;
  double mse = 0.1;

  void validate() const {
    if (loglik < 0 || ranking < 0 || supwcon < 0 || mse < 0)
      throw ConfigError("loss weights must be nonnegative");
    if (loglik == 0 && ranking == 0 && supwcon == 0 && mse == 0)
      throw ConfigError("at least one loss weight must be positive");
  }
};

enum class TrainPhase { Warmup, Contrastive };

struct InstancePrediction {
  SurvivalOutput out;
  int t = 0;
  int k = 0;
};

// Observed: negative log likelihood of surviving through t-1 and not past t.
// Censored: the negated plain sum of survival probabilities through t; a log
// variant is available behind a flag but is off by default.
inline Tensor loglik_loss(Graph& g, const SurvivalOutput& out, int t, int k,
                          bool censored_log_variant = false) {
  const int t_max = static_cast<int>(out.s.values().size());
  if (t < 1 || t > t_max)
    throw ValidationError("loglik_loss: duration " + std::to_string(t) + " outside [1, " +
                          std::to_string(t_max) + "]");
  for (double v : out.s.values())
    if (!(v > 0.0 && v < 1.0))
      throw ValidationError("loglik_loss: survival values must lie strictly inside (0,1)");

  if (k == 1) {
    std::vector<double> pre(t_max, 0.0), post(t_max, 0.0);
    for (int s = 1; s <= t - 1; ++s) pre[s - 1] = 1.0;
    for (int s = t; s <= t_max; ++s) post[s - 1] = 1.0;
    Tensor ones = g.constant({t_max}, std::vector<double>(t_max, 1.0));
    Tensor term_pre = g.dot(g.log(out.s), g.constant({t_max}, pre));
    Tensor term_post = g.dot(g.log(g.sub(ones, out.s)), g.constant({t_max}, post));
    return g.scale(g.add(term_pre, term_post), -1.0);
  }
  std::vector<double> upto(t_max, 0.0);
  for (int s = 1; s <= t; ++s) upto[s - 1] = 1.0;
  if (censored_log_variant)
    return g.scale(g.dot(g.log(out.s), g.constant({t_max}, upto)), -1.0);
  return g.scale(g.dot(out.s, g.constant({t_max}, upto)), -1.0);
}

inline Tensor loglik_loss_batch(Graph& g, const std::vector<InstancePrediction>& batch,
                                bool censored_log_variant = false) {
  Tensor total = g.constant_scalar(0.0);
  for (const InstancePrediction& p : batch)
    total = g.add(total, loglik_loss(g, p.out, p.t, p.k, censored_log_variant));
  return total;
}

// For each observed anchor, one longer-lived partner drawn uniformly with
// replacement; -1 marks anchors with no valid partner and unused slots.
inline std::vector<int> sample_ranking_partners(const std::vector<InstancePrediction>& batch,
                                                Rng& rng) {
  const int n = static_cast<int>(batch.size());
  std::vector<int> partners(n, -1);
  for (int i = 0; i < n; ++i) {
    if (batch[i].k != 1) continue;
    std::vector<int> longer;
    for (int j = 0; j < n; ++j)
      if (batch[j].t > batch[i].t) longer.push_back(j);
    if (longer.empty()) continue;
    partners[i] = longer[rng.uniform_int(0, static_cast<int>(longer.size()) - 1)];
  }
  return partners;
}

inline Tensor ranking_loss(Graph& g, const std::vector<InstancePrediction>& batch,
                           const std::vector<int>& partners) {
  if (partners.size() != batch.size())
    throw DimensionError("ranking_loss: partner list length mismatch");
  Tensor total = g.constant_scalar(0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int j = partners[i];
    if (j < 0) continue;
    if (batch[i].k != 1 || batch[j].t <= batch[i].t)
      throw ValidationError("ranking_loss: invalid partner assignment");
    Tensor gap = g.constant_scalar(static_cast<double>(batch[j].t - batch[i].t));
    Tensor margin = g.sub(batch[j].out.mu, batch[i].out.mu);
    total = g.add(total, g.relu(g.sub(gap, margin)));
  }
  return total;
}

inline Tensor ranking_loss_sampled(Graph& g, const std::vector<InstancePrediction>& batch,
                                   Rng& rng) {
  return ranking_loss(g, batch, sample_ranking_partners(batch, rng));
}

inline Tensor mse_loss(Graph& g, const std::vector<InstancePrediction>& batch) {
  std::vector<Tensor> sq;
  for (const InstancePrediction& p : batch) {
    if (p.k != 1) continue;
    Tensor err = g.sub(g.constant_scalar(static_cast<double>(p.t)), p.out.mu);
    sq.push_back(g.mul(err, err));
  }
  if (sq.empty()) return g.constant_scalar(0.0);
  Tensor total = g.constant_scalar(0.0);
  for (const Tensor& s : sq) total = g.add(total, s);
  return g.scale(total, 1.0 / static_cast<double>(sq.size()));
}

struct LossComponents {
  Tensor loglik;
  Tensor ranking;
  Tensor supwcon;
  Tensor mse;
};

inline Tensor total_loss(Graph& g, const LossComponents& c, const LossWeights& w,
                         TrainPhase phase) {
  w.validate();
  Tensor total = g.scale(c.loglik, w.loglik);
  total = g.add(total, g.scale(c.ranking, w.ranking));
  if (phase == TrainPhase::Contrastive) total = g.add(total, g.scale(c.supwcon, w.supwcon));
  total = g.add(total, g.scale(c.mse, w.mse));
  return total;
}

}  // namespace temposurv

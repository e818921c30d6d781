#pragma once

// Two-phase training: warm-up without the contrastive term, then all four
// losses. RMSprop with L2 decay folded into the gradient, global-norm
// clipping, per-epoch validation metrics, best-checkpoint selection.

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "temposurv/config.hpp"
#include "temposurv/losses.hpp"
#include "temposurv/model.hpp"

namespace temposurv {

struct Rmsprop {
  double lr, weight_decay, rho, eps;
  std::map<std::string, std::vector<double>> sq;

  Rmsprop(double lr, double weight_decay, double rho, double eps)
      : lr(lr), weight_decay(weight_decay), rho(rho), eps(eps) {}

  void step(const std::vector<std::pair<std::string, Tensor>>& params) {
    for (auto [name, p] : params) {
      std::vector<double>& acc = sq[name];
      acc.resize(p.values().size(), 0.0);
      for (std::size_t i = 0; i < p.values().size(); ++i) {
        const double g = p.grad()[i] + weight_decay * p.values()[i];
        acc[i] = rho * acc[i] + (1.0 - rho) * g * g;
        p.values()[i] -= lr * g / (std::sqrt(acc[i]) + eps);
      }
    }
  }
};

inline double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& params,
                               double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto [name, p] : params)
      for (double& g : p.grad()) g *= scale;
  }
  return norm;
}

struct EpochRow {
  int epoch = 0;
  TrainPhase phase = TrainPhase::Warmup;
  double loglik = 0, ranking = 0, supwcon = 0, mse = 0, total = 0;
  double val_ctd = std::numeric_limits<double>::quiet_NaN();
  double val_mae = std::numeric_limits<double>::quiet_NaN();
};

inline std::string metrics_csv(const std::vector<EpochRow>& rows) {
  std::string out = "epoch,phase,loglik,ranking,supwcon,mse,total,val_ctd,val_mae\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  for (const EpochRow& r : rows) {
    out += std::to_string(r.epoch);
    out += r.phase == TrainPhase::Warmup ? ",warmup," : ",contrastive,";
    num(r.loglik);
    out += ',';
    num(r.ranking);
    out += ',';
    num(r.supwcon);
    out += ',';
    num(r.mse);
    out += ',';
    num(r.total);
    out += ',';
    num(r.val_ctd);
    out += ',';
    num(r.val_mae);
    out += '\n';
  }
  return out;
}

// validation metrics; NaN where the metric is undefined on this split
inline std::pair<double, double> validation_metrics(const ModelParams& m, const OntologyDag& dag,
                                                    const std::vector<PatientRecord>& records) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (records.empty()) return {nan, nan};
  const std::vector<EvalRecord> evals = eval_records(m, dag, records);
  double ctd = nan, mae = nan;
  try {
    ctd = c_td(evals);
  } catch (const DomainError&) {
  }
  try {
    mae = mae_observed(evals);
  } catch (const DomainError&) {
  }
  return {ctd, mae};
}

struct TrainResult {
  ModelParams model;                  // parameters after the last epoch
  nlohmann::json best_checkpoint;     // inference-only, highest validation c_td
  std::vector<EpochRow> log;
  int best_epoch = 0;                 // 0 means the initial parameters
  double best_val_ctd = std::numeric_limits<double>::quiet_NaN();
};

inline TrainResult train(const RunConfig& cfg, const OntologyDag& dag,
                         const std::vector<PatientRecord>& train_records,
                         const std::vector<PatientRecord>& val_records) {
  cfg.validate();
  if (train_records.empty()) throw ValidationError("train: empty training set");
  for (const PatientRecord& r : train_records) check_record_dims(r, cfg.dims);
  for (const PatientRecord& r : val_records) check_record_dims(r, cfg.dims);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(0);
  TrainResult result;
  result.model = ModelParams::init(cfg, dag, init_rng);
  result.best_checkpoint = checkpoint_to_json(result.model, cfg, false);

  const std::vector<std::pair<std::string, Tensor>> params_base =
      result.model.named_params(false);
  const std::vector<std::pair<std::string, Tensor>> params_full =
      result.model.named_params(true);
  Rmsprop opt(cfg.lr, cfg.weight_decay, cfg.rho, cfg.opt_eps);
  const int total_epochs = cfg.warmup_epochs + cfg.contrast_epochs;

  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    const TrainPhase phase =
        epoch <= cfg.warmup_epochs ? TrainPhase::Warmup : TrainPhase::Contrastive;
    // The projection head lives only while the contrastive term is active;
    // outside that it gets neither gradients nor weight decay.
    const bool contrastive_live =
        phase == TrainPhase::Contrastive && cfg.weights.supwcon > 0.0;
    const std::vector<std::pair<std::string, Tensor>>& params =
        contrastive_live ? params_full : params_base;
    Rng epoch_rng = root.fork(epoch);
    const std::vector<std::vector<int>> batches =
        make_batches(static_cast<int>(train_records.size()), cfg.batch_size, epoch_rng);

    EpochRow row;
    row.epoch = epoch;
    row.phase = phase;
    for (const std::vector<int>& batch : batches) {
      Graph g;
      g.set_recording(true);
      CodeCache cache;
      std::vector<InstancePrediction> preds;
      std::vector<ContrastiveInstance> contrast;
      LossComponents comps;
      Tensor total;
      try {
        for (int idx : batch) {
          const PatientRecord& r = train_records[idx];
          PatientForward fwd = forward_patient(g, result.model, dag, r, cache);
          preds.push_back({fwd.out, r.t, r.k});
          if (contrastive_live && batch.size() >= 2)
            contrast.push_back({project(g, fwd.u, result.model.projection), r.t, r.k});
        }
        comps.loglik = loglik_loss_batch(g, preds, cfg.censored_log_variant);
        comps.ranking = ranking_loss_sampled(g, preds, epoch_rng);
        comps.mse = mse_loss(g, preds);
        comps.supwcon = contrast.empty()
                            ? g.constant_scalar(0.0)
                            : supwcon_loss(g, contrast, cfg.tau_pos, cfg.window);
        total = total_loss(g, comps, cfg.weights, phase);
      } catch (const DomainError& e) {
        // saturated probabilities surface as log-domain failures
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " +
                           e.what());
      } catch (const ValidationError& e) {
        // record dims were checked up front, so this is sigmoid saturation
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }

      const std::pair<const char*, double> named[] = {{"loglik", comps.loglik.item()},
                                                      {"ranking", comps.ranking.item()},
                                                      {"supwcon", comps.supwcon.item()},
                                                      {"mse", comps.mse.item()},
                                                      {"total", total.item()}};
      for (const auto& [term, value] : named)
        if (!std::isfinite(value))
          throw NumericError("training diverged: " + std::string(term) +
                             " loss is non-finite at epoch " + std::to_string(epoch));

      result.model.zero_grads();
      g.backward(total);
      clip_global_norm(params, cfg.clip_norm);
      opt.step(params);

      row.loglik += comps.loglik.item();
      row.ranking += comps.ranking.item();
      row.supwcon += comps.supwcon.item();
      row.mse += comps.mse.item();
      row.total += total.item();
    }

    auto [val_ctd, val_mae] = validation_metrics(result.model, dag, val_records);
    row.val_ctd = val_ctd;
    row.val_mae = val_mae;
    result.log.push_back(row);

    if (std::isfinite(val_ctd) &&
        (!std::isfinite(result.best_val_ctd) || val_ctd > result.best_val_ctd)) {
      result.best_val_ctd = val_ctd;
      result.best_epoch = epoch;
      result.best_checkpoint = checkpoint_to_json(result.model, cfg, false);
    }
  }
  return result;
}

}  // namespace temposurv

#pragma once

// Synthetic longitudinal cohort generator with a known multiplicative hazard
// law, plus the oracle concordance computed from the true hazards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "temposurv/data.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/metrics.hpp"
#include "temposurv/ontology.hpp"
#include "temposurv/rng.hpp"

namespace temposurv {

struct SyntheticSpec {
  int n_patients = 0;
  double censoring_rate = 0.5;    // target fraction of censored records
  std::map<std::string, double> risk_coefficients;
  double base_hazard = 0.1;
  std::uint64_t seed = 0;

  double risk_prevalence = 0.5;   // chance each risk code is assigned to a patient
  int t_max = 9;
  int n_visits_max = 8;
  int codes_per_visit_max = 4;
  int demo_dim = 4;

  void validate() const {
    auto fail = [](const std::string& why) { throw ConfigError("synthetic spec: " + why); };
    if (n_patients < 1) fail("nPatients must be positive");
    if (!(base_hazard > 0.0 && base_hazard < 1.0)) fail("baseHazard must lie in (0,1)");
    if (!(censoring_rate > 0.0 && censoring_rate < 1.0)) fail("censoringRate must lie in (0,1)");
    if (!(risk_prevalence > 0.0 && risk_prevalence < 1.0)) fail("riskPrevalence must lie in (0,1)");
    if (risk_coefficients.size() < 2) fail("need at least two designated risk codes");
    for (const auto& [code, mult] : risk_coefficients)
      if (!(mult > 0.0)) fail("multiplier for '" + code + "' must be positive");
    if (t_max < 1 || n_visits_max < 1 || codes_per_visit_max < 1) fail("caps must be positive");
    if (demo_dim < 0) fail("demoDim must be non-negative");
  }
};

struct SyntheticDataset {
  std::vector<PatientRecord> records;
  std::map<std::string, std::vector<double>> hazards;  // sidecar content
  std::map<std::string, int> event_day;                // generator-side truth
  double censor_prob = 0.0;                            // calibrated per-interval rate
};

namespace detail {

// probability a patient with per-interval hazard p outlives a censoring draw
// C = min(Geometric(pc), t_max)
inline double censored_fraction(double p, double pc, int t_max) {
  double total = 0.0;
  for (int c = 1; c <= t_max; ++c) {
    const double pr_c = c < t_max ? pc * std::pow(1.0 - pc, c - 1)
                                  : std::pow(1.0 - pc, t_max - 1);
    total += pr_c * std::pow(1.0 - p, c);
  }
  return total;
}

inline double calibrate_censor_prob(const std::vector<double>& hazards, double target,
                                    int t_max) {
  auto rate = [&](double pc) {
    double acc = 0.0;
    for (double p : hazards) acc += censored_fraction(p, pc, t_max);
    return acc / static_cast<double>(hazards.size());
  };
  double lo = 1e-9, hi = 1.0 - 1e-9;
  if (rate(lo) > target || rate(hi) < target)
    throw ConfigError("censoring target " + std::to_string(target) +
                      " unreachable for this hazard mix");
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Each patient gets 1..n_visits_max visits of filler codes; assigned risk
// codes are injected into random visits and multiply the base hazard. The
// event duration is a geometric draw under that hazard (the event itself
// falls on the following day); censoring is an independent geometric draw
// whose rate is bisected so the cohort hits the target censoring fraction.
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const OntologyDag& dag) {
  spec.validate();
  std::vector<std::string> risk_codes, filler;
  for (const auto& [code, mult] : spec.risk_coefficients) {
    if (!dag.leaf_set().count(code))
      throw ConfigError("risk code '" + code + "' is not a leaf of the ontology");
    risk_codes.push_back(code);
  }
  for (const std::string& leaf : dag.leaf_set())
    if (!spec.risk_coefficients.count(leaf)) filler.push_back(leaf);
  if (filler.empty()) throw ConfigError("no non-risk leaves available for filler codes");

  Rng root(spec.seed);
  SyntheticDataset out;
  const double eps = 1e-4;
  std::vector<double> patient_hazard(spec.n_patients);

  for (int i = 0; i < spec.n_patients; ++i) {
    Rng rng = root.fork(2 * i);
    PatientRecord r;
    r.id = "syn" + std::to_string(i);

    double hazard = spec.base_hazard;
    std::vector<std::string> assigned;
    for (const std::string& code : risk_codes)
      if (rng.bernoulli(spec.risk_prevalence)) {
        assigned.push_back(code);
        hazard *= spec.risk_coefficients.at(code);
      }
    hazard = std::clamp(hazard, eps, 1.0 - eps);
    patient_hazard[i] = hazard;

    const int n_visits = rng.uniform_int(1, spec.n_visits_max);
    r.visits.resize(n_visits);
    for (auto& visit : r.visits) {
      const int want = rng.uniform_int(1, spec.codes_per_visit_max);
      std::vector<std::string> pool = filler;
      rng.shuffle(pool);
      visit.assign(pool.begin(), pool.begin() + std::min<std::size_t>(want, pool.size()));
    }
    for (const std::string& code : assigned)
      r.visits[rng.uniform_int(0, n_visits - 1)].push_back(code);

    for (int d = 0; d < spec.demo_dim; ++d) {
      if (d == 0)
        r.demo.push_back((rng.normal(59.47, 15.0) - 59.47) / 15.0);
      else if (d == 1)
        r.demo.push_back(rng.bernoulli(0.52) ? 1.0 : 0.0);
      else
        r.demo.push_back(rng.uniform(-1.0, 1.0));
    }
    out.records.push_back(std::move(r));
  }

  out.censor_prob =
      detail::calibrate_censor_prob(patient_hazard, spec.censoring_rate, spec.t_max);

  for (int i = 0; i < spec.n_patients; ++i) {
    Rng rng = root.fork(2 * i + 1);
    PatientRecord& r = out.records[i];
    const int duration = rng.geometric(patient_hazard[i]);
    const int censor = std::min(rng.geometric(out.censor_prob), spec.t_max);
    out.event_day[r.id] = duration + 1;
    if (duration <= censor) {
      r.t = duration;
      r.k = 1;
    } else {
      r.t = censor;
      r.k = 0;
    }
    out.hazards[r.id] = std::vector<double>(spec.t_max, patient_hazard[i]);
  }
  return out;
}

// Concordance an ideal model would reach: predictions replaced with the true
// survival curves implied by the sidecar hazards.
// Treats the true per-interval hazards as if they were model predictions.
inline std::vector<EvalRecord> oracle_eval_records(
    const std::map<std::string, std::vector<double>>& sidecar,
    const std::vector<PatientRecord>& records) {
  std::vector<EvalRecord> evals;
  for (const PatientRecord& r : records) {
    auto it = sidecar.find(r.id);
    if (it == sidecar.end())
      throw ValidationError("sidecar missing id '" + r.id + "'");
    const std::vector<double>& hazard = it->second;
    if (r.t > static_cast<int>(hazard.size()))
      throw ValidationError("sidecar curve for '" + r.id + "' shorter than its duration");
    EvalRecord e;
    e.id = r.id;
    e.t = r.t;
    e.k = r.k;
    double surv = 1.0;
    for (double h : hazard) {
      surv *= 1.0 - h;
      e.s.push_back(surv);
      e.mu += surv;
    }
    evals.push_back(std::move(e));
  }
  return evals;
}

inline double oracle_ctd(const std::map<std::string, std::vector<double>>& sidecar,
                         const std::vector<PatientRecord>& records) {
  return c_td(oracle_eval_records(sidecar, records));
}

}  // namespace temposurv

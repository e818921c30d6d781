#pragma once

// Evaluation: time-dependent concordance, MAE over observed instances,
// the Kaplan-Meier product-limit estimator, and mean survival curves.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "temposurv/errors.hpp"

namespace temposurv {

struct EvalRecord {
  std::string id;
  int t = 0;
  int k = 0;
  std::vector<double> s;  // predicted survival at 1..T_max
  double mu = 0.0;

  void validate() const {
    if (s.empty()) throw ValidationError("eval record '" + id + "' has an empty curve");
    if (t < 1 || t > static_cast<int>(s.size()))
      throw ValidationError("eval record '" + id + "' duration " + std::to_string(t) +
                            " outside [1, " + std::to_string(s.size()) + "]");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[i - 1] + 1e-12)
        throw ValidationError("eval record '" + id + "' has an increasing survival curve");
  }
};

// Pairs (i, j) are comparable when t_i < t_j and i is observed; the pair is
// concordant when the shorter-lived patient has the lower predicted survival
// at the earlier duration. Ties count half.
inline double c_td(const std::vector<EvalRecord>& records) {
  for (const EvalRecord& r : records) r.validate();
  const int n = static_cast<int>(records.size());
  double mass = 0.0;
  long comparable = 0;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const EvalRecord* first = &records[a];
      const EvalRecord* second = &records[b];
      if (second->t < first->t) std::swap(first, second);
      if (first->t == second->t || first->k != 1) continue;
      ++comparable;
      const double s_first = first->s[first->t - 1];
      const double s_second = second->s[first->t - 1];
      if (s_first < s_second)
        mass += 1.0;
      else if (s_first == s_second)
        mass += 0.5;
    }
  if (comparable == 0) throw DomainError("c_td: no comparable pairs");
  return mass / static_cast<double>(comparable);
}

inline double mae_observed(const std::vector<EvalRecord>& records) {
  double total = 0.0;
  long count = 0;
  for (const EvalRecord& r : records) {
    if (r.k != 1) continue;
    total += std::abs(static_cast<double>(r.t) - r.mu);
    ++count;
  }
  if (count == 0) throw DomainError("mae_observed: no observed records");
  return total / static_cast<double>(count);
}

struct KmCurve {
  std::vector<int> time_points;    // ascending distinct event times
  std::vector<double> survival;    // value from each event time onward

  // step-function evaluation; 1 before the first event time
  double at(int t) const {
    double value = 1.0;
    for (std::size_t i = 0; i < time_points.size() && time_points[i] <= t; ++i)
      value = survival[i];
    return value;
  }
};

// Product-limit estimate. A patient censored at t stays in the risk set for
// the event time t itself and leaves afterwards.
inline KmCurve kaplan_meier(const std::vector<std::pair<int, int>>& times_flags) {
  if (times_flags.empty()) throw DomainError("kaplan_meier: empty input");
  std::map<int, int> events;
  for (const auto& [t, k] : times_flags) {
    if (t < 1) throw ValidationError("kaplan_meier: durations must be >= 1");
    if (k == 1) ++events[t];
  }
  KmCurve curve;
  double running = 1.0;
  for (const auto& [t, d] : events) {
    long at_risk = 0;
    for (const auto& [tj, kj] : times_flags)
      if (tj >= t) ++at_risk;
    running *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    curve.time_points.push_back(t);
    curve.survival.push_back(running);
  }
  return curve;
}

inline KmCurve kaplan_meier(const std::vector<EvalRecord>& records) {
  std::vector<std::pair<int, int>> tf;
  tf.reserve(records.size());
  for (const EvalRecord& r : records) tf.emplace_back(r.t, r.k);
  return kaplan_meier(tf);
}

enum class CurveSubset { All, ObservedOnly };

inline std::vector<double> mean_survival_curve(const std::vector<EvalRecord>& records,
                                               CurveSubset subset) {
  std::vector<double> mean;
  long count = 0;
  for (const EvalRecord& r : records) {
    if (subset == CurveSubset::ObservedOnly && r.k != 1) continue;
    if (mean.empty())
      mean.assign(r.s.size(), 0.0);
    else if (mean.size() != r.s.size())
      throw DimensionError("mean_survival_curve: curve lengths differ");
    for (std::size_t i = 0; i < r.s.size(); ++i) mean[i] += r.s[i];
    ++count;
  }
  if (count == 0) throw DomainError("mean_survival_curve: empty subset");
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

}  // namespace temposurv

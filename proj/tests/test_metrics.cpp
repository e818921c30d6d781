#include <algorithm>
#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "temposurv/metrics.hpp"
#include "temposurv/rng.hpp"

using temposurv::c_td;
using temposurv::CurveSubset;
using temposurv::EvalRecord;
using temposurv::kaplan_meier;
using temposurv::KmCurve;
using temposurv::mae_observed;
using temposurv::mean_survival_curve;
using temposurv::Rng;

namespace {

EvalRecord rec(int t, int k, std::vector<double> s) {
  EvalRecord r;
  r.id = "r";
  r.t = t;
  r.k = k;
  r.s = std::move(s);
  r.mu = 0.0;
  for (double v : r.s) r.mu += v;
  return r;
}

std::vector<double> random_curve(Rng& rng, int len) {
  std::vector<double> s(len);
  double cur = 1.0;
  for (int i = 0; i < len; ++i) {
    cur *= rng.uniform(0.3, 1.0);
    s[i] = cur;
  }
  return s;
}

std::vector<EvalRecord> random_records(Rng& rng, int n, int t_max) {
  std::vector<EvalRecord> rs;
  for (int i = 0; i < n; ++i) {
    EvalRecord r = rec(rng.uniform_int(1, t_max), rng.bernoulli(0.6) ? 1 : 0,
                       random_curve(rng, t_max));
    r.id = "p" + std::to_string(i);
    rs.push_back(std::move(r));
  }
  return rs;
}

std::vector<toracle::CtdCase> to_cases(const std::vector<EvalRecord>& rs) {
  std::vector<toracle::CtdCase> cases;
  for (const EvalRecord& r : rs) cases.push_back({r.t, r.k, r.s});
  return cases;
}

}  // namespace

TEST_CASE("concordance on a two-record hand example", "[metrics]") {
  // the earlier event carries the lower predicted survival at its duration
  std::vector<EvalRecord> rs{rec(2, 1, {0.6, 0.2, 0.1, 0.05}),
                             rec(4, 1, {0.9, 0.8, 0.7, 0.6})};
  REQUIRE(c_td(rs) == 1.0);
  std::swap(rs[0].s, rs[1].s);
  REQUIRE(c_td(rs) == 0.0);
}

TEST_CASE("identical curves score exactly one half", "[metrics]") {
  Rng rng(404);
  const std::vector<double> shared = random_curve(rng, 6);
  std::vector<EvalRecord> rs;
  for (int t = 1; t <= 6; ++t) rs.push_back(rec(t, 1, shared));
  REQUIRE(c_td(rs) == 0.5);
}

TEST_CASE("concordance counts only observed earlier records", "[metrics]") {
  // censored first record: the (0, 1) pair is not comparable
  std::vector<EvalRecord> rs{rec(2, 0, {0.6, 0.2, 0.1}), rec(3, 1, {0.9, 0.8, 0.7}),
                             rec(1, 1, {0.5, 0.4, 0.3})};
  // comparable: (2,0) and (2,1); record 2 predicted below both at t=1
  REQUIRE(c_td(rs) == 1.0);
}

TEST_CASE("concordance matches the pairwise reference", "[metrics]") {
  for (int seed = 0; seed < 200; ++seed) {
    Rng rng(9000 + seed);
    const int n = rng.uniform_int(2, 50);
    std::vector<EvalRecord> rs = random_records(rng, n, 8);
    const double expect = toracle::ctd_reference(to_cases(rs));
    if (expect < 0) {
      REQUIRE_THROWS_AS(c_td(rs), temposurv::DomainError);
    } else {
      REQUIRE_THAT(c_td(rs), Catch::Matchers::WithinAbs(expect, 1e-12));
    }
  }
}

TEST_CASE("concordance is invariant to monotone rescaling", "[metrics]") {
  for (int seed = 0; seed < 40; ++seed) {
    Rng rng(7100 + seed);
    std::vector<EvalRecord> rs = random_records(rng, rng.uniform_int(3, 30), 7);
    bool defined = true;
    double base = 0.0;
    try {
      base = c_td(rs);
    } catch (const temposurv::DomainError&) {
      defined = false;
    }
    if (!defined) continue;
    for (EvalRecord& r : rs)
      for (double& v : r.s) v = v * v * 0.5;  // strictly increasing on (0, 1)
    REQUIRE_THAT(c_td(rs), Catch::Matchers::WithinAbs(base, 1e-12));
  }
}

TEST_CASE("concordance rejects degenerate inputs", "[metrics]") {
  REQUIRE_THROWS_AS(c_td({}), temposurv::DomainError);
  REQUIRE_THROWS_AS(c_td({rec(2, 1, {0.9, 0.5})}), temposurv::DomainError);
  // all censored
  REQUIRE_THROWS_AS(c_td({rec(1, 0, {0.9, 0.5}), rec(2, 0, {0.8, 0.4})}),
                    temposurv::DomainError);
  // equal durations only
  REQUIRE_THROWS_AS(c_td({rec(2, 1, {0.9, 0.5}), rec(2, 1, {0.8, 0.4})}),
                    temposurv::DomainError);
}

TEST_CASE("record validation catches malformed curves", "[metrics]") {
  REQUIRE_THROWS_AS(c_td({rec(1, 1, {0.5, 0.7}), rec(2, 1, {0.9, 0.8})}),
                    temposurv::ValidationError);
  REQUIRE_THROWS_AS(c_td({rec(3, 1, {0.9, 0.8}), rec(1, 1, {0.9, 0.8})}),
                    temposurv::ValidationError);
  REQUIRE_THROWS_AS(c_td({rec(0, 1, {0.9, 0.8}), rec(1, 1, {0.9, 0.8})}),
                    temposurv::ValidationError);
}

TEST_CASE("mae averages absolute errors over observed records", "[metrics]") {
  std::vector<EvalRecord> rs{rec(3, 1, {0.9, 0.8, 0.7}), rec(2, 1, {0.9, 0.8, 0.7}),
                             rec(1, 0, {0.9, 0.8, 0.7})};
  rs[0].mu = 4.0;   // error 1
  rs[1].mu = 2.5;   // error 0.5
  rs[2].mu = 9.0;   // censored, ignored
  REQUIRE_THAT(mae_observed(rs), Catch::Matchers::WithinAbs(0.75, 1e-15));
  rs[0].k = 0;
  rs[1].k = 0;
  REQUIRE_THROWS_AS(mae_observed(rs), temposurv::DomainError);
}

TEST_CASE("kaplan meier three-patient hand example", "[metrics]") {
  const KmCurve curve = kaplan_meier(std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {3, 0}});
  REQUIRE(curve.time_points == std::vector<int>{1, 2});
  REQUIRE_THAT(curve.survival[0], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(curve.survival[1], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  REQUIRE_THAT(curve.at(3), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  REQUIRE(curve.at(0) == 1.0);
}

TEST_CASE("patients censored at an event time remain at risk", "[metrics]") {
  const KmCurve curve = kaplan_meier(std::vector<std::pair<int, int>>{{1, 0}, {1, 1}});
  REQUIRE(curve.time_points == std::vector<int>{1});
  REQUIRE_THAT(curve.survival[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("without censoring the estimator is one minus the ecdf", "[metrics]") {
  for (int seed = 0; seed < 30; ++seed) {
    Rng rng(5600 + seed);
    const int n = rng.uniform_int(1, 60);
    std::vector<std::pair<int, int>> tf;
    for (int i = 0; i < n; ++i) tf.emplace_back(rng.uniform_int(1, 10), 1);
    const KmCurve curve = kaplan_meier(tf);
    for (int t = 0; t <= 10; ++t) {
      long below = std::count_if(tf.begin(), tf.end(),
                                 [&](const std::pair<int, int>& p) { return p.first <= t; });
      const double ecdf = static_cast<double>(below) / static_cast<double>(n);
      REQUIRE_THAT(curve.at(t), Catch::Matchers::WithinAbs(1.0 - ecdf, 1e-12));
    }
  }
}

TEST_CASE("an all-censored cohort keeps survival at one", "[metrics]") {
  const KmCurve curve = kaplan_meier(std::vector<std::pair<int, int>>{{2, 0}, {5, 0}, {1, 0}});
  REQUIRE(curve.time_points.empty());
  for (int t = 0; t <= 6; ++t) REQUIRE(curve.at(t) == 1.0);
}

TEST_CASE("a single observed patient drops survival to zero", "[metrics]") {
  const KmCurve curve = kaplan_meier(std::vector<std::pair<int, int>>{{1, 1}});
  REQUIRE(curve.at(1) == 0.0);
}

TEST_CASE("kaplan meier matches the sorted-walk reference", "[metrics]") {
  for (int seed = 0; seed < 200; ++seed) {
    Rng rng(3300 + seed);
    const int n = rng.uniform_int(1, 40);
    std::vector<std::pair<int, int>> tf;
    for (int i = 0; i < n; ++i)
      tf.emplace_back(rng.uniform_int(1, 9), rng.bernoulli(0.5) ? 1 : 0);
    const KmCurve curve = kaplan_meier(tf);
    const auto expect = toracle::km_reference(tf);
    REQUIRE(curve.time_points.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      REQUIRE(curve.time_points[i] == expect[i].first);
      REQUIRE_THAT(curve.survival[i], Catch::Matchers::WithinAbs(expect[i].second, 1e-12));
    }
  }
}

TEST_CASE("kaplan meier rejects empty and invalid input", "[metrics]") {
  REQUIRE_THROWS_AS(kaplan_meier(std::vector<std::pair<int, int>>{}), temposurv::DomainError);
  REQUIRE_THROWS_AS(kaplan_meier(std::vector<std::pair<int, int>>{{0, 1}}),
                    temposurv::ValidationError);
}

TEST_CASE("mean survival curves average pointwise per subset", "[metrics]") {
  std::vector<EvalRecord> rs{rec(1, 1, {0.8, 0.4}), rec(2, 0, {0.6, 0.2})};
  const std::vector<double> all = mean_survival_curve(rs, CurveSubset::All);
  REQUIRE_THAT(all[0], Catch::Matchers::WithinAbs(0.7, 1e-15));
  REQUIRE_THAT(all[1], Catch::Matchers::WithinAbs(0.3, 1e-15));
  const std::vector<double> obs = mean_survival_curve(rs, CurveSubset::ObservedOnly);
  REQUIRE_THAT(obs[0], Catch::Matchers::WithinAbs(0.8, 1e-15));
  REQUIRE_THAT(obs[1], Catch::Matchers::WithinAbs(0.4, 1e-15));
}

TEST_CASE("mean survival curve rejects empty subsets and ragged input", "[metrics]") {
  std::vector<EvalRecord> censored_only{rec(1, 0, {0.8, 0.4})};
  REQUIRE_THROWS_AS(mean_survival_curve(censored_only, CurveSubset::ObservedOnly),
                    temposurv::DomainError);
  REQUIRE_THROWS_AS(mean_survival_curve({}, CurveSubset::All), temposurv::DomainError);
  std::vector<EvalRecord> ragged{rec(1, 1, {0.8, 0.4}), rec(1, 1, {0.8})};
  REQUIRE_THROWS_AS(mean_survival_curve(ragged, CurveSubset::All), temposurv::DimensionError);
}

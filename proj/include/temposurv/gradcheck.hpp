#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "temposurv/autodiff.hpp"

namespace temposurv::ad {

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool ok = false;
  double max_rel_err = 0.0;
  std::size_t n_checked = 0;
  std::vector<GradCheckEntry> worst;  // up to 5, sorted by rel_err descending
};

// f must rebuild the loss from scratch on each call using the given graph;
// params are the leaves f reads. Analytic gradients come from one backward
// pass, numeric ones from (f(x+h)-f(x-h))/2h per coordinate.
//
// The error is relative for coordinates above kGradFloor and absolute below
// it: the central quotient carries roundoff of order eps*|f|/h, so gradients
// near zero cannot be resolved to a pure relative tolerance in doubles.
inline constexpr double kGradFloor = 1e-4;

inline GradCheckReport grad_check(
    const std::function<Tensor(Graph&)>& f,
    const std::vector<std::pair<std::string, Tensor>>& params, double h = 1e-5,
    double tol = 1e-4) {
  GradCheckReport report;

  for (auto [name, p] : params) p.zero_grad();
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) analytic.push_back(p.grad());

  auto eval = [&]() {
    Graph g;
    g.set_recording(false);
    return f(g).item();
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    for (std::size_t i = 0; i < p.values().size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = eval();
      p.values()[i] = keep - h;
      const double down = eval();
      p.values()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double scale =
          std::max(kGradFloor, std::max(std::abs(a), std::abs(numeric)));
      const double rel = std::abs(a - numeric) / scale;
      ++report.n_checked;
      if (rel > report.max_rel_err) report.max_rel_err = rel;
      if (rel > tol) {
        GradCheckEntry e{params[pi].first, i, a, numeric, rel};
        report.worst.push_back(e);
      }
    }
  }
  std::sort(report.worst.begin(), report.worst.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) {
              return a.rel_err > b.rel_err;
            });
  if (report.worst.size() > 5) report.worst.resize(5);
  report.ok = report.max_rel_err <= tol;
  return report;
}

}  // namespace temposurv::ad

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "stochdiff/autodiff.hpp"

namespace stochdiff {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Scalar objective built on a tape from a parameter set. Must be deterministic.
using ScalarObjective = std::function<Var(Tape&, const ParameterSet&)>;

/// Central finite differences against the tape gradient, entry by entry.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor);
/// the floor keeps entries whose true gradient is ~0 from dividing noise by noise.
inline GradCheckReport gradient_check(const ScalarObjective& f, ParameterSet& ps, double step = 1e-5,
                                      double tolerance = 1e-4, double abs_floor = 1e-6) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = f(tape, ps);
    if (!std::isfinite(loss.scalar())) throw NonFiniteError("gradient_check: objective is not finite");
    tape.backward(loss);
    analytic.reserve(ps.size());
    for (const auto& e : ps) analytic.emplace_back(e.value.rows, e.value.cols);
    tape.accumulate_param_grads(analytic);
  }
  auto eval = [&]() {
    Tape tape(false);
    const double v = f(tape, ps).scalar();
    if (!std::isfinite(v)) throw NonFiniteError("gradient_check: objective is not finite under perturbation");
    return v;
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    Tensor& w = ps[p].value;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      w[k] = orig + step;
      const double up = eval();
      w[k] = orig - step;
      const double down = eval();
      w[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = ps[p].name;
        report.worst_index = k;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace stochdiff

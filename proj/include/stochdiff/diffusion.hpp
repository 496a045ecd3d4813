// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Closed-form diffusion mathematics for a fixed variance schedule.
//
// Step indices are 1-based (n = 1..N) to match the usual notation; the
// convention alpha_bar(0) = 1 makes the n = 1 reverse step return the
// predicted clean point exactly.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochdiff/tensor.hpp"

namespace stochdiff {

class InvalidRangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Diagonal Gaussian: per-dimension mean and (strictly positive) variance.
struct GaussianDiag {
  std::vector<double> mean;
  std::vector<double> var;

  std::size_t dim() const { return mean.size(); }
  void validate() const {
    if (mean.size() != var.size()) throw ShapeError("GaussianDiag: mean/var length mismatch");
    for (double v : var) {
      if (!(v > 0.0)) throw std::domain_error("GaussianDiag: nonpositive variance");
    }
  }
};

enum class ScheduleKind { linear };

class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;

  std::size_t steps() const { return betas_.size(); }

  // 1-based accessors.
  double beta(std::size_t n) const { return betas_.at(check(n) - 1); }
  double alpha(std::size_t n) const { return alphas_.at(check(n) - 1); }
  double alpha_bar(std::size_t n) const { return alpha_bars_.at(check(n) - 1); }
  /// alpha_bar with the n = 0 convention (== 1).
  double alpha_bar_prev(std::size_t n) const { return check(n) == 1 ? 1.0 : alpha_bars_[n - 2]; }
  double posterior_var(std::size_t n) const { return posterior_vars_.at(check(n) - 1); }
  /// 1 - alpha_bar, accumulated in log space so tiny betas do not cancel.
  double one_minus_alpha_bar(std::size_t n) const { return one_minus_alpha_bars_.at(check(n) - 1); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& posterior_vars() const { return posterior_vars_; }

  /// Coefficients of the x0-parameterized reverse mean: mu = c_x0 * x0 + c_xn * xn.
  /// At n = 1 these are exactly (1, 0).
  double mean_coef_x0(std::size_t n) const {
    if (check(n) == 1) return 1.0;
    return std::sqrt(alpha_bar_prev(n)) * beta(n) / one_minus_alpha_bar(n);
  }
  double mean_coef_xn(std::size_t n) const {
    if (check(n) == 1) return 0.0;
    return std::sqrt(alpha(n)) * one_minus_alpha_bars_[n - 2] / one_minus_alpha_bar(n);
  }

  static DiffusionSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw InvalidRangeError("diffusion schedule needs at least one step");
    DiffusionSchedule s;
    s.betas_ = std::move(betas);
    const std::size_t n = s.betas_.size();
    s.alphas_.resize(n);
    s.alpha_bars_.resize(n);
    s.posterior_vars_.resize(n);
    s.one_minus_alpha_bars_.resize(n);
    double prod = 1.0, log_prod = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = s.betas_[i];
      if (!(b > 0.0 && b < 1.0)) throw InvalidRangeError("beta out of (0,1) at step " + std::to_string(i + 1));
      s.alphas_[i] = 1.0 - b;
      prod *= s.alphas_[i];
      log_prod += std::log1p(-b);
      s.alpha_bars_[i] = prod;
      s.one_minus_alpha_bars_[i] = -std::expm1(log_prod);
      s.posterior_vars_[i] = i == 0 ? b : s.one_minus_alpha_bars_[i - 1] / s.one_minus_alpha_bars_[i] * b;
    }
    return s;
  }

  friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;

 private:
  std::size_t check(std::size_t n) const {
    if (n < 1 || n > betas_.size()) {
      throw std::out_of_range("diffusion step " + std::to_string(n) + " outside 1.." + std::to_string(betas_.size()));
    }
    return n;
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> posterior_vars_;
  std::vector<double> one_minus_alpha_bars_;
};

/// Linear betas from beta_min to beta_max inclusive.
inline DiffusionSchedule build_schedule(std::size_t n_steps, double beta_min, double beta_max,
                                        ScheduleKind kind = ScheduleKind::linear) {
  if (n_steps < 1) throw InvalidRangeError("n_steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw InvalidRangeError("need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(n_steps);
  switch (kind) {
    case ScheduleKind::linear:
      for (std::size_t i = 0; i < n_steps; ++i) {
        const double frac = n_steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_steps - 1);
        betas[i] = beta_min + (beta_max - beta_min) * frac;
      }
      break;
  }
  return DiffusionSchedule::from_betas(std::move(betas));
}

/// x^n = sqrt(abar_n) x0 + sqrt(1 - abar_n) eps.
inline std::vector<double> forward_sample(std::span<const double> x0, std::size_t n, std::span<const double> eps,
                                          const DiffusionSchedule& sched) {
  if (x0.size() != eps.size()) throw ShapeError("forward_sample: x0/eps length mismatch");
  const double ab = sched.alpha_bar(n);
  const double a = std::sqrt(ab), b = std::sqrt(sched.one_minus_alpha_bar(n));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

/// q(x^{n-1} | x^n, x^0): mean from the closed form, isotropic variance beta~_n.
inline GaussianDiag forward_posterior(std::span<const double> xn, std::span<const double> x0, std::size_t n,
                                      const DiffusionSchedule& sched) {
  if (xn.size() != x0.size()) throw ShapeError("forward_posterior: xn/x0 length mismatch");
  const double c0 = sched.mean_coef_x0(n), cn = sched.mean_coef_xn(n);
  GaussianDiag g;
  g.mean.resize(xn.size());
  for (std::size_t i = 0; i < xn.size(); ++i) g.mean[i] = c0 * x0[i] + cn * xn[i];
  g.var.assign(xn.size(), sched.posterior_var(n));
  return g;
}

/// One ancestral step with a predicted clean point in place of x0.
/// Noise scaled by sqrt(beta~_n) is added only when `add_noise` (never at n = 1).
inline std::vector<double> reverse_step(std::span<const double> xn, std::span<const double> x0_pred, std::size_t n,
                                        const DiffusionSchedule& sched, std::span<const double> noise,
                                        bool add_noise) {
  if (add_noise && n == 1) throw std::logic_error("reverse_step: noise injection is not allowed at n = 1");
  if (xn.size() != x0_pred.size()) throw ShapeError("reverse_step: xn/x0_pred length mismatch");
  if (add_noise && noise.size() != xn.size()) throw ShapeError("reverse_step: noise length mismatch");
  const double c0 = sched.mean_coef_x0(n), cn = sched.mean_coef_xn(n);
  const double sigma = std::sqrt(sched.posterior_var(n));
  std::vector<double> out(xn.size());
  for (std::size_t i = 0; i < xn.size(); ++i) {
    out[i] = c0 * x0_pred[i] + cn * xn[i];
    if (add_noise) out[i] += sigma * noise[i];
  }
  return out;
}

}  // namespace stochdiff

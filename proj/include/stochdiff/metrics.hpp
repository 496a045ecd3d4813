// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stochdiff/forecasting.hpp"
#include "stochdiff/tensor.hpp"

namespace stochdiff {

class ZeroNormalizerError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// mean_abs divides by mean(|truth|); literal divides by mean(truth) as printed.
enum class NrmseNormalizer { mean_abs, literal };

inline double nrmse(const Tensor& pred, const Tensor& truth, NrmseNormalizer norm = NrmseNormalizer::mean_abs) {
  require_same_shape(pred, truth, "nrmse");
  if (truth.size() == 0) throw std::invalid_argument("nrmse: empty input");
  double se = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    scale += norm == NrmseNormalizer::mean_abs ? std::abs(truth[i]) : truth[i];
  }
  const double n = static_cast<double>(truth.size());
  scale /= n;
  if (scale == 0.0 || !std::isfinite(scale)) throw ZeroNormalizerError("nrmse: truth has zero mean magnitude");
  return std::sqrt(se / n) / std::abs(scale);
}

/// CRPS of the empirical CDF of `samples` against `x`, integrated exactly over
/// the piecewise-constant segments between sorted samples and x.
inline double crps_empirical(std::vector<double> samples, double x) {
  if (samples.empty()) throw std::invalid_argument("crps_empirical: empty sample");
  std::sort(samples.begin(), samples.end());
  const double s = static_cast<double>(samples.size());
  std::vector<double> knots = samples;
  knots.insert(std::upper_bound(knots.begin(), knots.end(), x), x);
  double total = 0.0;
  std::size_t below = 0;  // samples <= left edge
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double a = knots[k], b = knots[k + 1];
    while (below < samples.size() && samples[below] <= a) ++below;
    const double diff = static_cast<double>(below) / s - (x <= a ? 1.0 : 0.0);
    total += diff * diff * (b - a);
  }
  return total;
}

/// Energy form: (1/S) sum |x_s - x| - (1/2S^2) sum sum |x_s - x_s'|.
inline double crps_energy(const std::vector<double>& samples, double x) {
  if (samples.empty()) throw std::invalid_argument("crps_energy: empty sample");
  const double s = static_cast<double>(samples.size());
  double a = 0.0, b = 0.0;
  for (double u : samples) {
    a += std::abs(u - x);
    for (double v : samples) b += std::abs(u - v);
  }
  return a / s - b / (2.0 * s * s);
}

/// Per-step CRPS of the across-dimension sums, averaged over the horizon.
inline double crps_sum(const ForecastEnsemble& ens, const Tensor& truth) {
  if (truth.rows != ens.horizon || truth.cols != ens.dim) {
    throw ShapeError("crps_sum: truth " + truth.shape_string() + " vs ensemble horizon " +
                     std::to_string(ens.horizon) + ", dim " + std::to_string(ens.dim));
  }
  if (ens.samples == 0 || ens.horizon == 0) throw std::invalid_argument("crps_sum: empty ensemble");
  double total = 0.0;
  std::vector<double> sums(ens.samples);
  for (std::size_t h = 0; h < ens.horizon; ++h) {
    double target = 0.0;
    for (std::size_t j = 0; j < ens.dim; ++j) target += truth(h, j);
    for (std::size_t s = 0; s < ens.samples; ++s) {
      double acc = 0.0;
      for (std::size_t j = 0; j < ens.dim; ++j) acc += ens.at(s, h, j);
      sums[s] = acc;
    }
    total += crps_empirical(sums, target);
  }
  return total / static_cast<double>(ens.horizon);
}

/// A point forecast scored as a one-member ensemble.
inline ForecastEnsemble degenerate_ensemble(const Tensor& point) {
  ForecastEnsemble e(1, point.rows, point.cols);
  e.values = point.data;
  return e;
}

struct MetricReport {
  double nrmse = 0.0;
  double crps_sum = 0.0;
  std::size_t n_steps = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> step_crps;  // per-step diagnostics
};

}  // namespace stochdiff

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Rolling-origin evaluation of a trained model on a held-out series, scored
// in the original (denormalized) units, alongside the last-value persistence
// baseline.

#include <cmath>
#include <vector>

#include "stochdiff/data.hpp"
#include "stochdiff/forecasting.hpp"
#include "stochdiff/gmm.hpp"
#include "stochdiff/metrics.hpp"

namespace stochdiff {

struct EvalOptions {
  WindowSpec spec;
  std::size_t samples = 100;
  std::size_t stride = 10;       // spacing of forecast origins
  std::size_t max_windows = 0;   // 0 = all
  std::vector<std::size_t> k_candidates{1, 2, 3};
  NrmseNormalizer normalizer = NrmseNormalizer::mean_abs;
  std::uint64_t seed = 0;
};

struct WindowScore {
  std::size_t offset = 0;
  double nrmse = 0.0;
  double crps_sum = 0.0;
  double persistence_nrmse = 0.0;
  double persistence_crps_sum = 0.0;
};

struct EvalResult {
  /// Pooled over all windows: sqrt(mean squared error) / mean |truth|.
  double nrmse = 0.0;
  double persistence_nrmse = 0.0;
  /// Mean over windows of the per-window CRPS_sum.
  double crps_sum = 0.0;
  double persistence_crps_sum = 0.0;
  std::size_t samples = 0;
  std::vector<WindowScore> windows;
};

/// Forecast origins: every `stride`-th window, thinned evenly to `max_windows`.
inline std::vector<std::size_t> eval_offsets(std::size_t length, const EvalOptions& opt) {
  WindowSpec s = opt.spec;
  s.stride = opt.stride;
  const std::size_t n = window_count(length, s);
  if (n == 0) throw SeriesTooShortError("evaluation series shorter than window + horizon");
  std::vector<std::size_t> idx;
  if (opt.max_windows == 0 || opt.max_windows >= n) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
  } else {
    for (std::size_t i = 0; i < opt.max_windows; ++i) idx.push_back(i * n / opt.max_windows);
  }
  for (auto& i : idx) i *= s.stride;
  return idx;
}

/// Normalizes the observed window, samples, and maps the ensemble back to original units.
inline ForecastEnsemble forecast_original(const Model& m, const NormStats& stats, const Tensor& observed,
                                          std::size_t horizon, std::size_t samples, std::uint64_t seed) {
  const RecurrenceContext ctx = condition_on_history(normalize(observed, stats), m, seed);
  ForecastEnsemble ens = forecast(ctx, horizon, m.config.probabilistic() ? samples : 1, m, seed);
  for (std::size_t i = 0; i < ens.values.size(); ++i) ens.values[i] = stats.invert(ens.values[i], i % ens.dim);
  return ens;
}

inline Tensor point_of(const ForecastEnsemble& ens, const std::vector<std::size_t>& k_candidates, std::uint64_t seed) {
  return ens.samples < 2 ? ens.sample(0) : pointwise_forecast(ens, k_candidates, seed);
}

inline Tensor persistence_forecast(const Tensor& observed, std::size_t horizon) {
  Tensor p(horizon, observed.cols);
  for (std::size_t h = 0; h < horizon; ++h)
    for (std::size_t j = 0; j < observed.cols; ++j) p(h, j) = observed(observed.rows - 1, j);
  return p;
}

/// `series` is in original units; `stats` are the training statistics used by the model.
inline EvalResult evaluate_model(const Model& m, const NormStats& stats, const Tensor& series, const EvalOptions& opt) {
  EvalResult res;
  res.samples = m.config.probabilistic() ? opt.samples : 1;
  double se = 0.0, se_p = 0.0, mag = 0.0, mag_signed = 0.0;
  std::size_t count = 0;
  const auto offsets = eval_offsets(series.rows, opt);
  for (std::size_t w = 0; w < offsets.size(); ++w) {
    const std::size_t off = offsets[w];
    const Tensor observed = rows_of(series, off, opt.spec.window);
    const Tensor truth = rows_of(series, off + opt.spec.window, opt.spec.horizon);
    const std::uint64_t seed = derive_seed(opt.seed, {9, off});
    const ForecastEnsemble ens = forecast_original(m, stats, observed, opt.spec.horizon, opt.samples, seed);
    const Tensor point = point_of(ens, opt.k_candidates, seed);
    const Tensor persist = persistence_forecast(observed, opt.spec.horizon);

    WindowScore s;
    s.offset = off;
    s.nrmse = nrmse(point, truth, opt.normalizer);
    s.persistence_nrmse = nrmse(persist, truth, opt.normalizer);
    s.crps_sum = crps_sum(ens, truth);
    s.persistence_crps_sum = crps_sum(degenerate_ensemble(persist), truth);
    res.windows.push_back(s);
    res.crps_sum += s.crps_sum;
    res.persistence_crps_sum += s.persistence_crps_sum;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      se += (point[i] - truth[i]) * (point[i] - truth[i]);
      se_p += (persist[i] - truth[i]) * (persist[i] - truth[i]);
      mag += std::abs(truth[i]);
      mag_signed += truth[i];
    }
    count += truth.size();
  }
  const double n = static_cast<double>(count);
  const double scale = std::abs(opt.normalizer == NrmseNormalizer::mean_abs ? mag / n : mag_signed / n);
  if (!(scale > 0.0)) throw ZeroNormalizerError("evaluate_model: truth has zero mean magnitude");
  res.nrmse = std::sqrt(se / n) / scale;
  res.persistence_nrmse = std::sqrt(se_p / n) / scale;
  res.crps_sum /= static_cast<double>(offsets.size());
  res.persistence_crps_sum /= static_cast<double>(offsets.size());
  return res;
}

}  // namespace stochdiff

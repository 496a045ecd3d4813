// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Autoregressive forecasting: observe the history through the posterior,
// then roll forward one step at a time, sampling every future point from
// the prior-conditioned reverse diffusion chain and feeding it back into
// the recurrence.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stochdiff/model.hpp"

namespace stochdiff {

/// S x H x d sampled futures, stored sample-major.
struct ForecastEnsemble {
  std::size_t samples = 0;
  std::size_t horizon = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::size_t t0 = 0;  // number of observed steps before the first forecast
  std::uint64_t seed = 0;

  ForecastEnsemble() = default;
  ForecastEnsemble(std::size_t s, std::size_t h, std::size_t d) : samples(s), horizon(h), dim(d), values(s * h * d) {}

  double& at(std::size_t s, std::size_t h, std::size_t j) { return values[(s * horizon + h) * dim + j]; }
  double at(std::size_t s, std::size_t h, std::size_t j) const { return values[(s * horizon + h) * dim + j]; }

  /// Trajectory of one sample as an H x d matrix.
  Tensor sample(std::size_t s) const {
    Tensor t(horizon, dim);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(s * horizon * dim), horizon * dim, t.data.begin());
    return t;
  }
  /// All S sample values at one step, as an S x d matrix.
  Tensor step(std::size_t h) const {
    Tensor t(samples, dim);
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t j = 0; j < dim; ++j) t(s, j) = at(s, h, j);
    return t;
  }
};

struct ForecastOptions {
  /// Inject sqrt(beta~_n) noise at reverse steps n > 1.
  bool reverse_noise = true;
};

/// Rolls the recurrence over every row of `history` using posterior latents.
inline RecurrenceContext condition_on_history(const Tensor& history, const Model& m, std::uint64_t seed) {
  const ModelConfig& cfg = m.config;
  if (history.rows == 0) throw std::invalid_argument("condition_on_history: empty history");
  if (history.cols != cfg.data_dim) throw ShapeError("condition_on_history: history width mismatch");
  const LatentSpec ls = cfg.latent_spec();
  Rng rng(derive_seed(seed, {3}));
  Tape tape(false);
  RecurrenceContext ctx = RecurrenceContext::initial(cfg.hidden);
  for (std::size_t t = 0; t < history.rows; ++t) {
    tape.clear();
    Var x = tape.constant(Tensor::row(history.row_span(t)));
    LstmVars state{tape.constant(ctx.state.h), tape.constant(ctx.state.c)};
    if (!cfg.uses_latent()) {
      state = lstm_step(tape, x, state, m.params, cfg.lstm_spec());
    } else {
      GaussianVars q = posterior_params(tape, state.h, x, m.params, ls);
      Var eps = tape.constant(Tensor::row(standard_normal(rng, cfg.latent)));
      Var z = reparam_project(tape, q, eps, m.params, ls, state.h);
      state = recurrence_update(tape, state, x, z, m.params, ls);
    }
    ctx.state = {state.h.value(), state.c.value()};
    ++ctx.step_index;
  }
  return ctx;
}

/// One future trajectory (H x d) for ensemble member `sample_index`.
/// Every (sample, step) pair draws from its own derived random stream.
inline Tensor forecast_sample(const RecurrenceContext& ctx, std::size_t horizon, const Model& m, std::uint64_t seed,
                              std::size_t sample_index, const ForecastOptions& opts = {}) {
  const ModelConfig& cfg = m.config;
  const LatentSpec ls = cfg.latent_spec();
  const std::size_t d = cfg.data_dim;
  Tensor out(horizon, d);
  LstmState state = ctx.state;
  Tape tape(false);

  for (std::size_t h = 0; h < horizon; ++h) {
    Rng rng(derive_seed(seed, {4, sample_index, h}));
    tape.clear();
    LstmVars sv{tape.constant(state.h), tape.constant(state.c)};
    std::vector<double> x;
    if (!cfg.uses_latent()) {
      Var pred = fcn_apply(tape, sv.h, m.params, cfg.regressor());
      x = pred.value().data;
      sv = lstm_step(tape, pred, sv, m.params, cfg.lstm_spec());
    } else {
      GaussianVars p = step_prior(tape, m, sv.h);
      Var eps_z = tape.constant(Tensor::row(standard_normal(rng, cfg.latent)));
      Var z = reparam_project(tape, p, eps_z, m.params, ls, sv.h);
      if (cfg.uses_diffusion()) {
        const DenoiserConfig dc = cfg.denoiser();
        Var tokens = condition_tokens(tape, z, m.params, dc);
        std::vector<double> xn = standard_normal(rng, d);
        for (std::size_t n = m.schedule.steps(); n >= 1; --n) {
          const std::vector<double> x0 =
              predict_x0_from_tokens(tape, tape.constant(Tensor::row(xn)), n, tokens, m.params, dc).value().data;
          const bool noisy = opts.reverse_noise && n > 1;
          const std::vector<double> noise = noisy ? standard_normal(rng, d) : std::vector<double>{};
          xn = reverse_step(xn, x0, n, m.schedule, noise, noisy);
        }
        x = std::move(xn);
      } else {
        GaussianVars g = gaussian_head(tape, z, m.params, cfg.decoder());
        const std::vector<double> e = standard_normal(rng, d);
        x.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
          x[j] = g.mean.value()[j] + std::sqrt(g.var.value()[j]) * e[j];
        }
      }
      sv = recurrence_update(tape, sv, tape.constant(Tensor::row(x)), z, m.params, ls);
    }
    std::copy(x.begin(), x.end(), out.row_span(h).begin());
    state = {sv.h.value(), sv.c.value()};
  }
  return out;
}

inline ForecastEnsemble forecast(const RecurrenceContext& ctx, std::size_t horizon, std::size_t n_samples,
                                 const Model& m, std::uint64_t seed, const ForecastOptions& opts = {}) {
  if (n_samples < 1) throw std::invalid_argument("forecast: need at least one sample");
  ForecastEnsemble ens(n_samples, horizon, m.config.data_dim);
  ens.t0 = ctx.step_index;
  ens.seed = seed;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Tensor traj = forecast_sample(ctx, horizon, m, seed, s, opts);
    std::copy(traj.data.begin(), traj.data.end(),
              ens.values.begin() + static_cast<std::ptrdiff_t>(s * horizon * ens.dim));
  }
  return ens;
}

/// Empirical quantiles per (step, dim, level).
struct QuantileBands {
  std::vector<double> levels;
  std::size_t horizon = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t h, std::size_t j, std::size_t l) const { return values[(h * dim + j) * levels.size() + l]; }
};

/// Quantile of sorted data by linear interpolation between order statistics.
inline double sorted_quantile(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return std::lerp(sorted[lo], sorted[hi], pos - static_cast<double>(lo));
}

inline QuantileBands quantile_bands(const ForecastEnsemble& ens, const std::vector<double>& levels) {
  if (ens.samples == 0) throw std::invalid_argument("quantile_bands: empty ensemble");
  for (double l : levels) {
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  }
  QuantileBands b{levels, ens.horizon, ens.dim, std::vector<double>(ens.horizon * ens.dim * levels.size())};
  std::vector<double> col(ens.samples);
  for (std::size_t h = 0; h < ens.horizon; ++h) {
    for (std::size_t j = 0; j < ens.dim; ++j) {
      for (std::size_t s = 0; s < ens.samples; ++s) col[s] = ens.at(s, h, j);
      std::sort(col.begin(), col.end());
      for (std::size_t l = 0; l < levels.size(); ++l) {
        b.values[(h * ens.dim + j) * levels.size() + l] = sorted_quantile(col, levels[l]);
      }
    }
  }
  return b;
}

/// Per-(step, dim) median of the ensemble (H x d).
inline Tensor ensemble_median(const ForecastEnsemble& ens) {
  const QuantileBands b = quantile_bands(ens, {0.5});
  return Tensor(ens.horizon, ens.dim, b.values);
}

}  // namespace stochdiff

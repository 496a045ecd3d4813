// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Streaming drop alerts: replay an amplitude channel, forecast ahead from
// the trailing window only, and flag predicted relative drops.

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "stochdiff/data.hpp"
#include "stochdiff/forecasting.hpp"
#include "stochdiff/gmm.hpp"

namespace stochdiff {

inline constexpr double kDefaultDropThreshold = 0.30;

struct DropFlag {
  std::size_t step = 0;
  double drop = 0.0;
  double reference = 0.0;
  friend bool operator==(const DropFlag&, const DropFlag&) = default;
};

/// Flags t when (ref_t - a_t) / ref_t > threshold, where ref_t is the maximum
/// of the (up to) `window` amplitudes before t.
inline std::vector<DropFlag> detect_drops(const std::vector<double>& amplitude, double threshold, std::size_t window) {
  if (window < 1) throw std::invalid_argument("detect_drops: window must be >= 1");
  for (std::size_t t = 0; t < amplitude.size(); ++t) {
    if (!(amplitude[t] > 0.0)) throw std::domain_error("detect_drops: nonpositive amplitude at step " + std::to_string(t));
  }
  std::vector<DropFlag> out;
  for (std::size_t t = 1; t < amplitude.size(); ++t) {
    const std::size_t lo = t > window ? t - window : 0;
    const double ref = *std::max_element(amplitude.begin() + static_cast<std::ptrdiff_t>(lo),
                                         amplitude.begin() + static_cast<std::ptrdiff_t>(t));
    const double drop = (ref - amplitude[t]) / ref;
    if (drop > threshold) out.push_back({t, drop, ref});
  }
  return out;
}

struct DropAlert {
  std::size_t issue_step = 0;   // last observed index when the alert was raised
  std::size_t target_step = 0;  // index the drop is forecast for
  double drop = 0.0;
  double reference = 0.0;
  friend bool operator==(const DropAlert&, const DropAlert&) = default;
};

enum class PointMode { gmm, median };

inline PointMode parse_point_mode(const std::string& s) {
  if (s == "gmm") return PointMode::gmm;
  if (s == "median") return PointMode::median;
  throw std::invalid_argument("unknown point mode: " + s);
}

struct StreamOptions {
  WindowSpec spec;
  double threshold = kDefaultDropThreshold;
  PointMode point_mode = PointMode::gmm;
  std::size_t channel = 0;
  std::uint64_t seed = 0;
};

struct TraceRecord {
  std::size_t issue_step = 0;
  std::vector<double> point;  // predicted amplitudes for issue_step + 1 ...
};

struct CausalityAudit {
  std::vector<std::pair<std::size_t, std::size_t>> reads;  // (issue_step, max index read)
  bool passed() const {
    return std::all_of(reads.begin(), reads.end(), [](const auto& r) { return r.second <= r.first; });
  }
};

struct StreamResult {
  std::vector<DropAlert> alerts;
  std::vector<TraceRecord> trace;
  CausalityAudit audit;
};

/// Receives the observed window (window x d, ending at issue_step) and returns
/// an ensemble `horizon` steps ahead.
using StreamForecaster =
    std::function<ForecastEnsemble(const Tensor& observed, std::size_t issue_step, std::size_t horizon)>;

inline StreamResult simulate_stream(const StreamForecaster& forecaster, const Tensor& series, const StreamOptions& opt) {
  if (!forecaster) throw std::logic_error("simulate_stream: no trained forecaster");
  opt.spec.validate();
  const std::size_t T = series.rows, W = opt.spec.window;
  if (opt.channel >= series.cols) throw std::out_of_range("simulate_stream: channel out of range");
  if (T < W + 1) throw SeriesTooShortError("simulate_stream: series shorter than window + 1");

  StreamResult res;
  std::map<std::size_t, DropAlert> by_target;
  for (std::size_t k = W - 1; k + 1 < T; ++k) {
    // Only rows k-W+1..k are handed out; every read is recorded for the audit.
    std::size_t max_read = 0;
    Tensor observed(W, series.cols);
    for (std::size_t i = 0; i < W; ++i) {
      const std::size_t idx = k + 1 - W + i;
      max_read = std::max(max_read, idx);
      for (std::size_t j = 0; j < series.cols; ++j) observed(i, j) = series(idx, j);
    }
    res.audit.reads.emplace_back(k, max_read);

    const std::size_t h = std::min(opt.spec.horizon, T - 1 - k);
    const ForecastEnsemble ens = forecaster(observed, k, h);
    if (ens.horizon != h || ens.dim != series.cols) throw ShapeError("simulate_stream: forecaster returned wrong shape");

    Tensor point;
    if (opt.point_mode == PointMode::median || ens.samples < 2) {
      point = ensemble_median(ens);
    } else {
      point = pointwise_forecast(ens, {1, 2, 3}, derive_seed(opt.seed, {8, k}));
    }

    std::vector<double> amp(W + h);
    for (std::size_t i = 0; i < W; ++i) amp[i] = observed(i, opt.channel);
    TraceRecord rec{k, {}};
    for (std::size_t i = 0; i < h; ++i) {
      rec.point.push_back(point(i, opt.channel));
      amp[W + i] = std::max(point(i, opt.channel), 1e-12);  // amplitudes stay positive
    }
    res.trace.push_back(std::move(rec));

    for (const DropFlag& f : detect_drops(amp, opt.threshold, W)) {
      if (f.step < W) continue;  // already observed
      const std::size_t target = k + 1 + (f.step - W);
      by_target.try_emplace(target, DropAlert{k, target, f.drop, f.reference});
    }
  }
  for (auto& [t, a] : by_target) res.alerts.push_back(a);
  return res;
}

/// Forecaster that returns the true future; the look-ahead is deliberate and
/// lives outside the audited path.
inline StreamForecaster oracle_forecaster(const Tensor& series) {
  return [series](const Tensor&, std::size_t k, std::size_t h) {
    ForecastEnsemble e(1, h, series.cols);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < series.cols; ++j) e.at(0, i, j) = series(k + 1 + i, j);
    return e;
  };
}

/// Wraps a trained model: normalizes the window, samples, and maps back.
inline StreamForecaster model_forecaster(const Model& model, const NormStats& stats, std::size_t n_samples,
                                         std::uint64_t seed) {
  return [&model, stats, n_samples, seed](const Tensor& observed, std::size_t k, std::size_t h) {
    const std::uint64_t s = derive_seed(seed, {7, k});
    ForecastEnsemble ens = forecast(condition_on_history(normalize(observed, stats), model, s), h, n_samples, model, s);
    for (std::size_t i = 0; i < ens.values.size(); ++i) ens.values[i] = stats.invert(ens.values[i], i % ens.dim);
    return ens;
  };
}

/// One ground-truth drop event: a run of consecutive flagged steps.
struct DropEvent {
  std::size_t first_step = 0;
  std::size_t last_step = 0;
  bool detected = false;
  std::size_t earliest_issue = 0;
  long long lead_time = 0;  // first_step - earliest_issue
};

inline std::vector<DropEvent> score_alerts(const std::vector<DropFlag>& truth, const std::vector<DropAlert>& alerts) {
  std::vector<DropEvent> events;
  for (const auto& f : truth) {
    if (!events.empty() && events.back().last_step + 1 == f.step) {
      events.back().last_step = f.step;
    } else {
      events.push_back({f.step, f.step});
    }
  }
  for (auto& e : events) {
    for (const auto& a : alerts) {
      if (a.target_step < e.first_step || a.target_step > e.last_step) continue;
      if (!e.detected || a.issue_step < e.earliest_issue) e.earliest_issue = a.issue_step;
      e.detected = true;
    }
    if (e.detected) e.lead_time = static_cast<long long>(e.first_step) - static_cast<long long>(e.earliest_issue);
  }
  return events;
}

}  // namespace stochdiff

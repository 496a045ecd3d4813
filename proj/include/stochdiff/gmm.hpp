// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Diagonal-covariance Gaussian mixtures fitted by EM, with BIC model
// selection, used to reduce a forecast ensemble to the centre of its
// heaviest cluster.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stochdiff/forecasting.hpp"
#include "stochdiff/random.hpp"
#include "stochdiff/tensor.hpp"

namespace stochdiff {

inline constexpr double kGmmVarianceFloor = 1e-9;

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GmmOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-7;
};

struct GMMModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  Tensor means;  // k x dim
  Tensor vars;   // k x dim
  std::vector<double> loglik_trace;
  double bic = 0.0;

  bool fitted() const { return k > 0; }
  double log_likelihood() const { return loglik_trace.empty() ? -std::numeric_limits<double>::infinity() : loglik_trace.back(); }
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Rows sorted lexicographically, so seeding does not depend on input order.
inline Tensor sorted_rows(const Tensor& pts) {
  std::vector<std::size_t> idx(pts.rows);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = pts.row_span(a), rb = pts.row_span(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  Tensor out(pts.rows, pts.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(pts.row_span(idx[i]).begin(), pts.row_span(idx[i]).end(), out.row_span(i).begin());
  }
  return out;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

/// k-means++ seeding over (sorted) points.
inline Tensor kmeanspp(const Tensor& pts, std::size_t k, Rng& rng) {
  Tensor centers(k, pts.cols);
  std::uniform_int_distribution<std::size_t> pick(0, pts.rows - 1);
  std::vector<double> d2(pts.rows, std::numeric_limits<double>::infinity());
  std::size_t chosen = pick(rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(pts.row_span(chosen).begin(), pts.row_span(chosen).end(), centers.row_span(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts.row_span(i), centers.row_span(c)));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      chosen = pick(rng);
      continue;
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    chosen = pts.rows - 1;
    for (std::size_t i = 0; i < pts.rows; ++i) {
      if (u < d2[i]) {
        chosen = i;
        break;
      }
      u -= d2[i];
    }
  }
  return centers;
}

inline double log_gauss_diag(std::span<const double> x, std::span<const double> mean, std::span<const double> var) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - mean[j];
    s += -0.5 * (std::log(2.0 * std::numbers::pi * var[j]) + d * d / var[j]);
  }
  return s;
}

}  // namespace detail

/// EM for a fixed number of components.
inline GMMModel fit_gmm_fixed(const Tensor& points, std::size_t k, std::uint64_t seed, const GmmOptions& opt = {}) {
  const std::size_t m = points.rows, d = points.cols;
  if (k == 0) throw std::invalid_argument("fit_gmm: k must be >= 1");
  if (d == 0) throw DegenerateInputError("fit_gmm: zero-dimensional points");
  if (m < k) throw DegenerateInputError("fit_gmm: " + std::to_string(m) + " points for " + std::to_string(k) + " components");

  const Tensor pts = detail::sorted_rows(points);
  Rng rng(derive_seed(seed, {k}));

  GMMModel g;
  g.k = k;
  g.dim = d;
  g.means = detail::kmeanspp(pts, k, rng);
  g.vars = Tensor(k, d);
  g.weights.assign(k, 1.0 / static_cast<double>(k));
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += pts(i, j);
    mean /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) sq += (pts(i, j) - mean) * (pts(i, j) - mean);
    const double v = std::max(sq / static_cast<double>(m), kGmmVarianceFloor);
    for (std::size_t c = 0; c < k; ++c) g.vars(c, j) = v;
  }

  Tensor resp(m, k);
  std::vector<double> logp(k);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    // E-step.
    double ll = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        logp[c] = std::log(std::max(g.weights[c], 1e-300)) +
                  detail::log_gauss_diag(pts.row_span(i), g.means.row_span(c), g.vars.row_span(c));
      }
      const double lse = detail::log_sum_exp(logp);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(logp[c] - lse);
    }
    // The variance floor is the only thing that can break EM monotonicity; allow rounding slack.
    assert(g.loglik_trace.empty() || ll >= g.loglik_trace.back() - 1e-9 * std::max(1.0, std::abs(ll)));
    const bool converged =
        !g.loglik_trace.empty() && ll - g.loglik_trace.back() <= opt.tolerance * std::max(1.0, std::abs(ll));
    g.loglik_trace.push_back(ll);
    if (converged) break;

    // M-step.
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < m; ++i) nk += resp(i, c);
      g.weights[c] = nk / static_cast<double>(m);
      if (nk <= 1e-12) continue;  // empty component keeps its previous shape
      for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += resp(i, c) * pts(i, j);
        mu /= nk;
        double v = 0.0;
        for (std::size_t i = 0; i < m; ++i) v += resp(i, c) * (pts(i, j) - mu) * (pts(i, j) - mu);
        g.means(c, j) = mu;
        g.vars(c, j) = std::max(v / nk, kGmmVarianceFloor);
      }
    }
  }
  const double params = static_cast<double>(k - 1 + 2 * k * d);
  g.bic = -2.0 * g.log_likelihood() + params * std::log(static_cast<double>(m));
  return g;
}

/// Fits every candidate component count and keeps the lowest BIC (smallest k on ties).
inline GMMModel fit_gmm(const Tensor& points, std::vector<std::size_t> k_candidates, std::uint64_t seed,
                        const GmmOptions& opt = {}) {
  if (k_candidates.empty()) throw std::invalid_argument("fit_gmm: no candidate component counts");
  std::sort(k_candidates.begin(), k_candidates.end());
  if (points.rows < k_candidates.back()) {
    throw DegenerateInputError("fit_gmm: " + std::to_string(points.rows) + " points for up to " +
                               std::to_string(k_candidates.back()) + " components");
  }
  GMMModel best;
  for (std::size_t k : k_candidates) {
    GMMModel g = fit_gmm_fixed(points, k, seed, opt);
    if (!best.fitted() || g.bic < best.bic) best = std::move(g);
  }
  return best;
}

/// Mean of the heaviest component; ties go to the lowest index.
inline std::vector<double> select_point(const GMMModel& g) {
  if (!g.fitted()) throw std::logic_error("select_point: model is not fitted");
  std::size_t best = 0;
  for (std::size_t c = 1; c < g.k; ++c) {
    if (g.weights[c] > g.weights[best]) best = c;
  }
  const auto row = g.means.row_span(best);
  return {row.begin(), row.end()};
}

/// Per-step GMM point estimate over the ensemble members (H x d).
inline Tensor pointwise_forecast(const ForecastEnsemble& ens, std::vector<std::size_t> k_candidates = {1, 2, 3},
                                 std::uint64_t seed = 0) {
  if (ens.samples < 2) throw std::invalid_argument("pointwise_forecast: need at least two samples");
  std::erase_if(k_candidates, [&](std::size_t k) { return k > ens.samples; });
  Tensor out(ens.horizon, ens.dim);
  for (std::size_t h = 0; h < ens.horizon; ++h) {
    const std::vector<double> p = select_point(fit_gmm(ens.step(h), k_candidates, derive_seed(seed, {h})));
    std::copy(p.begin(), p.end(), out.row_span(h).begin());
  }
  return out;
}

}  // namespace stochdiff

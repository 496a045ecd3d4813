// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "stochdiff/stochdiff.hpp"

using namespace stochdiff;

namespace {

Tensor two_clusters(std::size_t m, double frac, std::uint64_t seed, double a = -2.0, double b = 3.0, double sd = 0.3) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  Tensor pts(m, 2);
  const auto na = static_cast<std::size_t>(frac * static_cast<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const double c = i < na ? a : b;
    pts(i, 0) = c + sd * nd(rng);
    pts(i, 1) = -c + sd * nd(rng);
  }
  return pts;
}

}  // namespace

TEST(Gmm, LogLikelihoodMonotoneOnSeededRuns) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor pts = two_clusters(60, 0.5 + 0.02 * static_cast<double>(seed), seed);
    for (std::size_t k : {1u, 2u, 3u}) {
      const auto g = fit_gmm_fixed(pts, k, seed);
      for (std::size_t i = 1; i < g.loglik_trace.size(); ++i) {
        EXPECT_GE(g.loglik_trace[i], g.loglik_trace[i - 1] - 1e-9 * std::abs(g.loglik_trace[i - 1]));
      }
    }
  }
}

TEST(Gmm, RecoversSeventyThirtyMixture) {
  const auto g = fit_gmm(two_clusters(200, 0.7, 42), {1, 2, 3}, 0);
  ASSERT_EQ(g.k, 2u);
  const auto p = select_point(g);
  EXPECT_NEAR(p[0], -2.0, 0.2);
  EXPECT_NEAR(p[1], 2.0, 0.2);
  const double wmax = *std::max_element(g.weights.begin(), g.weights.end());
  EXPECT_NEAR(wmax, 0.7, 0.02);
}

TEST(Gmm, IdenticalPointsPickOneComponent) {
  Tensor pts(10, 2, 1.5);
  const auto g = fit_gmm(pts, {1, 2, 3}, 0);
  EXPECT_EQ(g.k, 1u);
  EXPECT_EQ(select_point(g), (std::vector<double>{1.5, 1.5}));
  for (double v : g.vars.data) EXPECT_GE(v, 1e-9);
}

TEST(Gmm, InputOrderDoesNotMatter) {
  Tensor pts = two_clusters(50, 0.6, 3);
  Tensor rev(pts.rows, pts.cols);
  for (std::size_t i = 0; i < pts.rows; ++i)
    for (std::size_t j = 0; j < pts.cols; ++j) rev(i, j) = pts(pts.rows - 1 - i, j);
  EXPECT_EQ(select_point(fit_gmm(pts, {1, 2, 3}, 8)), select_point(fit_gmm(rev, {1, 2, 3}, 8)));
}

TEST(Gmm, SelectPointTieBreaksToLowestIndex) {
  GMMModel g;
  g.k = 3;
  g.dim = 1;
  g.weights = {0.25, 0.375, 0.375};
  g.means = Tensor(3, 1, {0.0, 1.0, 2.0});
  g.vars = Tensor(3, 1, 1.0);
  EXPECT_EQ(select_point(g)[0], 1.0);
  EXPECT_EQ(select_point(g)[0], 1.0);
  EXPECT_THROW(select_point(GMMModel{}), std::logic_error);
}

TEST(Gmm, DegenerateInputs) {
  EXPECT_THROW(fit_gmm(Tensor(2, 1, 0.0), {1, 2, 3}, 0), DegenerateInputError);
  EXPECT_THROW(fit_gmm(Tensor(4, 1, 0.0), {}, 0), std::invalid_argument);
}

TEST(PointEstimate, FollowsHeaviestModeNotMean) {
  // 70% of members near +1, 30% near -5: the mean (~-0.8) sits between modes.
  ForecastEnsemble e(100, 2, 1);
  Rng rng(1);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (std::size_t s = 0; s < 100; ++s)
    for (std::size_t h = 0; h < 2; ++h) e.at(s, h, 0) = (s % 10 < 7 ? 1.0 : -5.0) + nd(rng);
  const Tensor p = pointwise_forecast(e);
  EXPECT_NEAR(p(0, 0), 1.0, 0.05);
  EXPECT_NEAR(p(1, 0), 1.0, 0.05);
  EXPECT_EQ(p, pointwise_forecast(e));
}

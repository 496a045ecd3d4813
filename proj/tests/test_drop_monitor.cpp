// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#include <gtest/gtest.h>

#include <cmath>

#include "stochdiff/stochdiff.hpp"

using namespace stochdiff;

namespace {

Tensor drop_series(std::vector<std::size_t> at, std::size_t ramp = 1, double noise = 0.0, std::size_t length = 200) {
  SynthParams p;
  p.kind = SynthKind::drop_signal;
  p.length = length;
  p.drop_at = std::move(at);
  p.ramp = ramp;
  p.recovery = 15;
  p.drop_noise = noise;
  return synth_generate(p, 3).values;
}

std::vector<double> column(const Tensor& t) {
  std::vector<double> v(t.rows);
  for (std::size_t i = 0; i < t.rows; ++i) v[i] = t(i, 0);
  return v;
}

}  // namespace

TEST(DetectDrops, Examples) {
  EXPECT_TRUE(detect_drops({2.0, 2.0, 2.0, 2.0}, 0.3, 5).empty());
  const auto f = detect_drops({1.0, 0.6}, 0.3, 5);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].step, 1u);
  EXPECT_NEAR(f[0].drop, 0.4, 1e-15);
  EXPECT_EQ(f[0].reference, 1.0);
  // Exactly 30% is not a drop (strict comparison); 0.75 keeps the arithmetic exact.
  EXPECT_TRUE(detect_drops({1.0, 0.75}, 0.25, 5).empty());
  EXPECT_THROW(detect_drops({1.0, 0.0}, 0.3, 5), std::domain_error);
}

TEST(DetectDrops, TrailingMaximumWindow) {
  // Reference is the max of the previous `window` values only.
  const std::vector<double> a{2.0, 1.0, 1.0, 1.0, 0.65};
  // Threshold 0.6 so only the last step can qualify (2.0 -> 0.65 is a 67.5% drop).
  const auto in_reach = detect_drops(a, 0.6, 4);
  ASSERT_EQ(in_reach.size(), 1u);
  EXPECT_EQ(in_reach[0].step, 4u);
  EXPECT_EQ(in_reach[0].reference, 2.0);
  EXPECT_TRUE(detect_drops(a, 0.6, 3).empty());  // ref 1.0, 35% drop
}

TEST(DetectDrops, ScaleInvariant) {
  const auto a = column(drop_series({60, 120}, 3, 0.02));
  auto b = a;
  for (double& v : b) v *= 37.5;
  const auto fa = detect_drops(a, 0.3, 20), fb = detect_drops(b, 0.3, 20);
  ASSERT_EQ(fa.size(), fb.size());
  ASSERT_FALSE(fa.empty());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    EXPECT_EQ(fa[i].step, fb[i].step);
    EXPECT_NEAR(fa[i].drop, fb[i].drop, 1e-12);
  }
}

TEST(Stream, OracleReproducesGroundTruth) {
  for (std::size_t ramp : {1u, 4u}) {
    const Tensor s = drop_series({60, 130}, ramp, 0.01);
    StreamOptions opt;
    opt.spec = {20, 5, 1};
    opt.point_mode = PointMode::median;
    const auto res = simulate_stream(oracle_forecaster(s), s, opt);
    std::vector<DropFlag> truth;
    for (const auto& f : detect_drops(column(s), opt.threshold, opt.spec.window)) {
      if (f.step >= opt.spec.window) truth.push_back(f);
    }
    ASSERT_FALSE(truth.empty());
    ASSERT_EQ(res.alerts.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      EXPECT_EQ(res.alerts[i].target_step, truth[i].step);
      EXPECT_EQ(res.alerts[i].drop, truth[i].drop);
      EXPECT_EQ(res.alerts[i].issue_step + opt.spec.horizon, truth[i].step);  // earliest possible issue
      EXPECT_GT(res.alerts[i].target_step, res.alerts[i].issue_step);
      EXPECT_GT(res.alerts[i].drop, opt.threshold);
    }
    EXPECT_TRUE(res.audit.passed());
    const auto events = score_alerts(truth, res.alerts);
    for (const auto& e : events) {
      EXPECT_TRUE(e.detected);
      EXPECT_EQ(e.lead_time, static_cast<long long>(opt.spec.horizon));
    }
  }
}

TEST(Stream, FlatSeriesAndTightForecastsGiveNoAlerts) {
  const Tensor s = drop_series({}, 1, 0.01);
  StreamOptions opt;
  opt.spec = {10, 4, 1};
  // A forecaster that wobbles within +-5% of the last observation.
  const StreamForecaster near_last = [](const Tensor& obs, std::size_t k, std::size_t h) {
    ForecastEnsemble e(5, h, 1);
    for (std::size_t m = 0; m < 5; ++m)
      for (std::size_t i = 0; i < h; ++i)
        e.at(m, i, 0) = obs(obs.rows - 1, 0) * (1.0 + 0.04 * std::sin(static_cast<double>(k + m + i)));
    return e;
  };
  const auto res = simulate_stream(near_last, s, opt);
  EXPECT_TRUE(res.alerts.empty());
  EXPECT_EQ(res.trace.size(), s.rows - opt.spec.window);
}

TEST(Stream, AuditCatchesOnlyPastReads) {
  const Tensor s = drop_series({50});
  StreamOptions opt;
  opt.spec = {15, 3, 1};
  opt.point_mode = PointMode::median;
  const auto res = simulate_stream(oracle_forecaster(s), s, opt);
  ASSERT_FALSE(res.audit.reads.empty());
  for (const auto& [issue, read] : res.audit.reads) EXPECT_EQ(read, issue);
  CausalityAudit bad{{{10, 11}}};
  EXPECT_FALSE(bad.passed());
}

TEST(Stream, DeduplicatesByTargetKeepingEarliestIssue) {
  const Tensor s = drop_series({40});
  StreamOptions opt;
  opt.spec = {10, 6, 1};
  opt.point_mode = PointMode::median;
  const auto res = simulate_stream(oracle_forecaster(s), s, opt);
  for (std::size_t i = 1; i < res.alerts.size(); ++i) EXPECT_LT(res.alerts[i - 1].target_step, res.alerts[i].target_step);
}

TEST(Stream, Errors) {
  const Tensor s = drop_series({40});
  StreamOptions opt;
  opt.spec = {10, 3, 1};
  EXPECT_THROW(simulate_stream(StreamForecaster{}, s, opt), std::logic_error);
  opt.spec = {500, 3, 1};
  EXPECT_THROW(simulate_stream(oracle_forecaster(s), s, opt), SeriesTooShortError);
}

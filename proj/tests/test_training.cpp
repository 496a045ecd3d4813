// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "reference.hpp"
#include "stochdiff/stochdiff.hpp"

using namespace stochdiff;

namespace {

ModelConfig tiny(Variant v, std::size_t d = 2, std::size_t w = 8) {
  ModelConfig c;
  c.variant = v;
  c.data_dim = d;
  c.hidden = w;
  c.latent = w;
  c.encoder_hidden = w;
  c.embed = 4;
  c.heads = 1;
  c.head_hidden = 4;
  return c;
}

Tensor window(std::size_t T, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  Tensor w(T, d);
  for (auto& v : w.data) v = nd(rng);
  return w;
}

constexpr Variant kAll[] = {Variant::lstm, Variant::vlstm_standard_prior, Variant::vlstm_diffusion, Variant::stochdiff};

std::vector<Tensor> sine_windows(std::size_t count, std::size_t T) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor w(T, 1);
    for (std::size_t t = 0; t < T; ++t) w(t, 0) = std::sin(0.6 * static_cast<double>(t + i));
    out.push_back(w);
  }
  return out;
}

}  // namespace

TEST(Variants, ParseAndPredicates) {
  EXPECT_EQ(parse_variant("stochdiff"), Variant::stochdiff);
  EXPECT_EQ(parse_variant("vlstm_standard_prior"), Variant::vlstm_standard_prior);
  EXPECT_THROW(parse_variant("transformer"), UnknownVariantError);
  EXPECT_FALSE(tiny(Variant::lstm).probabilistic());
  EXPECT_FALSE(tiny(Variant::vlstm_diffusion).learned_prior());
  EXPECT_TRUE(tiny(Variant::stochdiff).uses_diffusion());
}

TEST(Variants, ParameterLayout) {
  const auto lstm = init_parameters(tiny(Variant::lstm), 1);
  EXPECT_FALSE(lstm.contains("post.enc.l0.W"));
  EXPECT_TRUE(lstm.contains("out.l0.W"));
  const auto std_prior = init_parameters(tiny(Variant::vlstm_standard_prior), 1);
  EXPECT_FALSE(std_prior.contains("prior.enc.l0.W"));
  EXPECT_TRUE(std_prior.contains("dec.mean.l0.W"));
  const auto sd = init_parameters(tiny(Variant::stochdiff), 1);
  EXPECT_TRUE(sd.contains("prior.enc.l0.W"));
  EXPECT_TRUE(sd.contains("den.cross.Wq"));
  EXPECT_EQ(sd, init_parameters(tiny(Variant::stochdiff), 1));
  EXPECT_FALSE(sd == init_parameters(tiny(Variant::stochdiff), 2));
}

TEST(DualLoss, MatchesReferenceForEveryVariant) {
  const auto sched = ScheduleConfig{};
  for (Variant v : kAll) {
    const Model m = build_model(tiny(v), sched, 7);
    const Tensor w = window(3, 2, 99);
    Rng r1(123), r2(123);
    const LossValues got = dual_loss(w, m, r1);
    const ref::Loss want = ref::window_loss(m, w, r2);
    EXPECT_NEAR(got.kl, want.kl, 1e-10) << to_string(v);
    EXPECT_NEAR(got.recon, want.recon, 1e-10) << to_string(v);
    EXPECT_EQ(got.total, got.kl + got.recon);
    EXPECT_GE(got.kl, 0.0);
    if (v == Variant::lstm) { EXPECT_EQ(got.kl, 0.0); }
    EXPECT_EQ(r1(), r2()) << "random streams diverged for " << to_string(v);
  }
}

TEST(DualLoss, RejectsWrongWidth) {
  const Model m = build_model(tiny(Variant::stochdiff), {}, 1);
  Rng rng(0);
  EXPECT_THROW(dual_loss(Tensor(3, 5), m, rng), ShapeError);
}

TEST(DualLoss, GradcheckEveryVariant) {
  ScheduleConfig sched;
  sched.steps = 10;
  for (Variant v : kAll) {
    Model m = build_model(tiny(v), sched, 11);
    const Tensor w = window(3, 2, 5);
    // gradient_check perturbs m.params in place, which is what window_loss reads.
    const auto f = [&](Tape& t, const ParameterSet&) {
      Rng rng(77);
      return window_loss(t, m, w, rng).total;
    };
    const auto rep = gradient_check(f, m.params);
    EXPECT_TRUE(rep.passed) << to_string(v) << ": " << rep.max_rel_error << " at " << rep.worst_param << "["
                            << rep.worst_index << "] " << rep.worst_analytic << " vs " << rep.worst_numeric;
  }
}

TEST(Plateau, HalvesAfterPatienceStaleEpochs) {
  PlateauScheduler s(1e-3, 3, 0.5);
  EXPECT_FALSE(s.observe(10.0));
  EXPECT_FALSE(s.observe(9.0));
  EXPECT_FALSE(s.observe(9.5));
  EXPECT_FALSE(s.observe(9.0));
  EXPECT_TRUE(s.observe(9.2));
  EXPECT_DOUBLE_EQ(s.lr(), 5e-4);
  EXPECT_FALSE(s.observe(9.1));
  EXPECT_FALSE(s.observe(8.0));
  EXPECT_DOUBLE_EQ(s.lr(), 5e-4);
}

TEST(Plateau, TinyImprovementsCountAsStale) {
  PlateauScheduler s(1.0, 2, 0.5, 1e-6);
  s.observe(100.0);
  s.observe(100.0 - 1e-5);  // relative 1e-7 < 1e-6
  EXPECT_TRUE(s.observe(100.0 - 2e-5));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet ps;
  ps.add("w", Tensor(1, 2, {1.0, -1.0}));
  ps.grad("w") = Tensor(1, 2, {0.5, -3.0});
  Adam adam(ps);
  const double norm = adam.step(ps, 0.1, 100.0);
  EXPECT_NEAR(norm, std::sqrt(0.25 + 9.0), 1e-15);
  EXPECT_NEAR(ps.value("w")[0], 0.9, 1e-7);
  EXPECT_NEAR(ps.value("w")[1], -0.9, 1e-7);
}

TEST(Adam, ClipsGlobalNorm) {
  ParameterSet a, b;
  a.add("w", Tensor(1, 1, 0.0));
  b.add("w", Tensor(1, 1, 0.0));
  a.grad("w")(0, 0) = 100.0;
  b.grad("w")(0, 0) = 5.0;
  Adam(a).step(a, 0.1, 5.0);
  Adam(b).step(b, 0.1, 5.0);
  EXPECT_EQ(a.value("w")(0, 0), b.value("w")(0, 0));
}

TEST(Train, LossDropsAndIsReproducible) {
  TrainConfig cfg{tiny(Variant::stochdiff, 1, 8), {}, {}};
  cfg.schedule.steps = 20;
  cfg.optim.epochs = 25;
  cfg.optim.lr = 5e-3;
  cfg.optim.batch_size = 4;
  cfg.optim.seed = 3;
  const auto windows = sine_windows(8, 12);
  auto [m1, r1] = train(windows, cfg);
  auto [m2, r2] = train(windows, cfg);
  ASSERT_EQ(r1.epochs.size(), 25u);
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    EXPECT_EQ(r1.epochs[e].total, r2.epochs[e].total);
    EXPECT_NEAR(r1.epochs[e].total, r1.epochs[e].kl + r1.epochs[e].recon, 1e-12 * std::abs(r1.epochs[e].total));
    if (e > 0) { EXPECT_LE(r1.epochs[e].lr, r1.epochs[e - 1].lr); }
  }
  EXPECT_EQ(m1.params, m2.params);
  EXPECT_LT(r1.epochs.back().total, r1.epochs.front().total);
}

TEST(Train, LearningRateOnlyDropsOnPlateau) {
  TrainConfig cfg{tiny(Variant::lstm, 1, 4), {}, {}};
  cfg.optim.epochs = 30;
  cfg.optim.patience = 2;
  cfg.optim.lr = 0.5;  // large enough to bounce around
  const auto rep = train(sine_windows(4, 8), cfg).second;
  PlateauScheduler replay(cfg.optim.lr, cfg.optim.patience, cfg.optim.lr_decay, cfg.optim.min_improvement);
  for (const auto& e : rep.epochs) {
    EXPECT_EQ(e.lr, replay.lr());
    replay.observe(e.total);
  }
}

TEST(Train, DivergenceIsReported) {
  TrainConfig cfg{tiny(Variant::stochdiff, 1, 4), {}, {}};
  cfg.optim.epochs = 1;
  Model m = build_variant(cfg);
  m.params[0].value[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(m, sine_windows(2, 5), cfg.optim), TrainingDivergedError);
  EXPECT_THROW(train(m, {}, cfg.optim), std::invalid_argument);
}

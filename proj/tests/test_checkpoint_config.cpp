// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#include <gtest/gtest.h>

#include <sstream>

#include "stochdiff/config.hpp"
#include "stochdiff/stochdiff.hpp"

using namespace stochdiff;

namespace {

ModelConfig widths(std::size_t w) {
  ModelConfig c;
  c.data_dim = 2;
  c.hidden = c.latent = c.encoder_hidden = w;
  c.embed = 4;
  c.head_hidden = 4;
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto ps = init_parameters(widths(8), 3);
  std::stringstream buf;
  write_checkpoint(buf, ps, R"({"k":1})");
  const auto ck = read_checkpoint(buf);
  EXPECT_EQ(ck.params, ps);
  EXPECT_EQ(ck.metadata, R"({"k":1})");
}

TEST(Checkpoint, CorruptAndVersionErrors) {
  const auto ps = init_parameters(widths(4), 3);
  std::stringstream buf;
  write_checkpoint(buf, ps);
  const std::string full = buf.str();
  for (std::size_t cut : {std::size_t{2}, std::size_t{9}, full.size() / 2, full.size() - 1}) {
    std::stringstream t(full.substr(0, cut));
    EXPECT_THROW(read_checkpoint(t), CorruptCheckpointError) << cut;
  }
  std::string v2 = full;
  v2[4] = 2;
  std::stringstream t(v2);
  EXPECT_THROW(read_checkpoint(t), CheckpointVersionError);
  std::stringstream junk("hello world");
  EXPECT_THROW(read_checkpoint(junk), CorruptCheckpointError);
}

TEST(Checkpoint, ShapeMismatchOnWidthChange) {
  ParameterSet narrow = init_parameters(widths(8), 1);
  ParameterSet wide = init_parameters(widths(16), 1);
  EXPECT_THROW(assign_parameters(wide, narrow), ShapeMismatchError);
  ParameterSet same = init_parameters(widths(8), 2);
  assign_parameters(same, narrow);
  EXPECT_EQ(same, narrow);
}

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_run_config(Json::parse(R"({"variant":"vlstm_diffusion","model":{"hidden":16},
      "training":{"epochs":3},"window":{"window":50,"horizon":10}})"));
  EXPECT_EQ(c.model.variant, Variant::vlstm_diffusion);
  EXPECT_EQ(c.model.hidden, 16u);
  EXPECT_EQ(c.model.latent, 128u);
  EXPECT_EQ(c.optim.epochs, 3u);
  EXPECT_EQ(c.schedule.steps, 100u);
  EXPECT_EQ(c.simulate.threshold, 0.30);
  // The resolved document parses back to the same configuration.
  const auto again = parse_run_config(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
}

TEST(Config, UnknownKeysAreNamed) {
  try {
    parse_run_config(Json::parse(R"({"training":{"epocs":3}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("training.epocs"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_run_config(Json::parse(R"({"colour":1})")), ConfigError);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"data":{"synth":{"kind":"walk"}}})")), ConfigError);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"variant":"gru"})")), ConfigError);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"model":{"hidden":"wide"}})")), ConfigError);
  EXPECT_THROW(parse_run_config(Json::parse(R"({"schedule":{"beta_max":1.5}})")), ConfigError);
}

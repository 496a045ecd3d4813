// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Glue from a RunConfig to data, trained models and self-describing
// checkpoints. Shared by the command-line tool and the acceptance suite.

#include <cstdlib>
#include <filesystem>
#include <string>

#include "stochdiff/checkpoint.hpp"
#include "stochdiff/config.hpp"
#include "stochdiff/evaluation.hpp"

namespace stochdiff {

inline constexpr const char* kDataDirEnv = "STOCHDIFF_DATA_DIR";

/// Relative paths resolve against $STOCHDIFF_DATA_DIR when it is set.
inline std::filesystem::path resolve_data_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') return std::filesystem::path(dir) / p;
  }
  return p;
}

inline TimeSeries load_dataset(const DataConfig& d, std::uint64_t seed) {
  if (d.source == "synth") return synth_generate(d.synth, seed);
  if (d.path.empty()) throw ConfigError("data.path: required when data.source is csv");
  return load_csv(resolve_data_path(d.path), {d.impute});
}

struct PreparedData {
  TimeSeries raw;
  TimeSeries train;  // original units
  TimeSeries test;   // original units
  NormStats stats;   // identity when normalization is off
  Tensor train_norm;
};

inline NormStats identity_stats(std::size_t d) {
  return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), std::vector<bool>(d, true)};
}

inline PreparedData prepare_data(const RunConfig& c) {
  PreparedData p;
  p.raw = load_dataset(c.data, c.seed);
  std::tie(p.train, p.test) = temporal_split(p.raw, c.data.train_fraction);
  p.stats = c.data.normalize ? fit_zscore(p.train.values) : identity_stats(p.raw.dim());
  p.train_norm = normalize(p.train.values, p.stats);
  return p;
}

/// (window + horizon)-long training segments, thinned evenly to `max_windows`.
inline std::vector<Tensor> training_set(const Tensor& train_norm, const WindowSpec& spec, std::size_t max_windows) {
  std::vector<Tensor> all = training_segments(train_norm, spec);
  if (max_windows == 0 || max_windows >= all.size()) return all;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < max_windows; ++i) out.push_back(all[i * all.size() / max_windows]);
  return out;
}

// ---- self-describing checkpoints -------------------------------------------

inline Json model_metadata(const Model& m, const NormStats& stats) {
  const ModelConfig& c = m.config;
  std::vector<int> constant;
  for (bool b : stats.constant) constant.push_back(b ? 1 : 0);
  return Json{{"variant", std::string(to_string(c.variant))},
              {"data_dim", c.data_dim},
              {"hidden", c.hidden},
              {"latent", c.latent},
              {"encoder_hidden", c.encoder_hidden},
              {"embed", c.embed},
              {"heads", c.heads},
              {"head_hidden", c.head_hidden},
              {"schedule",
               {{"steps", m.schedule_config.steps},
                {"beta_min", m.schedule_config.beta_min},
                {"beta_max", m.schedule_config.beta_max}}},
              {"norm", {{"mean", stats.mean}, {"stddev", stats.stddev}, {"constant", constant}}}};
}

struct LoadedModel {
  Model model;
  NormStats stats;
};

inline void save_model(const Model& m, const NormStats& stats, const std::filesystem::path& path) {
  checkpoint_save(m.params, path, model_metadata(m, stats).dump());
}

inline LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint ck = checkpoint_load(path);
  Json meta;
  try {
    meta = Json::parse(ck.metadata);
    ModelConfig c;
    c.variant = parse_variant(meta.at("variant").get<std::string>());
    c.data_dim = meta.at("data_dim").get<std::size_t>();
    c.hidden = meta.at("hidden").get<std::size_t>();
    c.latent = meta.at("latent").get<std::size_t>();
    c.encoder_hidden = meta.at("encoder_hidden").get<std::size_t>();
    c.embed = meta.at("embed").get<std::size_t>();
    c.heads = meta.at("heads").get<std::size_t>();
    c.head_hidden = meta.at("head_hidden").get<std::size_t>();
    ScheduleConfig s;
    s.steps = meta.at("schedule").at("steps").get<std::size_t>();
    s.beta_min = meta.at("schedule").at("beta_min").get<double>();
    s.beta_max = meta.at("schedule").at("beta_max").get<double>();
    LoadedModel out{build_model(c, s, 0), {}};
    assign_parameters(out.model.params, ck.params);
    out.stats.mean = meta.at("norm").at("mean").get<std::vector<double>>();
    out.stats.stddev = meta.at("norm").at("stddev").get<std::vector<double>>();
    for (int b : meta.at("norm").at("constant").get<std::vector<int>>()) out.stats.constant.push_back(b != 0);
    if (out.stats.mean.size() != c.data_dim || out.stats.stddev.size() != c.data_dim ||
        out.stats.constant.size() != c.data_dim) {
      throw CorruptCheckpointError("normalization statistics do not match data_dim");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(path.string() + ": bad metadata: " + e.what());
  }
}

/// The model a RunConfig describes for data of width `d`.
inline ModelConfig model_config_for(const RunConfig& c, std::size_t d, Variant v) {
  ModelConfig m = c.model;
  m.variant = v;
  m.data_dim = d;
  return m;
}

/// Rejects a checkpoint whose architecture disagrees with the run configuration.
inline void require_compatible(const ModelConfig& loaded, const ModelConfig& expected) {
  if (!(loaded == expected)) {
    throw ShapeMismatchError("checkpoint architecture (" + std::string(to_string(loaded.variant)) + ", d=" +
                             std::to_string(loaded.data_dim) + ", hidden=" + std::to_string(loaded.hidden) +
                             ") does not match the config (" + std::string(to_string(expected.variant)) + ", d=" +
                             std::to_string(expected.data_dim) + ", hidden=" + std::to_string(expected.hidden) + ")");
  }
}

inline EvalOptions eval_options(const RunConfig& c, std::uint64_t seed) {
  EvalOptions o;
  o.spec = c.window;
  o.samples = c.forecast.samples;
  o.stride = c.forecast.eval_stride;
  o.max_windows = c.forecast.max_eval_windows;
  o.k_candidates = c.forecast.k_candidates;
  o.normalizer = c.nrmse_normalizer;
  o.seed = seed;
  return o;
}

}  // namespace stochdiff

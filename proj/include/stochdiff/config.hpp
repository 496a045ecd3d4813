// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Run configuration: one JSON document covering every module. Unknown keys
// are rejected with their full path; the resolved document (defaults filled
// in) is written next to every run's outputs.

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "stochdiff/data.hpp"
#include "stochdiff/drop_monitor.hpp"
#include "stochdiff/metrics.hpp"
#include "stochdiff/training.hpp"

namespace stochdiff {

using Json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string source = "synth";  // "synth" or "csv"
  std::string path;              // csv file, relative paths resolve against the data directory
  SynthParams synth;
  std::string split_mode = "temporal";
  double train_fraction = 0.7;
  bool normalize = true;
  Impute impute = Impute::none;
};

struct ForecastConfig {
  std::size_t samples = 100;
  std::vector<double> levels{0.05, 0.5, 0.95};
  PointMode point_mode = PointMode::gmm;
  std::vector<std::size_t> k_candidates{1, 2, 3};
  std::size_t eval_stride = 10;  // spacing of evaluation windows on the test side
  std::size_t max_eval_windows = 0;  // 0 = all
};

struct SimulateConfig {
  double threshold = kDefaultDropThreshold;
  PointMode point_mode = PointMode::gmm;
  std::size_t samples = 30;
  std::size_t channel = 0;
  bool oracle = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;  // data_dim is filled in from the data
  ScheduleConfig schedule;
  OptimConfig optim;
  WindowSpec window;
  std::size_t max_train_windows = 0;  // 0 = all
  DataConfig data;
  ForecastConfig forecast;
  NrmseNormalizer nrmse_normalizer = NrmseNormalizer::mean_abs;
  std::vector<Variant> ablate_variants{Variant::lstm, Variant::vlstm_standard_prior, Variant::vlstm_diffusion,
                                       Variant::stochdiff};
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2};
  SimulateConfig simulate;

  TrainConfig train_config() const {
    TrainConfig t{model, schedule, optim};
    t.optim.seed = seed;
    return t;
  }
};

namespace detail {

/// Reads keys out of one JSON object and remembers which were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(child(key) + ": " + e.what());
    }
  }

  /// Enum-like string field.
  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      throw ConfigError(child(key) + ": " + e.what());
    }
  }

  ObjectReader sub(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : empty, child(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key: " + child(k.c_str()));
    }
  }

  std::string child(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string impute_name(Impute i) { return i == Impute::forward_fill ? "forward_fill" : "none"; }
inline Impute parse_impute(const std::string& s) {
  if (s == "none") return Impute::none;
  if (s == "forward_fill") return Impute::forward_fill;
  throw std::invalid_argument("unknown impute mode: " + s);
}
inline std::string point_mode_name(PointMode m) { return m == PointMode::gmm ? "gmm" : "median"; }
inline std::string normalizer_name(NrmseNormalizer n) { return n == NrmseNormalizer::mean_abs ? "mean_abs" : "literal"; }
inline NrmseNormalizer parse_normalizer(const std::string& s) {
  if (s == "mean_abs") return NrmseNormalizer::mean_abs;
  if (s == "literal") return NrmseNormalizer::literal;
  throw std::invalid_argument("unknown normalizer: " + s);
}

}  // namespace detail

inline RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  detail::ObjectReader root(j, "");
  root.get("seed", c.seed);
  root.get_enum("variant", c.model.variant, [](const std::string& s) { return parse_variant(s); });

  {
    auto m = root.sub("model");
    m.get("hidden", c.model.hidden);
    m.get("latent", c.model.latent);
    m.get("encoder_hidden", c.model.encoder_hidden);
    m.get("embed", c.model.embed);
    m.get("heads", c.model.heads);
    m.get("head_hidden", c.model.head_hidden);
    m.finish();
  }
  {
    auto s = root.sub("schedule");
    s.get("steps", c.schedule.steps);
    s.get("beta_min", c.schedule.beta_min);
    s.get("beta_max", c.schedule.beta_max);
    s.finish();
  }
  {
    auto t = root.sub("training");
    t.get("lr", c.optim.lr);
    t.get("epochs", c.optim.epochs);
    t.get("batch_size", c.optim.batch_size);
    t.get("patience", c.optim.patience);
    t.get("lr_decay", c.optim.lr_decay);
    t.get("clip_norm", c.optim.clip_norm);
    t.get("min_improvement", c.optim.min_improvement);
    t.get("max_windows", c.max_train_windows);
    t.finish();
  }
  {
    auto w = root.sub("window");
    w.get("window", c.window.window);
    w.get("horizon", c.window.horizon);
    w.get("stride", c.window.stride);
    w.finish();
  }
  {
    auto d = root.sub("data");
    d.get("source", c.data.source);
    d.get("path", c.data.path);
    d.get("split", c.data.split_mode);
    d.get("train_fraction", c.data.train_fraction);
    d.get("normalize", c.data.normalize);
    d.get_enum("impute", c.data.impute, detail::parse_impute);
    auto s = d.sub("synth");
    SynthParams& p = c.data.synth;
    s.get_enum("kind", p.kind, parse_synth_kind);
    s.get("length", p.length);
    s.get("dim", p.dim);
    s.get("period", p.period);
    s.get("amplitude", p.amplitude);
    s.get("noise", p.noise);
    s.get("phi_calm", p.phi_calm);
    s.get("sigma_calm", p.sigma_calm);
    s.get("phi_wild", p.phi_wild);
    s.get("sigma_wild", p.sigma_wild);
    s.get("switch_prob", p.switch_prob);
    s.get("coupling", p.coupling);
    s.get("level", p.level);
    s.get("base", p.base);
    s.get("drop_noise", p.drop_noise);
    s.get("drop_at", p.drop_at);
    s.get("drop_depth", p.drop_depth);
    s.get("ramp", p.ramp);
    s.get("recovery", p.recovery);
    s.finish();
    d.finish();
  }
  {
    auto f = root.sub("forecast");
    f.get("samples", c.forecast.samples);
    f.get("levels", c.forecast.levels);
    f.get_enum("point_mode", c.forecast.point_mode, parse_point_mode);
    f.get("k_candidates", c.forecast.k_candidates);
    f.get("eval_stride", c.forecast.eval_stride);
    f.get("max_eval_windows", c.forecast.max_eval_windows);
    f.finish();
  }
  {
    auto m = root.sub("metrics");
    m.get_enum("nrmse_normalizer", c.nrmse_normalizer, detail::parse_normalizer);
    m.finish();
  }
  {
    auto a = root.sub("ablate");
    std::vector<std::string> names;
    a.get("variants", names);
    if (!names.empty()) {
      c.ablate_variants.clear();
      for (const auto& n : names) {
        try {
          c.ablate_variants.push_back(parse_variant(n));
        } catch (const std::exception& e) {
          throw ConfigError(a.child("variants") + ": " + e.what());
        }
      }
    }
    a.get("seeds", c.ablate_seeds);
    a.finish();
  }
  {
    auto s = root.sub("simulate");
    s.get("threshold", c.simulate.threshold);
    s.get_enum("point_mode", c.simulate.point_mode, parse_point_mode);
    s.get("samples", c.simulate.samples);
    s.get("channel", c.simulate.channel);
    s.get("oracle", c.simulate.oracle);
    s.finish();
  }
  root.finish();

  if (c.data.source != "synth" && c.data.source != "csv") throw ConfigError("data.source: expected synth or csv");
  if (c.data.split_mode != "temporal") throw ConfigError("data.split: only temporal splits apply to a single series");
  if (c.forecast.samples < 1) throw ConfigError("forecast.samples: must be >= 1");
  if (c.forecast.eval_stride < 1) throw ConfigError("forecast.eval_stride: must be >= 1");
  if (!(c.simulate.threshold > 0.0 && c.simulate.threshold < 1.0)) throw ConfigError("simulate.threshold: outside (0, 1)");
  try {
    c.window.validate();
    c.optim.validate();
    (void)c.schedule.build();
    c.data.synth.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline Json to_json(const RunConfig& c) {
  const SynthParams& p = c.data.synth;
  std::vector<std::string> variants;
  for (Variant v : c.ablate_variants) variants.emplace_back(to_string(v));
  return Json{
      {"seed", c.seed},
      {"variant", std::string(to_string(c.model.variant))},
      {"model",
       {{"hidden", c.model.hidden},
        {"latent", c.model.latent},
        {"encoder_hidden", c.model.encoder_hidden},
        {"embed", c.model.embed},
        {"heads", c.model.heads},
        {"head_hidden", c.model.head_hidden}}},
      {"schedule", {{"steps", c.schedule.steps}, {"beta_min", c.schedule.beta_min}, {"beta_max", c.schedule.beta_max}}},
      {"training",
       {{"lr", c.optim.lr},
        {"epochs", c.optim.epochs},
        {"batch_size", c.optim.batch_size},
        {"patience", c.optim.patience},
        {"lr_decay", c.optim.lr_decay},
        {"clip_norm", c.optim.clip_norm},
        {"min_improvement", c.optim.min_improvement},
        {"max_windows", c.max_train_windows}}},
      {"window", {{"window", c.window.window}, {"horizon", c.window.horizon}, {"stride", c.window.stride}}},
      {"data",
       {{"source", c.data.source},
        {"path", c.data.path},
        {"split", c.data.split_mode},
        {"train_fraction", c.data.train_fraction},
        {"normalize", c.data.normalize},
        {"impute", detail::impute_name(c.data.impute)},
        {"synth",
         {{"kind", to_string(p.kind)},
          {"length", p.length},
          {"dim", p.dim},
          {"period", p.period},
          {"amplitude", p.amplitude},
          {"noise", p.noise},
          {"phi_calm", p.phi_calm},
          {"sigma_calm", p.sigma_calm},
          {"phi_wild", p.phi_wild},
          {"sigma_wild", p.sigma_wild},
          {"switch_prob", p.switch_prob},
          {"coupling", p.coupling},
          {"level", p.level},
          {"base", p.base},
          {"drop_noise", p.drop_noise},
          {"drop_at", p.drop_at},
          {"drop_depth", p.drop_depth},
          {"ramp", p.ramp},
          {"recovery", p.recovery}}}}},
      {"forecast",
       {{"samples", c.forecast.samples},
        {"levels", c.forecast.levels},
        {"point_mode", detail::point_mode_name(c.forecast.point_mode)},
        {"k_candidates", c.forecast.k_candidates},
        {"eval_stride", c.forecast.eval_stride},
        {"max_eval_windows", c.forecast.max_eval_windows}}},
      {"metrics", {{"nrmse_normalizer", detail::normalizer_name(c.nrmse_normalizer)}}},
      {"ablate", {{"variants", variants}, {"seeds", c.ablate_seeds}}},
      {"simulate",
       {{"threshold", c.simulate.threshold},
        {"point_mode", detail::point_mode_name(c.simulate.point_mode)},
        {"samples", c.simulate.samples},
        {"channel", c.simulate.channel},
        {"oracle", c.simulate.oracle}}},
  };
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace stochdiff

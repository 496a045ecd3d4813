// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.

// stochdiff: train, forecast, evaluate, ablate, synth, simulate.
//
// Every subcommand writes resolved_config.json next to its outputs. Errors are
// reported as one JSON record on stderr and exit status 1.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stochdiff/pipeline.hpp"
#include "stochdiff/plot.hpp"
#include "stochdiff/stochdiff.hpp"

namespace fs = std::filesystem;
using namespace stochdiff;

namespace {

class MisalignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string checkpoint;
  std::vector<std::string> overrides;  // key.path=value
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "run configuration (JSON)");
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
  sub->add_option("--checkpoint", c.checkpoint, "model checkpoint");
  sub->add_option("--set", c.overrides, "override a config key, e.g. --set training.epochs=20");
}

/// Applies one "a.b.c=value" override; the value is parsed as JSON when it can be.
void apply_override(Json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got: " + kv);
  std::string pointer;
  std::stringstream keys(kv.substr(0, eq));
  for (std::string k; std::getline(keys, k, '.');) pointer += "/" + k;
  const std::string raw = kv.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  j[Json::json_pointer(pointer)] = value;
}

RunConfig resolve_config(const Common& c) {
  Json j = Json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw std::runtime_error("file not found: " + c.config);
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
  }
  for (const auto& kv : c.overrides) apply_override(j, kv);
  if (c.seed) j["seed"] = *c.seed;
  return parse_run_config(j);
}

fs::path prepare_out(const Common& c, const RunConfig& cfg) {
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  std::ofstream(out / "resolved_config.json") << to_json(cfg).dump(2) << '\n';
  return out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f.precision(17);
  return f;
}

void write_json(const fs::path& p, const Json& j) { open_out(p) << j.dump(2) << '\n'; }

Json nullable(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

/// Loads the checkpoint and, when a config was given, checks it describes the same model.
LoadedModel load_for(const Common& c, RunConfig& cfg) {
  if (c.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  LoadedModel lm = load_model(c.checkpoint);
  if (!c.config.empty()) {
    require_compatible(lm.model.config, model_config_for(cfg, lm.model.config.data_dim, cfg.model.variant));
    if (!(lm.model.schedule_config == cfg.schedule)) throw ShapeMismatchError("checkpoint schedule does not match the config");
  }
  cfg.model = lm.model.config;
  cfg.schedule = lm.model.schedule_config;
  return lm;
}

Tensor point_forecast(const ForecastEnsemble& ens, const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.forecast.point_mode == PointMode::median || ens.samples < 2) return ensemble_median(ens);
  return pointwise_forecast(ens, cfg.forecast.k_candidates, seed);
}

// ---- train ------------------------------------------------------------------

int cmd_train(const Common& c) {
  RunConfig cfg = resolve_config(c);
  const PreparedData data = prepare_data(cfg);
  TrainConfig tc = cfg.train_config();
  tc.model.data_dim = data.raw.dim();
  Model model = build_variant(tc);
  if (!c.checkpoint.empty()) {
    // Warm start: adapt an existing model to this data.
    LoadedModel lm = load_model(c.checkpoint);
    require_compatible(lm.model.config, tc.model);
    assign_parameters(model.params, lm.model.params);
  }
  const fs::path out = prepare_out(c, cfg);
  const auto windows = training_set(data.train_norm, cfg.window, cfg.max_train_windows);
  std::cerr << "training " << to_string(tc.model.variant) << " on " << windows.size() << " windows\n";

  auto report = open_out(out / "train_report.jsonl");
  auto timing = open_out(out / "timing.jsonl");
  const TrainReport rep = train(model, windows, tc.optim, [&](const EpochRecord& r) {
    report << Json{{"epoch", r.epoch}, {"total", r.total}, {"kl", r.kl}, {"recon", r.recon}, {"lr", r.lr}}.dump() << '\n';
    timing << Json{{"epoch", r.epoch}, {"seconds", r.seconds}}.dump() << '\n';
    std::cerr << "epoch " << r.epoch << " loss " << r.total << " lr " << r.lr << '\n';
  });
  save_model(model, data.stats, out / "checkpoint.bin");
  std::cout << "checkpoint: " << (out / "checkpoint.bin").string() << " (" << rep.epochs.size() << " epochs, final loss "
            << rep.epochs.back().total << ")\n";
  return 0;
}

// ---- forecast -----------------------------------------------------------------

int cmd_forecast(const Common& c, const std::string& series_path, std::optional<std::size_t> t0_opt,
                 std::optional<std::size_t> samples) {
  RunConfig cfg = resolve_config(c);
  if (samples) cfg.forecast.samples = *samples;
  LoadedModel lm = load_for(c, cfg);
  const TimeSeries series = series_path.empty() ? load_dataset(cfg.data, cfg.seed)
                                                : load_csv(resolve_data_path(series_path), {cfg.data.impute});
  if (series.dim() != lm.model.config.data_dim) {
    throw ShapeMismatchError("series has " + std::to_string(series.dim()) + " columns, checkpoint expects " +
                             std::to_string(lm.model.config.data_dim));
  }
  const std::size_t W = cfg.window.window, H = cfg.window.horizon;
  const std::size_t t0 = t0_opt.value_or(series.length());
  if (t0 < W || t0 > series.length()) throw SeriesTooShortError("forecast origin needs a full window before t0");

  const Tensor history = rows_of(series.values, t0 - W, W);
  const ForecastEnsemble ens = forecast_original(lm.model, lm.stats, history, H, cfg.forecast.samples, cfg.seed);
  const QuantileBands bands = quantile_bands(ens, cfg.forecast.levels);
  const Tensor point = point_forecast(ens, cfg, cfg.seed);
  const bool have_truth = t0 + H <= series.length();
  const Tensor truth = have_truth ? rows_of(series.values, t0, H) : Tensor(0, series.dim());

  const fs::path out = prepare_out(c, cfg);
  {
    auto f = open_out(out / "ensemble.csv");
    f << "sample_id,step,dim,value\n";
    for (std::size_t s = 0; s < ens.samples; ++s)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t j = 0; j < ens.dim; ++j) f << s << ',' << h << ',' << j << ',' << ens.at(s, h, j) << '\n';
  }
  {
    auto f = open_out(out / "bands.csv");
    f << "step,dim,level,value,point\n";
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t j = 0; j < ens.dim; ++j)
        for (std::size_t l = 0; l < bands.levels.size(); ++l)
          f << h << ',' << j << ',' << bands.levels[l] << ',' << bands.at(h, j, l) << ',' << point(h, j) << '\n';
  }
  if (have_truth) {
    auto f = open_out(out / "truth.csv");
    write_csv(f, TimeSeries{truth, series.columns});
  }
  write_json(out / "forecast.json", Json{{"t0", t0},
                                         {"samples", ens.samples},
                                         {"horizon", H},
                                         {"dim", ens.dim},
                                         {"seed", cfg.seed},
                                         {"columns", series.columns},
                                         {"truth", have_truth}});
  if (bands.levels.size() >= 2) open_out(out / "plot.svg") << forecast_svg(history, bands, point, truth);
  std::cout << "forecast: " << ens.samples << " samples x " << H << " steps x " << ens.dim << " dims -> "
            << out.string() << '\n';
  return 0;
}

// ---- evaluate ------------------------------------------------------------------

ForecastEnsemble read_ensemble(const fs::path& path) {
  const TimeSeries t = load_csv(path);
  if (t.columns != std::vector<std::string>{"sample_id", "step", "dim", "value"})
    throw MisalignmentError(path.string() + ": expected columns sample_id,step,dim,value");
  std::size_t S = 0, H = 0, D = 0;
  for (std::size_t r = 0; r < t.length(); ++r) {
    S = std::max(S, static_cast<std::size_t>(t.values(r, 0)) + 1);
    H = std::max(H, static_cast<std::size_t>(t.values(r, 1)) + 1);
    D = std::max(D, static_cast<std::size_t>(t.values(r, 2)) + 1);
  }
  if (S * H * D != t.length()) throw MisalignmentError(path.string() + ": ensemble is not a complete S x H x d grid");
  ForecastEnsemble e(S, H, D);
  for (std::size_t r = 0; r < t.length(); ++r) {
    e.at(static_cast<std::size_t>(t.values(r, 0)), static_cast<std::size_t>(t.values(r, 1)),
         static_cast<std::size_t>(t.values(r, 2))) = t.values(r, 3);
  }
  return e;
}

Tensor read_point(const fs::path& path, std::size_t H, std::size_t D) {
  const TimeSeries t = load_csv(path);
  if (t.columns.size() != 5 || t.columns[4] != "point") throw MisalignmentError(path.string() + ": no point column");
  Tensor p(H, D);
  std::vector<bool> seen(H * D, false);
  for (std::size_t r = 0; r < t.length(); ++r) {
    const auto h = static_cast<std::size_t>(t.values(r, 0)), j = static_cast<std::size_t>(t.values(r, 1));
    if (h >= H || j >= D) throw MisalignmentError(path.string() + ": bands do not match the ensemble shape");
    p(h, j) = t.values(r, 4);
    seen[h * D + j] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw MisalignmentError(path.string() + ": bands do not cover every step and dimension");
  return p;
}

int cmd_evaluate(const Common& c, const std::string& forecast_dir, const std::string& truth_path) {
  RunConfig cfg = resolve_config(c);
  Json report;
  if (!forecast_dir.empty()) {
    if (truth_path.empty()) throw std::invalid_argument("--truth is required with --forecast-dir");
    const fs::path dir(forecast_dir);
    const ForecastEnsemble ens = read_ensemble(dir / "ensemble.csv");
    const Tensor point = read_point(dir / "bands.csv", ens.horizon, ens.dim);
    const TimeSeries truth = load_csv(resolve_data_path(truth_path));
    if (truth.length() != ens.horizon || truth.dim() != ens.dim) {
      throw MisalignmentError("truth is " + std::to_string(truth.length()) + " x " + std::to_string(truth.dim()) +
                              " but the forecast is " + std::to_string(ens.horizon) + " x " + std::to_string(ens.dim));
    }
    std::uint64_t seed = cfg.seed;
    if (std::ifstream meta(dir / "forecast.json"); meta) seed = Json::parse(meta).at("seed").get<std::uint64_t>();
    report = Json{{"nrmse", nrmse(point, truth.values, cfg.nrmse_normalizer)},
                  {"crps_sum", crps_sum(ens, truth.values)},
                  {"n_steps", ens.horizon},
                  {"n_samples", ens.samples},
                  {"seed", seed}};
  } else {
    // Rolling-origin evaluation of a checkpoint on the held-out side of the configured data.
    LoadedModel lm = load_for(c, cfg);
    const PreparedData data = prepare_data(cfg);
    const EvalResult r = evaluate_model(lm.model, lm.stats, data.test.values, eval_options(cfg, cfg.seed));
    report = Json{{"nrmse", r.nrmse},
                  {"crps_sum", r.crps_sum},
                  {"n_steps", r.windows.size() * cfg.window.horizon},
                  {"n_samples", r.samples},
                  {"seed", cfg.seed},
                  {"windows", r.windows.size()},
                  {"persistence_nrmse", r.persistence_nrmse},
                  {"persistence_crps_sum", r.persistence_crps_sum}};
  }
  const fs::path out = prepare_out(c, cfg);
  write_json(out / "metrics.json", report);
  std::cout << report.dump() << '\n';
  return 0;
}

// ---- ablate ------------------------------------------------------------------------

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

int cmd_ablate(const Common& c) {
  RunConfig cfg = resolve_config(c);
  const PreparedData data = prepare_data(cfg);
  const auto windows = training_set(data.train_norm, cfg.window, cfg.max_train_windows);
  const fs::path out = prepare_out(c, cfg);
  fs::create_directories(out / "models");

  Json rows = Json::array();
  std::map<Variant, double> mean_crps;
  std::optional<EvalResult> persistence;
  auto csv = open_out(out / "ablation.csv");
  csv << "variant,nrmse,crps_sum\n";
  for (Variant v : cfg.ablate_variants) {
    Json per_seed = Json::array();
    std::vector<double> nr, cr;
    for (std::uint64_t seed : cfg.ablate_seeds) {
      TrainConfig tc = cfg.train_config();
      tc.model = model_config_for(cfg, data.raw.dim(), v);
      tc.optim.seed = seed;
      std::cerr << "ablate: " << to_string(v) << " seed " << seed << '\n';
      auto [model, rep] = train(windows, tc);
      save_model(model, data.stats, out / "models" / (std::string(to_string(v)) + "-seed" + std::to_string(seed) + ".bin"));
      const EvalResult r = evaluate_model(model, data.stats, data.test.values, eval_options(cfg, seed));
      if (!persistence) persistence = r;
      nr.push_back(r.nrmse);
      cr.push_back(r.crps_sum);
      Json row{{"seed", seed}, {"nrmse", r.nrmse}, {"final_loss", rep.epochs.back().total}};
      if (model.config.probabilistic()) {
        row["crps_sum"] = r.crps_sum;
      } else {
        row["crps_sum"] = nullptr;
        row["degenerate_crps_sum"] = r.crps_sum;  // the point forecast scored as a one-member ensemble
      }
      row["persistence_nrmse"] = r.persistence_nrmse;
      per_seed.push_back(row);
    }
    const bool prob = ModelConfig{.variant = v}.probabilistic();
    std::optional<double> crps;
    if (prob) crps = mean_crps[v] = mean_of(cr);
    rows.push_back(Json{{"variant", std::string(to_string(v))},
                        {"nrmse", mean_of(nr)},
                        {"crps_sum", nullable(crps)},
                        {"degenerate_crps_sum", prob ? Json(nullptr) : Json(mean_of(cr))},
                        {"per_seed", per_seed}});
    csv << to_string(v) << ',' << mean_of(nr) << ',';
    if (crps) csv << *crps;
    csv << '\n';
  }
  Json ordering = nullptr;
  if (mean_crps.count(Variant::stochdiff) && mean_crps.count(Variant::vlstm_diffusion) &&
      mean_crps.count(Variant::vlstm_standard_prior)) {
    ordering = mean_crps[Variant::stochdiff] <= mean_crps[Variant::vlstm_diffusion] &&
               mean_crps[Variant::vlstm_diffusion] <= mean_crps[Variant::vlstm_standard_prior];
  }
  Json persist = nullptr;
  if (persistence) {
    persist = Json{{"nrmse", persistence->persistence_nrmse}, {"crps_sum", persistence->persistence_crps_sum}};
    csv << "persistence," << persistence->persistence_nrmse << ',' << persistence->persistence_crps_sum << '\n';
  }
  write_json(out / "ablation.json", Json{{"seed", cfg.seed},
                                         {"seeds", cfg.ablate_seeds},
                                         {"rows", rows},
                                         {"persistence", persist},
                                         {"crps_ordering_holds", ordering}});
  std::cout << "ablation table: " << (out / "ablation.csv").string() << '\n';
  return 0;
}

// ---- synth ------------------------------------------------------------------------------

int cmd_synth(const Common& c) {
  RunConfig cfg = resolve_config(c);
  const TimeSeries ts = synth_generate(cfg.data.synth, cfg.seed);
  const fs::path out = prepare_out(c, cfg);
  auto f = open_out(out / "series.csv");
  write_csv(f, ts);
  std::cout << "series: " << ts.length() << " x " << ts.dim() << " -> " << (out / "series.csv").string() << '\n';
  return 0;
}

// ---- simulate ----------------------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& series_path, std::optional<double> threshold, bool oracle) {
  RunConfig cfg = resolve_config(c);
  if (threshold) cfg.simulate.threshold = *threshold;
  if (oracle) cfg.simulate.oracle = true;
  std::optional<LoadedModel> lm;
  if (!cfg.simulate.oracle) lm = load_for(c, cfg);

  // Default stream: the held-out side of the configured data.
  const TimeSeries series = series_path.empty() ? prepare_data(cfg).test
                                                : load_csv(resolve_data_path(series_path), {cfg.data.impute});
  if (lm && series.dim() != lm->model.config.data_dim) {
    throw ShapeMismatchError("series has " + std::to_string(series.dim()) + " columns, checkpoint expects " +
                             std::to_string(lm->model.config.data_dim));
  }
  StreamOptions opt{cfg.window, cfg.simulate.threshold, cfg.simulate.point_mode, cfg.simulate.channel, cfg.seed};
  const StreamForecaster fc = lm ? model_forecaster(lm->model, lm->stats, cfg.simulate.samples, cfg.seed)
                                 : oracle_forecaster(series.values);
  const StreamResult res = simulate_stream(fc, series.values, opt);

  std::vector<double> amp(series.length());
  for (std::size_t t = 0; t < amp.size(); ++t) amp[t] = series.values(t, opt.channel);
  // Ground truth over the monitored steps: nothing can be issued before a full window is observed.
  std::vector<DropFlag> truth;
  for (const auto& f : detect_drops(amp, opt.threshold, opt.spec.window))
    if (f.step >= opt.spec.window) truth.push_back(f);
  const auto events = score_alerts(truth, res.alerts);

  const fs::path out = prepare_out(c, cfg);
  {
    auto f = open_out(out / "alerts.jsonl");
    for (const auto& a : res.alerts)
      f << Json{{"issue_step", a.issue_step}, {"target_step", a.target_step}, {"drop", a.drop}, {"reference", a.reference}}
               .dump()
        << '\n';
  }
  {
    auto f = open_out(out / "trace.csv");
    f << "issue_step,target_step,point\n";
    for (const auto& r : res.trace)
      for (std::size_t i = 0; i < r.point.size(); ++i) f << r.issue_step << ',' << r.issue_step + 1 + i << ',' << r.point[i] << '\n';
  }
  Json ev = Json::array(), gt = Json::array();
  std::size_t detected = 0;
  for (const auto& e : events) {
    detected += e.detected;
    ev.push_back(Json{{"first_step", e.first_step},
                      {"last_step", e.last_step},
                      {"detected", e.detected},
                      {"earliest_issue", e.detected ? Json(e.earliest_issue) : Json(nullptr)},
                      {"lead_time", e.detected ? Json(e.lead_time) : Json(nullptr)}});
  }
  for (const auto& f : truth) gt.push_back(f.step);
  write_json(out / "summary.json", Json{{"forecaster", lm ? "model" : "oracle"},
                                        {"threshold", opt.threshold},
                                        {"window", opt.spec.window},
                                        {"horizon", opt.spec.horizon},
                                        {"channel", opt.channel},
                                        {"n_alerts", res.alerts.size()},
                                        {"truth_steps", gt},
                                        {"events", ev},
                                        {"events_detected", detected},
                                        {"causality_audit_passed", res.audit.passed()}});
  std::cout << res.alerts.size() << " alerts, " << detected << "/" << events.size() << " drop events detected, audit "
            << (res.audit.passed() ? "passed" : "FAILED") << '\n';
  return res.audit.passed() ? 0 : 1;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const MisalignmentError*>(&e)) return "misalignment";
  if (dynamic_cast<const ShapeMismatchError*>(&e)) return "checkpoint_mismatch";
  if (dynamic_cast<const CsvParseError*>(&e)) return "parse";
  if (dynamic_cast<const TrainingDivergedError*>(&e)) return "training_aborted";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochdiff: diffusion-based probabilistic forecasting with a learned latent prior"};
  app.require_subcommand(1);
  Common common;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train_cmd, common);

  std::string series;
  std::optional<std::size_t> t0, samples;
  auto* fc_cmd = app.add_subcommand("forecast", "sample forecast trajectories from a checkpoint");
  add_common(fc_cmd, common);
  fc_cmd->add_option("--series", series, "CSV series (default: the configured data)");
  fc_cmd->add_option("--t0", t0, "number of observed rows (default: all)");
  fc_cmd->add_option("--samples", samples, "ensemble size");

  std::string forecast_dir, truth;
  auto* ev_cmd = app.add_subcommand("evaluate", "score forecasts (--forecast-dir/--truth) or a checkpoint (rolling)");
  add_common(ev_cmd, common);
  ev_cmd->add_option("--forecast-dir", forecast_dir, "output directory of a forecast run");
  ev_cmd->add_option("--truth", truth, "CSV with the true continuation");

  auto* ab_cmd = app.add_subcommand("ablate", "train and score every variant over several seeds");
  add_common(ab_cmd, common);

  auto* sy_cmd = app.add_subcommand("synth", "write a synthetic series");
  add_common(sy_cmd, common);

  std::optional<double> threshold;
  bool oracle = false;
  auto* sim_cmd = app.add_subcommand("simulate", "replay a stream through the drop monitor");
  add_common(sim_cmd, common);
  sim_cmd->add_option("--series", series, "CSV stream (default: held-out side of the configured data)");
  sim_cmd->add_option("--threshold", threshold, "relative drop threshold (default 0.30)");
  sim_cmd->add_flag("--oracle", oracle, "forecast with the true future instead of a model");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(common);
    if (*fc_cmd) return cmd_forecast(common, series, t0, samples);
    if (*ev_cmd) return cmd_evaluate(common, forecast_dir, truth);
    if (*ab_cmd) return cmd_ablate(common);
    if (*sy_cmd) return cmd_synth(common);
    if (*sim_cmd) return cmd_simulate(common, series, threshold, oracle);
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 1;
}

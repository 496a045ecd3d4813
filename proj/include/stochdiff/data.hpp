// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// CSV ingestion, per-dimension z-scoring, sliding windows, splits and the
// synthetic generators used for the desk-scale experiments.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochdiff/random.hpp"
#include "stochdiff/tensor.hpp"

namespace stochdiff {

struct TimeSeries {
  Tensor values;  // T x d
  std::vector<std::string> columns;

  std::size_t length() const { return values.rows; }
  std::size_t dim() const { return values.cols; }

  /// Rows [start, start + count) as a new series.
  TimeSeries slice(std::size_t start, std::size_t count) const {
    if (start + count > values.rows) throw std::out_of_range("TimeSeries::slice past the end");
    TimeSeries out{Tensor(count, values.cols), columns};
    std::copy_n(values.data.begin() + static_cast<std::ptrdiff_t>(start * values.cols), count * values.cols,
                out.values.data.begin());
    return out;
  }
};

class CsvParseError : public std::runtime_error {
 public:
  CsvParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

class EmptyFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Impute { none, forward_fill };

struct CsvOptions {
  Impute impute = Impute::none;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses a real; empty cells and nan/inf come back non-finite. Returns false on garbage.
inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

}  // namespace detail

inline TimeSeries parse_csv(std::istream& in, const std::string& name = "<csv>", const CsvOptions& opt = {}) {
  std::string line;
  std::size_t lineno = 0;
  TimeSeries ts;
  bool have_header = false;
  std::vector<double> rows;
  std::vector<double> prev;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (!have_header) {
      ts.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != ts.columns.size()) {
      throw CsvParseError(name, lineno,
                          "expected " + std::to_string(ts.columns.size()) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!detail::parse_real(cells[j], row[j])) {
        throw CsvParseError(name, lineno, "non-numeric value '" + cells[j] + "' in column '" + ts.columns[j] + "'");
      }
      if (!std::isfinite(row[j])) {
        if (opt.impute != Impute::forward_fill) throw CsvParseError(name, lineno, "missing or non-finite value in column '" + ts.columns[j] + "'");
        if (prev.empty()) throw CsvParseError(name, lineno, "cannot forward-fill the first data row");
        row[j] = prev[j];
      }
    }
    rows.insert(rows.end(), row.begin(), row.end());
    prev = std::move(row);
  }
  if (!have_header) throw EmptyFileError(name + ": empty file");
  if (rows.empty()) throw EmptyFileError(name + ": no data rows");
  const std::size_t d = ts.columns.size();
  const std::size_t n = rows.size() / d;
  ts.values = Tensor(n, d, std::move(rows));
  return ts;
}

inline TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  return parse_csv(in, path.string(), opt);
}

inline void write_csv(std::ostream& out, const TimeSeries& ts) {
  out.precision(17);
  for (std::size_t j = 0; j < ts.columns.size(); ++j) out << (j ? "," : "") << ts.columns[j];
  out << '\n';
  for (std::size_t t = 0; t < ts.length(); ++t) {
    for (std::size_t j = 0; j < ts.dim(); ++j) out << (j ? "," : "") << ts.values(t, j);
    out << '\n';
  }
}

/// Per-dimension training statistics. Constant dimensions pass through untouched.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  double apply(double x, std::size_t j) const { return constant[j] ? x : (x - mean[j]) / stddev[j]; }
  double invert(double x, std::size_t j) const { return constant[j] ? x : x * stddev[j] + mean[j]; }
};

inline NormStats fit_zscore(const Tensor& train) {
  if (train.rows == 0) throw std::invalid_argument("fit_zscore: empty training series");
  NormStats s;
  const double n = static_cast<double>(train.rows);
  for (std::size_t j = 0; j < train.cols; ++j) {
    double mu = 0.0;
    for (std::size_t t = 0; t < train.rows; ++t) mu += train(t, j);
    mu /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < train.rows; ++t) var += (train(t, j) - mu) * (train(t, j) - mu);
    const double sd = std::sqrt(var / n);
    s.mean.push_back(mu);
    s.stddev.push_back(sd);
    s.constant.push_back(!(sd > 0.0));
  }
  return s;
}

inline Tensor normalize(const Tensor& x, const NormStats& s) {
  if (x.cols != s.mean.size()) throw ShapeError("normalize: width mismatch");
  Tensor out(x.rows, x.cols);
  for (std::size_t t = 0; t < x.rows; ++t)
    for (std::size_t j = 0; j < x.cols; ++j) out(t, j) = s.apply(x(t, j), j);
  return out;
}

inline Tensor denormalize(const Tensor& x, const NormStats& s) {
  if (x.cols != s.mean.size()) throw ShapeError("denormalize: width mismatch");
  Tensor out(x.rows, x.cols);
  for (std::size_t t = 0; t < x.rows; ++t)
    for (std::size_t j = 0; j < x.cols; ++j) out(t, j) = s.invert(x(t, j), j);
  return out;
}

struct Normalized {
  TimeSeries train;
  std::vector<TimeSeries> others;
  NormStats stats;
};

/// Fits on `train` only and applies the same transform to every series.
inline Normalized zscore_fit_apply(const TimeSeries& train, const std::vector<TimeSeries>& others = {}) {
  Normalized out;
  out.stats = fit_zscore(train.values);
  out.train = {normalize(train.values, out.stats), train.columns};
  for (const auto& o : others) out.others.push_back({normalize(o.values, out.stats), o.columns});
  return out;
}

struct WindowSpec {
  std::size_t window = 50;
  std::size_t horizon = 10;
  std::size_t stride = 1;

  void validate() const {
    if (window < 1 || horizon < 1 || stride < 1) throw std::invalid_argument("window, horizon and stride must be >= 1");
  }
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct WindowPair {
  std::size_t offset = 0;
  Tensor observed;  // window x d
  Tensor future;    // horizon x d
};

class SeriesTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t window_count(std::size_t length, const WindowSpec& spec) {
  spec.validate();
  if (length < spec.window + spec.horizon) return 0;
  return (length - spec.window - spec.horizon) / spec.stride + 1;
}

inline Tensor rows_of(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.rows) throw std::out_of_range("rows_of past the end");
  Tensor out(count, x.cols);
  std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(start * x.cols), count * x.cols, out.data.begin());
  return out;
}

inline std::vector<WindowPair> sliding_windows(const Tensor& series, const WindowSpec& spec) {
  const std::size_t n = window_count(series.rows, spec);
  if (n == 0) {
    throw SeriesTooShortError("series of length " + std::to_string(series.rows) + " is shorter than window + horizon = " +
                              std::to_string(spec.window + spec.horizon));
  }
  std::vector<WindowPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * spec.stride;
    out.push_back({off, rows_of(series, off, spec.window), rows_of(series, off + spec.window, spec.horizon)});
  }
  return out;
}

/// Contiguous (window + horizon)-row segments, the unit of training.
inline std::vector<Tensor> training_segments(const Tensor& series, const WindowSpec& spec) {
  std::vector<Tensor> out;
  for (auto& w : sliding_windows(series, spec)) out.push_back(rows_of(series, w.offset, spec.window + spec.horizon));
  return out;
}

class EmptySplitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t split_point(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  // Small guard so that e.g. 0.7 * 30 lands on 21, not 20.
  const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (cut == 0 || cut >= n) throw EmptySplitError("split leaves one side empty (n = " + std::to_string(n) + ")");
  return cut;
}

/// Cuts one series in time; no window built on either side crosses the cut.
inline std::pair<TimeSeries, TimeSeries> temporal_split(const TimeSeries& s, double fraction) {
  const std::size_t cut = split_point(s.length(), fraction);
  return {s.slice(0, cut), s.slice(cut, s.length() - cut)};
}

/// Partitions whole subjects by a seeded shuffle.
inline std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> subject_split(const std::vector<TimeSeries>& subjects,
                                                                                   double fraction, std::uint64_t seed) {
  const std::size_t cut = split_point(subjects.size(), fraction);
  std::vector<std::size_t> idx(subjects.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {5}));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> out;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < cut ? out.first : out.second).push_back(subjects[idx[i]]);
  return out;
}

// ---- synthetic generators ----------------------------------------------------

enum class SynthKind { sine_noise, regime_ar, drop_signal };

inline std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::sine_noise: return "sine_noise";
    case SynthKind::regime_ar: return "regime_ar";
    case SynthKind::drop_signal: return "drop_signal";
  }
  return "?";
}

inline SynthKind parse_synth_kind(const std::string& s) {
  for (SynthKind k : {SynthKind::sine_noise, SynthKind::regime_ar, SynthKind::drop_signal}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown synthetic kind: " + s);
}

struct SynthParams {
  SynthKind kind = SynthKind::sine_noise;
  std::size_t length = 500;
  std::size_t dim = 1;

  // sine_noise
  double period = 20.0;
  double amplitude = 1.0;
  double noise = 0.1;

  // regime_ar: two hidden regimes with their own AR(1) coefficient and noise scale.
  double phi_calm = 0.8;
  double sigma_calm = 0.3;
  double phi_wild = 0.3;
  double sigma_wild = 1.0;
  double switch_prob = 0.02;
  double coupling = 0.1;  // each channel also feeds on its left neighbour
  double level = 2.0;

  // drop_signal
  double base = 1.0;
  double drop_noise = 0.0;          // relative multiplicative noise
  std::vector<std::size_t> drop_at;  // last pre-drop index of each drop
  double drop_depth = 0.4;
  std::size_t ramp = 1;      // steps over which a drop unfolds (1 = abrupt)
  std::size_t recovery = 0;  // steps to climb back to base afterwards (0 = stays down)

  void validate() const {
    if (length < 1 || dim < 1) throw std::invalid_argument("synth: length and dim must be >= 1");
    if (!(noise >= 0.0 && drop_noise >= 0.0 && sigma_calm >= 0.0 && sigma_wild >= 0.0)) {
      throw std::invalid_argument("synth: noise scales must be >= 0");
    }
    if (!(period > 0.0)) throw std::invalid_argument("synth: period must be > 0");
    if (!(switch_prob >= 0.0 && switch_prob <= 1.0)) throw std::invalid_argument("synth: switch_prob outside [0, 1]");
    if (!(base > 0.0)) throw std::invalid_argument("synth: base must be > 0");
    if (!(drop_depth > 0.0 && drop_depth < 1.0)) throw std::invalid_argument("synth: drop_depth outside (0, 1)");
    if (ramp < 1) throw std::invalid_argument("synth: ramp must be >= 1");
    if (kind == SynthKind::drop_signal && drop_noise >= 1.0) throw std::invalid_argument("synth: drop_noise must be < 1");
    for (auto t : drop_at) {
      if (t + 1 >= length) throw std::invalid_argument("synth: drop index " + std::to_string(t) + " beyond series");
    }
  }
};

namespace detail {

inline std::vector<std::string> channel_names(std::size_t d, const std::string& stem) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back(stem + std::to_string(j));
  return names;
}

/// Multiplicative level of the drop envelope at index t.
inline double drop_envelope(const SynthParams& p, std::size_t t) {
  double level = 1.0;
  for (std::size_t at : p.drop_at) {
    if (t <= at) continue;
    const std::size_t k = t - at;  // steps since the drop began
    double depth;
    if (k <= p.ramp) {
      depth = p.drop_depth * static_cast<double>(k) / static_cast<double>(p.ramp);
    } else if (p.recovery == 0 || k - p.ramp < p.recovery) {
      depth = p.recovery == 0 ? p.drop_depth
                              : p.drop_depth * (1.0 - static_cast<double>(k - p.ramp) / static_cast<double>(p.recovery));
    } else {
      depth = 0.0;
    }
    level *= 1.0 - depth;
  }
  return level;
}

}  // namespace detail

inline TimeSeries synth_generate(const SynthParams& p, std::uint64_t seed) {
  p.validate();
  Rng rng(derive_seed(seed, {6, static_cast<std::uint64_t>(p.kind)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  TimeSeries ts;
  ts.values = Tensor(p.length, p.dim);

  switch (p.kind) {
    case SynthKind::sine_noise: {
      ts.columns = detail::channel_names(p.dim, "x");
      for (std::size_t t = 0; t < p.length; ++t) {
        for (std::size_t j = 0; j < p.dim; ++j) {
          const double phase = std::numbers::pi * static_cast<double>(j) / static_cast<double>(p.dim);
          const double clean = p.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / p.period + phase);
          ts.values(t, j) = clean + (p.noise > 0.0 ? p.noise * normal(rng) : 0.0);
        }
      }
      break;
    }
    case SynthKind::regime_ar: {
      ts.columns = detail::channel_names(p.dim, "x");
      std::bernoulli_distribution flip(p.switch_prob);
      bool wild = false;
      std::vector<double> dev(p.dim, 0.0), next(p.dim);
      for (std::size_t t = 0; t < p.length; ++t) {
        if (t > 0 && flip(rng)) wild = !wild;
        const double phi = wild ? p.phi_wild : p.phi_calm;
        const double sigma = wild ? p.sigma_wild : p.sigma_calm;
        for (std::size_t j = 0; j < p.dim; ++j) {
          const double left = p.dim > 1 ? dev[(j + p.dim - 1) % p.dim] : 0.0;
          next[j] = phi * dev[j] + p.coupling * left + sigma * normal(rng);
        }
        dev = next;
        for (std::size_t j = 0; j < p.dim; ++j) ts.values(t, j) = p.level + dev[j];
      }
      break;
    }
    case SynthKind::drop_signal: {
      ts.columns = p.dim == 1 ? std::vector<std::string>{"amplitude"} : detail::channel_names(p.dim, "amplitude");
      for (std::size_t t = 0; t < p.length; ++t) {
        const double env = p.base * detail::drop_envelope(p, t);
        for (std::size_t j = 0; j < p.dim; ++j) {
          const double wobble = p.drop_noise > 0.0 ? std::clamp(p.drop_noise * normal(rng), -0.5, 0.5) : 0.0;
          ts.values(t, j) = env * (1.0 + wobble);
        }
      }
      break;
    }
  }
  return ts;
}

}  // namespace stochdiff

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Standalone SVG of a forecast: one panel per dimension with the observed
// history, the outer quantile band as a polygon, the point forecast as a
// polyline and, when known, the true continuation.

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

#include "stochdiff/forecasting.hpp"

namespace stochdiff {

namespace detail {

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// `bands` must hold at least two levels; the first and last are drawn.
/// `truth` may be empty (0 rows).
inline std::string forecast_svg(const Tensor& history, const QuantileBands& bands, const Tensor& point,
                                const Tensor& truth) {
  if (bands.levels.size() < 2) throw std::invalid_argument("forecast_svg: need a lower and an upper band level");
  const std::size_t d = point.cols, W = history.rows, H = point.rows;
  const double panel_w = 640, panel_h = 180, pad = 30;
  const std::size_t lo = 0, hi = bands.levels.size() - 1;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel_w << "\" height=\"" << panel_h * static_cast<double>(d)
    << "\" viewBox=\"0 0 " << panel_w << " " << panel_h * static_cast<double>(d) << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t j = 0; j < d; ++j) {
    double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
    const auto see = [&](double v) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    };
    for (std::size_t t = 0; t < W; ++t) see(history(t, j));
    for (std::size_t h = 0; h < H; ++h) {
      see(bands.at(h, j, lo));
      see(bands.at(h, j, hi));
      see(point(h, j));
      if (truth.rows > h) see(truth(h, j));
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    const double top = panel_h * static_cast<double>(j);
    const auto X = [&](double t) { return pad + (panel_w - 2 * pad) * t / static_cast<double>(W + H - 1); };
    const auto Y = [&](double v) { return top + pad + (panel_h - 2 * pad) * (ymax - v) / (ymax - ymin); };
    const auto pt = [&](double t, double v) { return detail::fmt2(X(t)) + "," + detail::fmt2(Y(v)); };

    o << "<g id=\"dim" << j << "\">\n";
    o << "<polygon class=\"band\" fill=\"#8fd19e\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    for (std::size_t h = 0; h < H; ++h) o << pt(static_cast<double>(W + h), bands.at(h, j, hi)) << " ";
    for (std::size_t h = H; h-- > 0;) o << pt(static_cast<double>(W + h), bands.at(h, j, lo)) << (h ? " " : "");
    o << "\"/>\n";
    o << "<polyline class=\"history\" fill=\"none\" stroke=\"#333\" points=\"";
    for (std::size_t t = 0; t < W; ++t) o << pt(static_cast<double>(t), history(t, j)) << (t + 1 < W ? " " : "");
    o << "\"/>\n";
    if (truth.rows >= H) {
      o << "<polyline class=\"truth\" fill=\"none\" stroke=\"#333\" stroke-dasharray=\"4 3\" points=\"";
      for (std::size_t h = 0; h < H; ++h) o << pt(static_cast<double>(W + h), truth(h, j)) << (h + 1 < H ? " " : "");
      o << "\"/>\n";
    }
    o << "<polyline class=\"point\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"";
    for (std::size_t h = 0; h < H; ++h) o << pt(static_cast<double>(W + h), point(h, j)) << (h + 1 < H ? " " : "");
    o << "\"/>\n";
    o << "<text x=\"4\" y=\"" << detail::fmt2(top + 14) << "\" font-size=\"12\" font-family=\"sans-serif\">dim " << j
      << "</text>\n";
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace stochdiff

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochdiff {

/// Raised whenever operand extents disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Vectors are carried as 1 x n rows.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match extents " + std::to_string(r) + "x" + std::to_string(c));
    }
  }

  static Tensor row(std::span<const double> v) {
    return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }
  static Tensor row(std::initializer_list<double> v) {
    return Tensor(1, v.size(), std::vector<double>(v));
  }
  static Tensor column(std::span<const double> v) {
    return Tensor(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> row_span(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row_span(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::string shape_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline Tensor transpose(const Tensor& a) {
  Tensor t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

/// out += a * b (a: m x k, b: k x n).
inline void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data.data() + i * n;
    const double* arow = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Tensor out(a.rows, b.cols);
  matmul_accumulate(a, b, out);
  return out;
}

inline std::vector<double> to_vector(const Tensor& t) { return t.data; }

}  // namespace stochdiff

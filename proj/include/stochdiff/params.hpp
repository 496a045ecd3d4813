// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stochdiff/tensor.hpp"

namespace stochdiff {

/// Named trainable tensors with gradient buffers. Iteration order is the
/// insertion order, which makes optimizer state and checkpoints stable.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  std::size_t add(std::string name, Tensor init) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    const std::size_t idx = entries_.size();
    index_.emplace(name, idx);
    Tensor grad(init.rows, init.cols);
    entries_.push_back({std::move(name), std::move(init), std::move(grad)});
    return idx;
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
  }

  Tensor& value(std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor& value(std::string_view name) const { return entries_[index_of(name)].value; }
  Tensor& grad(std::string_view name) { return entries_[index_of(name)].grad; }
  const Tensor& grad(std::string_view name) const { return entries_[index_of(name)].grad; }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || a[i].value != b[i].value) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Weight initialization: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

}  // namespace stochdiff

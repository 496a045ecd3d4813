// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Binary parameter checkpoints:
//   "SDCK" | u32 version | u64 meta_len | meta (JSON text) | u64 count |
//   count x { u64 name_len | name | u64 rows | u64 cols | rows*cols f64 }
// All integers and reals little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "stochdiff/params.hpp"

namespace stochdiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ShapeMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ParameterSet params;
  std::string metadata;
};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CorruptCheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  return to_little(v);
}

inline std::string get_string(std::istream& in, std::uint64_t n, const char* what) {
  constexpr std::uint64_t kMaxString = 1ULL << 28;
  if (n > kMaxString) throw CorruptCheckpointError(std::string("implausible length for ") + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CorruptCheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const ParameterSet& ps, const std::string& metadata = "{}") {
  out.write("SDCK", 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  detail::put<std::uint64_t>(out, ps.size());
  for (const auto& e : ps) {
    detail::put<std::uint64_t>(out, e.name.size());
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put<std::uint64_t>(out, e.value.rows);
    detail::put<std::uint64_t>(out, e.value.cols);
    for (double v : e.value.data) detail::put<double>(out, v);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SDCK", 4) != 0) throw CorruptCheckpointError("not a checkpoint file");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ck.metadata = detail::get_string(in, detail::get<std::uint64_t>(in, "metadata length"), "metadata");
  const auto count = detail::get<std::uint64_t>(in, "entry count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::get_string(in, detail::get<std::uint64_t>(in, "name length"), "name");
    const auto rows = detail::get<std::uint64_t>(in, "rows");
    const auto cols = detail::get<std::uint64_t>(in, "cols");
    if (rows > (1ULL << 24) || cols > (1ULL << 24)) throw CorruptCheckpointError("implausible shape for " + name);
    Tensor t(rows, cols);
    for (double& v : t.data) v = detail::get<double>(in, "values");
    if (ck.params.contains(name)) throw CorruptCheckpointError("duplicate entry " + name);
    ck.params.add(std::move(name), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptCheckpointError("trailing bytes after last entry");
  return ck;
}

inline void checkpoint_save(const ParameterSet& ps, const std::filesystem::path& path, const std::string& metadata = "{}") {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  write_checkpoint(out, ps, metadata);
  if (!out) throw std::runtime_error("error writing checkpoint: " + path.string());
}

inline Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  return read_checkpoint(in);
}

/// Copies checkpoint values into `target`, which fixes the expected names and shapes.
inline void assign_parameters(ParameterSet& target, const ParameterSet& loaded) {
  if (loaded.size() != target.size()) {
    throw ShapeMismatchError("checkpoint has " + std::to_string(loaded.size()) + " tensors, model expects " +
                             std::to_string(target.size()));
  }
  for (auto& e : target) {
    if (!loaded.contains(e.name)) throw ShapeMismatchError("checkpoint lacks parameter " + e.name);
    const Tensor& src = loaded.value(e.name);
    if (src.rows != e.value.rows || src.cols != e.value.cols) {
      throw ShapeMismatchError("parameter " + e.name + ": checkpoint " + src.shape_string() + ", model " +
                               e.value.shape_string());
    }
    e.value = src;
  }
}

}  // namespace stochdiff

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace longctx {

/// Dense row-major matrix of 64-bit floats.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }

  bool all_finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Matrix&) const = default;
};

/// Boolean mask with the same shape conventions as Matrix.
struct BoolMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> values;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), values(r * c, fill ? 1 : 0) {}

  void set(std::size_t i, std::size_t j, bool v) { values[i * cols + j] = v ? 1 : 0; }
  bool at(std::size_t i, std::size_t j) const { return values[i * cols + j] != 0; }
};

/// Square matrix of per-entry relative positions; only entries with j <= i
/// are meaningful (causal lower triangle).
struct RelPositionMatrix {
  std::size_t n = 0;
  std::vector<std::int64_t> values;

  RelPositionMatrix() = default;
  explicit RelPositionMatrix(std::size_t n_) : n(n_), values(n_ * n_, 0) {}

  std::int64_t& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
  std::int64_t at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

}  // namespace longctx

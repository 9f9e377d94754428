#pragma once

#include "slsp/pattern.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace slsp {

// Row-major dense matrix.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{}) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) {
      throw DimensionMismatchError("matrix buffer size does not match shape");
    }
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data.data() + r * cols, cols); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data.data() + r * cols, cols);
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

// Output of the weight transform: every aligned hw_n-window of every row has
// at most hw_m nonzeros. Keeps its originating pattern for provenance.
template <typename T>
struct SlidedMatrix {
  std::size_t rows = 0;
  std::size_t cols_expanded = 0;
  SparsityPattern pattern;
  std::vector<T> data;

  std::size_t windows_per_row() const { return cols_expanded / pattern.hw_n; }

  std::span<T> row(std::size_t r) {
    return std::span<T>(data.data() + r * cols_expanded, cols_expanded);
  }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data.data() + r * cols_expanded, cols_expanded);
  }

  friend bool operator==(const SlidedMatrix& a, const SlidedMatrix& b) {
    return a.rows == b.rows && a.cols_expanded == b.cols_expanded && a.pattern == b.pattern &&
           a.data == b.data;
  }
};

// -0.0 counts as zero for all sparsity decisions.
template <typename T>
inline bool is_nonzero(T v) {
  return v != T{};
}

}  // namespace slsp

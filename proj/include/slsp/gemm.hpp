#pragma once

// Hardware-style compressed storage and the reference GEMM pair.
//
// CompressedSparseMatrix keeps, per window, the hw_m retained values in
// ascending intra-window position order plus their position codes. Because
// the packer writes each value at the output slot matching its intra-window
// offset, the kept value at position p multiplies the lifted activation
// element at the same offset; the GEMM gathers through the metadata, which
// doubles as a consistency check on the format.
//
// Both GEMMs accumulate each output element in a fixed left-to-right order,
// so results are bit-identical at any row-parallelism level.

#include "slsp/detail/parallel.hpp"
#include "slsp/matrix.hpp"
#include "slsp/pack.hpp"
#include "slsp/pattern.hpp"
#include "slsp/quantize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

namespace slsp {

template <typename T>
struct accum_type;
template <>
struct accum_type<std::int8_t> {
  using type = std::int32_t;
};
template <>
struct accum_type<std::int32_t> {
  using type = std::int64_t;
};
template <>
struct accum_type<float> {
  using type = double;
};
template <>
struct accum_type<double> {
  using type = long double;
};

template <typename T>
using accum_t = typename accum_type<T>::type;

struct OpCounts {
  std::atomic<std::uint64_t> multiplies{0};
};

// int8 accumulators hold K * 127^2 exactly only while K stays small.
inline constexpr std::size_t kMaxInt8InnerDim = std::size_t{1} << 23;

template <typename T>
struct CompressedSparseMatrix {
  std::size_t rows = 0;
  std::size_t windows_per_row = 0;
  SparsityPattern pattern;
  std::vector<T> values;              // rows * windows_per_row * hw_m
  std::vector<std::uint8_t> metadata; // position codes, strictly increasing per window

  int hw_m() const { return pattern.hw_m; }
  int hw_n() const { return pattern.hw_n; }
};

// Packs a compliant slided matrix into values + 2-bit position metadata.
// Windows with fewer than hw_m nonzeros are padded with the smallest unused
// positions (value 0) so every slided matrix has exactly one encoding.
template <typename T>
CompressedSparseMatrix<T> compress(const SlidedMatrix<T>& s) {
  const int m = s.pattern.hw_m;
  const int n = s.pattern.hw_n;
  if (n > 4) throw std::invalid_argument("2-bit metadata requires window length <= 4");
  if (s.cols_expanded % static_cast<std::size_t>(n) != 0) {
    throw DimensionMismatchError("slided width not divisible by window length");
  }
  CompressedSparseMatrix<T> c;
  c.rows = s.rows;
  c.windows_per_row = s.cols_expanded / static_cast<std::size_t>(n);
  c.pattern = s.pattern;
  c.values.reserve(c.rows * c.windows_per_row * static_cast<std::size_t>(m));
  c.metadata.reserve(c.values.capacity());
  std::vector<int> pos;
  for (std::size_t r = 0; r < s.rows; ++r) {
    auto row = s.row(r);
    for (std::size_t w = 0; w < c.windows_per_row; ++w) {
      pos.clear();
      for (int d = 0; d < n; ++d) {
        if (is_nonzero(row[w * n + d])) pos.push_back(d);
      }
      if (static_cast<int>(pos.size()) > m) {
        throw NotCompliantError("window (" + std::to_string(r) + ", " + std::to_string(w) +
                                ") holds more than " + std::to_string(m) + " nonzeros");
      }
      for (int d = 0; static_cast<int>(pos.size()) < m; ++d) {
        if (std::find(pos.begin(), pos.end(), d) == pos.end()) pos.push_back(d);
      }
      std::sort(pos.begin(), pos.end());
      for (const int d : pos) {
        c.values.push_back(row[w * n + d]);
        c.metadata.push_back(static_cast<std::uint8_t>(d));
      }
    }
  }
  return c;
}

// Exact inverse of compress: scatters values to their coded positions.
template <typename T>
SlidedMatrix<T> decompress(const CompressedSparseMatrix<T>& c) {
  const int m = c.hw_m();
  const int n = c.hw_n();
  SlidedMatrix<T> s;
  s.rows = c.rows;
  s.cols_expanded = c.windows_per_row * static_cast<std::size_t>(n);
  s.pattern = c.pattern;
  s.data.assign(s.rows * s.cols_expanded, T{});
  const std::size_t total = c.rows * c.windows_per_row;
  if (c.values.size() != total * m || c.metadata.size() != total * m) {
    throw MalformedMetadataError("compressed payload size does not match shape");
  }
  for (std::size_t w = 0; w < total; ++w) {
    int prev = -1;
    for (int k = 0; k < m; ++k) {
      const int d = c.metadata[w * m + k];
      if (d <= prev || d >= n) {
        throw MalformedMetadataError("window " + std::to_string(w) +
                                     ": position codes must be strictly increasing and < " +
                                     std::to_string(n));
      }
      prev = d;
      s.data[w * n + static_cast<std::size_t>(d)] = c.values[w * m + k];
    }
  }
  return s;
}

// Reference dense product Y = W * X; X holds one token per column.
template <typename T>
Matrix<accum_t<T>> dense_gemm(const Matrix<T>& w, const Matrix<T>& x, int threads = 1,
                              OpCounts* counts = nullptr) {
  if (w.cols != x.rows) throw DimensionMismatchError("dense_gemm: W.cols must equal X.rows");
  if constexpr (std::is_same_v<T, std::int8_t>) {
    if (w.cols > kMaxInt8InnerDim) throw std::overflow_error("int8 inner dimension too large");
  }
  Matrix<accum_t<T>> y(w.rows, x.cols);
  detail::parallel_rows(w.rows, threads, [&](std::size_t i) {
    for (std::size_t t = 0; t < x.cols; ++t) {
      accum_t<T> acc{};
      for (std::size_t k = 0; k < w.cols; ++k) {
        acc += static_cast<accum_t<T>>(w(i, k)) * static_cast<accum_t<T>>(x(k, t));
      }
      y(i, t) = acc;
    }
    if (counts) counts->multiplies += static_cast<std::uint64_t>(x.cols) * w.cols;
  });
  return y;
}

// Structured-sparse product against lifted activations (one token per row of
// `lifted`). Every window contributes exactly hw_m multiply-accumulates.
template <typename T>
Matrix<accum_t<T>> sparse_gemm(const CompressedSparseMatrix<T>& c, const Matrix<T>& lifted,
                               int threads = 1, OpCounts* counts = nullptr) {
  const int m = c.hw_m();
  const int n = c.hw_n();
  if (lifted.cols != c.windows_per_row * static_cast<std::size_t>(n)) {
    throw DimensionMismatchError("lifted activation width does not match compressed weights");
  }
  if constexpr (std::is_same_v<T, std::int8_t>) {
    if (lifted.cols > kMaxInt8InnerDim) throw std::overflow_error("int8 inner dimension too large");
  }
  Matrix<accum_t<T>> y(c.rows, lifted.rows);
  detail::parallel_rows(c.rows, threads, [&](std::size_t i) {
    const T* vals = c.values.data() + i * c.windows_per_row * m;
    const std::uint8_t* meta = c.metadata.data() + i * c.windows_per_row * m;
    for (std::size_t t = 0; t < lifted.rows; ++t) {
      auto act = lifted.row(t);
      accum_t<T> acc{};
      for (std::size_t w = 0; w < c.windows_per_row; ++w) {
        for (int k = 0; k < m; ++k) {
          acc += static_cast<accum_t<T>>(vals[w * m + k]) *
                 static_cast<accum_t<T>>(act[w * n + meta[w * m + k]]);
        }
      }
      y(i, t) = acc;
    }
    if (counts) {
      counts->multiplies += static_cast<std::uint64_t>(lifted.rows) * c.windows_per_row * m;
    }
  });
  return y;
}

// int8 sparse product straight from packed quantized words.
inline Matrix<std::int32_t> sparse_gemm(const CompressedSparseMatrix<std::int8_t>& c,
                                        const QuantizedLiftedActivation& a, int threads = 1,
                                        OpCounts* counts = nullptr) {
  if (a.kind != QuantKind::int8) {
    throw DimensionMismatchError("packed-word sparse_gemm expects int8 activations");
  }
  if (!(c.pattern == a.pattern)) {
    throw DimensionMismatchError("weight and activation patterns differ");
  }
  const int m = c.hw_m();
  const int n = c.hw_n();
  if (a.lifted_cols() != c.windows_per_row * static_cast<std::size_t>(n)) {
    throw DimensionMismatchError("lifted activation width does not match compressed weights");
  }
  Matrix<std::int32_t> y(c.rows, a.rows);
  detail::parallel_rows(c.rows, threads, [&](std::size_t i) {
    const std::int8_t* vals = c.values.data() + i * c.windows_per_row * m;
    const std::uint8_t* meta = c.metadata.data() + i * c.windows_per_row * m;
    for (std::size_t t = 0; t < a.rows; ++t) {
      const std::uint32_t* words = a.payload.data() + t * a.words_per_row;
      std::int32_t acc = 0;
      for (std::size_t w = 0; w < c.windows_per_row; ++w) {
        const std::uint32_t word = words[w];
        for (int k = 0; k < m; ++k) {
          const auto b = static_cast<std::int8_t>(unpack_byte(word, meta[w * m + k]));
          acc += static_cast<std::int32_t>(vals[w * m + k]) * static_cast<std::int32_t>(b);
        }
      }
      y(i, t) = acc;
    }
    if (counts) counts->multiplies += static_cast<std::uint64_t>(a.rows) * c.windows_per_row * m;
  });
  return y;
}

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  bool exact = true;
};

// Lifts every token column of X for the sparse path.
template <typename T>
Matrix<T> lift_activations(const Matrix<T>& x, const WindowPlan& plan) {
  const auto& p = plan.pattern;
  if (x.rows % static_cast<std::size_t>(p.l) != 0) {
    throw DimensionMismatchError("activation inner dimension not divisible by block length");
  }
  const std::size_t groups = x.rows / static_cast<std::size_t>(p.l);
  Matrix<T> lifted(x.cols, groups * static_cast<std::size_t>(plan.window_count) * p.hw_n);
  std::vector<T> col(x.rows);
  for (std::size_t t = 0; t < x.cols; ++t) {
    for (std::size_t k = 0; k < x.rows; ++k) col[k] = x(k, t);
    auto lifted_col = lift_row<T>(col, plan);
    std::copy(lifted_col.begin(), lifted_col.end(), lifted.row(t).begin());
  }
  return lifted;
}

// Runs the dense product and the full sparse pipeline (pack -> compress ->
// lift -> sparse_gemm) on the same operands and compares elementwise.
// Integer inputs must agree exactly; real inputs report the reordering
// residual.
template <typename T>
EquivalenceReport check_equivalence(const Matrix<T>& w, const Matrix<T>& x,
                                    const SparsityPattern& pattern, int threads = 1) {
  if (w.cols != x.rows) throw DimensionMismatchError("W.cols must equal X.rows");
  const auto report = verify_compliance(w, pattern.z, pattern.l);
  if (!report.compliant) {
    throw NotCompliantError("weights violate pattern " + pattern.label() + " at row " +
                            std::to_string(report.first_violation->first));
  }
  const WindowPlan plan = plan_decomposition(pattern);
  const auto dense = dense_gemm(w, x, threads);
  const auto compressed = compress(pack_matrix(w, pattern, threads));
  const auto lifted = lift_activations(x, plan);
  const auto sparse = sparse_gemm(compressed, lifted, threads);

  EquivalenceReport out;
  for (std::size_t i = 0; i < dense.data.size(); ++i) {
    const bool equal = dense.data[i] == sparse.data[i];
    out.exact = out.exact && equal;
    const double diff = std::fabs(static_cast<double>(dense.data[i]) -
                                  static_cast<double>(sparse.data[i]));
    out.max_abs_diff = std::max(out.max_abs_diff, diff);
  }
  return out;
}

}  // namespace slsp

#pragma once

// Weight transform: greedy residual allocation.
//
// pack_row walks each source block's windows in order (group, window, offset)
// and assigns up to hw_m not-yet-used nonzeros to each window, writing each
// accepted value at the output slot matching its intra-window offset. A
// nonzero rejected by a full window has at least hw_m accepted values before
// it inside that window, so it sits in the overlap region and stays a
// candidate for the next window. The scan order is fixed, which makes the
// output deterministic and independent of row-level parallelism.

#include "slsp/detail/parallel.hpp"
#include "slsp/matrix.hpp"
#include "slsp/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace slsp {

struct ComplianceReport {
  bool compliant = true;
  // (row, window) of the first window exceeding the nonzero budget.
  std::optional<std::pair<std::size_t, std::size_t>> first_violation;
  // histogram[k] = number of windows holding exactly k nonzeros.
  std::vector<std::size_t> nonzero_histogram;
};

// Checks that every aligned n-window of every row has at most m nonzeros.
template <typename T>
ComplianceReport verify_compliance(std::size_t rows, std::size_t cols, std::span<const T> data,
                                   int m, int n) {
  if (n <= 0 || m <= 0) throw std::invalid_argument("verify_compliance: need 0 < m, 0 < n");
  if (cols % static_cast<std::size_t>(n) != 0) {
    throw DimensionMismatchError("column count " + std::to_string(cols) +
                                 " not divisible by window length " + std::to_string(n));
  }
  if (data.size() != rows * cols) throw DimensionMismatchError("buffer size does not match shape");
  ComplianceReport report;
  report.nonzero_histogram.assign(static_cast<std::size_t>(n) + 1, 0);
  const std::size_t windows = cols / static_cast<std::size_t>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = data.data() + r * cols;
    for (std::size_t w = 0; w < windows; ++w) {
      int nnz = 0;
      for (int d = 0; d < n; ++d) nnz += is_nonzero(row[w * n + d]) ? 1 : 0;
      ++report.nonzero_histogram[static_cast<std::size_t>(nnz)];
      if (nnz > m && report.compliant) {
        report.compliant = false;
        report.first_violation = std::make_pair(r, w);
      }
    }
  }
  return report;
}

template <typename T>
ComplianceReport verify_compliance(const Matrix<T>& mx, int m, int n) {
  return verify_compliance<T>(mx.rows, mx.cols, std::span<const T>(mx.data), m, n);
}

template <typename T>
ComplianceReport verify_compliance(const SlidedMatrix<T>& mx, int m, int n) {
  return verify_compliance<T>(mx.rows, mx.cols_expanded, std::span<const T>(mx.data), m, n);
}

namespace detail {

// Observer for packer forwarding behavior; test-only hook.
using RejectionObserver =
    std::function<void(std::size_t group, int window, std::size_t src_index)>;

// Greedy placement for one source row. Windows may be capped at
// `window_limit` (< plan.window_count) to probe the capacity argument; the
// return value is the index of the first unassigned nonzero, if any.
template <typename T>
std::optional<std::size_t> greedy_pack_row(std::span<const T> src, const WindowPlan& plan,
                                           std::span<T> dst, int window_limit,
                                           const RejectionObserver* observer = nullptr) {
  const auto& p = plan.pattern;
  const std::size_t l = static_cast<std::size_t>(p.l);
  const std::size_t groups = src.size() / l;
  const std::size_t out_group = static_cast<std::size_t>(plan.window_count) * p.hw_n;
  std::fill(dst.begin(), dst.end(), T{});
  std::vector<char> used(l);
  std::optional<std::size_t> leftover;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * l;
    std::fill(used.begin(), used.end(), 0);
    for (int w = 0; w < window_limit; ++w) {
      const std::size_t b = static_cast<std::size_t>(plan.window_starts[w]);
      int cnt = 0;
      for (int d = 0; d < p.hw_n; ++d) {
        const std::size_t k = b + static_cast<std::size_t>(d);
        if (!is_nonzero(src[base + k]) || used[k]) continue;
        if (cnt < p.hw_m) {
          dst[g * out_group + static_cast<std::size_t>(w) * p.hw_n + d] = src[base + k];
          used[k] = 1;
          ++cnt;
        } else if (observer) {
          (*observer)(g, w, base + k);
        }
      }
    }
    if (!leftover) {
      for (std::size_t k = 0; k < l; ++k) {
        if (is_nonzero(src[base + k]) && !used[k]) {
          leftover = base + k;
          break;
        }
      }
    }
  }
  return leftover;
}

template <typename T>
std::optional<std::size_t> first_overfull_block(std::span<const T> src, const SparsityPattern& p) {
  const std::size_t l = static_cast<std::size_t>(p.l);
  for (std::size_t g = 0; g * l < src.size(); ++g) {
    int nnz = 0;
    for (std::size_t k = 0; k < l; ++k) nnz += is_nonzero(src[g * l + k]) ? 1 : 0;
    if (nnz > p.z) return g;
  }
  return std::nullopt;
}

template <typename T>
auto magnitude(T v) {
  if constexpr (std::is_integral_v<T>) {
    return std::llabs(static_cast<long long>(v));
  } else {
    return std::fabs(static_cast<double>(v));
  }
}

}  // namespace detail

// Packs one Z:L-compliant row into concatenated hardware windows.
// Output length: plan.window_count * hw_n per source block.
template <typename T>
std::vector<T> pack_row(std::span<const T> src, const WindowPlan& plan,
                        const detail::RejectionObserver* observer = nullptr) {
  const auto& p = plan.pattern;
  if (src.size() % static_cast<std::size_t>(p.l) != 0) {
    throw DimensionMismatchError("row length " + std::to_string(src.size()) +
                                 " not divisible by block length " + std::to_string(p.l));
  }
  if (auto block = detail::first_overfull_block(src, p)) {
    throw NotCompliantError("block " + std::to_string(*block) + " exceeds " +
                            std::to_string(p.z) + " nonzeros");
  }
  const std::size_t groups = src.size() / static_cast<std::size_t>(p.l);
  std::vector<T> dst(groups * static_cast<std::size_t>(plan.window_count) * p.hw_n);
  if (auto left = detail::greedy_pack_row<T>(src, plan, dst, plan.window_count, observer)) {
    throw NotCompliantError("nonzero at index " + std::to_string(*left) +
                            " left unassigned after the last window");
  }
  return dst;
}

// Row-wise packer over a whole weight matrix. Rows are independent; the
// result is identical at any thread count.
template <typename T>
SlidedMatrix<T> pack_matrix(const Matrix<T>& w, const SparsityPattern& pattern, int threads = 1) {
  const WindowPlan plan = plan_decomposition(pattern);
  if (w.cols % static_cast<std::size_t>(pattern.l) != 0) {
    throw DimensionMismatchError("matrix cols " + std::to_string(w.cols) +
                                 " not divisible by block length " + std::to_string(pattern.l));
  }
  const std::size_t groups = w.cols / static_cast<std::size_t>(pattern.l);
  SlidedMatrix<T> out;
  out.rows = w.rows;
  out.cols_expanded = groups * static_cast<std::size_t>(plan.window_count) * pattern.hw_n;
  out.pattern = pattern;
  out.data.assign(out.rows * out.cols_expanded, T{});

  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> row_errors(w.rows);
  detail::parallel_rows(w.rows, threads, [&](std::size_t r) {
    auto src = w.row(r);
    if (auto block = detail::first_overfull_block<T>(src, pattern)) {
      row_errors[r] = std::make_pair(r, *block);
      return;
    }
    if (auto left = detail::greedy_pack_row<T>(src, plan, out.row(r), plan.window_count)) {
      row_errors[r] = std::make_pair(r, *left / static_cast<std::size_t>(pattern.l));
    }
  });
  for (const auto& err : row_errors) {
    if (err) {
      throw NotCompliantError("row " + std::to_string(err->first) + ", block " +
                              std::to_string(err->second) + " violates pattern " +
                              pattern.label());
    }
  }
  return out;
}

// Inverse of pack_matrix for well-formed slided data: scatters each window
// value back to source index l*g + stride*window + offset. Every source
// nonzero was placed exactly once, so this reconstructs the original matrix.
template <typename T>
Matrix<T> unslide(const SlidedMatrix<T>& s) {
  const WindowPlan plan = plan_decomposition(s.pattern);
  const auto& p = s.pattern;
  const std::size_t out_group = static_cast<std::size_t>(plan.window_count) * p.hw_n;
  if (s.cols_expanded % out_group != 0) {
    throw DimensionMismatchError("slided width inconsistent with pattern window geometry");
  }
  const std::size_t groups = s.cols_expanded / out_group;
  Matrix<T> w(s.rows, groups * static_cast<std::size_t>(p.l));
  for (std::size_t r = 0; r < s.rows; ++r) {
    auto src = s.row(r);
    auto dst = w.row(r);
    for (std::size_t g = 0; g < groups; ++g) {
      for (int j = 0; j < plan.window_count; ++j) {
        for (int d = 0; d < p.hw_n; ++d) {
          const T v = src[g * out_group + static_cast<std::size_t>(j) * p.hw_n + d];
          if (!is_nonzero(v)) continue;
          dst[g * p.l + static_cast<std::size_t>(plan.window_starts[j]) + d] = v;
        }
      }
    }
  }
  return w;
}

// Zeroes the l - z smallest-magnitude elements of every aligned block.
// Among equal magnitudes the lower index is pruned first; the result is
// always Z:L-compliant.
template <typename T>
Matrix<T> magnitude_prune(const Matrix<T>& w, const SparsityPattern& pattern) {
  if (w.cols % static_cast<std::size_t>(pattern.l) != 0) {
    throw DimensionMismatchError("matrix cols " + std::to_string(w.cols) +
                                 " not divisible by block length " + std::to_string(pattern.l));
  }
  Matrix<T> out = w;
  const std::size_t l = static_cast<std::size_t>(pattern.l);
  const std::size_t prune = l - static_cast<std::size_t>(pattern.z);
  if (prune == 0) return out;
  std::vector<std::size_t> order(l);
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    for (std::size_t g = 0; g * l < row.size(); ++g) {
      auto block = row.subspan(g * l, l);
      for (std::size_t k = 0; k < l; ++k) order[k] = k;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detail::magnitude(block[a]) < detail::magnitude(block[b]);
      });
      for (std::size_t k = 0; k < prune; ++k) block[order[k]] = T{};
    }
  }
  return out;
}

}  // namespace slsp

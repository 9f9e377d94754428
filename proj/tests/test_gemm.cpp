#include "slsp/gemm.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

using namespace slsp;
using slsp::testing::Rng;

namespace {

template <typename T>
SlidedMatrix<T> make_slided(std::vector<T> data, const SparsityPattern& p) {
  SlidedMatrix<T> s;
  s.rows = 1;
  s.cols_expanded = data.size();
  s.pattern = p;
  s.data = std::move(data);
  return s;
}

// Independent dense oracle with a different loop nest (k outermost).
Matrix<std::int32_t> triple_loop_oracle(const Matrix<std::int8_t>& w,
                                        const Matrix<std::int8_t>& x) {
  Matrix<std::int32_t> y(w.rows, x.cols);
  for (std::size_t k = 0; k < w.cols; ++k) {
    for (std::size_t i = 0; i < w.rows; ++i) {
      for (std::size_t t = 0; t < x.cols; ++t) {
        y(i, t) += static_cast<std::int32_t>(w(i, k)) * static_cast<std::int32_t>(x(k, t));
      }
    }
  }
  return y;
}

}  // namespace

TEST(Compress, WindowExamples) {
  const SparsityPattern p(2, 4);
  const auto c1 = compress(make_slided<int>({1, 2, 0, 0}, p));
  EXPECT_EQ(c1.values, (std::vector<int>{1, 2}));
  EXPECT_EQ(c1.metadata, (std::vector<std::uint8_t>{0, 1}));

  const auto c2 = compress(make_slided<int>({3, 0, 4, 0}, p));
  EXPECT_EQ(c2.values, (std::vector<int>{3, 4}));
  EXPECT_EQ(c2.metadata, (std::vector<std::uint8_t>{0, 2}));

  const auto c3 = compress(make_slided<int>({0, 0, 0, 0}, p));
  EXPECT_EQ(c3.values, (std::vector<int>{0, 0}));
  EXPECT_EQ(c3.metadata, (std::vector<std::uint8_t>{0, 1}));

  const auto c4 = compress(make_slided<int>({0, 0, 7, 0}, p));
  EXPECT_EQ(c4.values, (std::vector<int>{0, 7}));
  EXPECT_EQ(c4.metadata, (std::vector<std::uint8_t>{0, 2}));
}

TEST(Compress, RejectsNonCompliantWindow) {
  EXPECT_THROW(compress(make_slided<int>({1, 2, 3, 0}, SparsityPattern(2, 4))),
               NotCompliantError);
}

TEST(Decompress, Examples) {
  CompressedSparseMatrix<int> c;
  c.rows = 1;
  c.windows_per_row = 1;
  c.pattern = SparsityPattern(2, 4);
  c.values = {5, 6};
  c.metadata = {1, 3};
  EXPECT_EQ(decompress(c).data, (std::vector<int>{0, 5, 0, 6}));

  c.metadata = {3, 1};  // not increasing
  EXPECT_THROW(decompress(c), MalformedMetadataError);
  c.metadata = {1, 4};  // out of range
  EXPECT_THROW(decompress(c), MalformedMetadataError);
  c.metadata = {1, 1};  // duplicate
  EXPECT_THROW(decompress(c), MalformedMetadataError);
}

TEST(Compress, RoundTripRandomWindows) {
  Rng rng(3);
  std::uniform_int_distribution<int> val(-50, 50);
  const SparsityPattern p(2, 4);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int> window(4, 0);
    const int nnz = static_cast<int>(rng() % 3);
    std::vector<int> idx = {0, 1, 2, 3};
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < nnz; ++k) {
      int v = val(rng);
      window[idx[k]] = v == 0 ? 1 : v;
    }
    const auto s = make_slided<int>(std::move(window), p);
    ASSERT_EQ(decompress(compress(s)).data, s.data);
  }
}

TEST(Compress, RoundTripPackedMatrices) {
  Rng rng(4);
  for (const auto& p : slsp::testing::family_patterns()) {
    const auto w = slsp::testing::compliant_matrix_int8(p, 32, 4, rng);
    const auto s = pack_matrix(w, p);
    const auto back = decompress(compress(s));
    ASSERT_EQ(back.data, s.data) << p.label();
    ASSERT_EQ(back.cols_expanded, s.cols_expanded);
  }
}

TEST(SparseGemm, WorkedExample) {
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(1, 8, {1, 2, 3, 0, 4, 5, 0, 6});
  Matrix<std::int8_t> x(8, 1);
  for (int k = 0; k < 8; ++k) x(k, 0) = static_cast<std::int8_t>(k + 1);

  const auto c = compress(pack_matrix(w, p));
  const auto lifted = lift_activations(x, plan_decomposition(p));
  const auto y = sparse_gemm(c, lifted);
  ASSERT_EQ(y.rows, 1u);
  ASSERT_EQ(y.cols, 1u);
  EXPECT_EQ(y(0, 0), 112);
  EXPECT_EQ(dense_gemm(w, x)(0, 0), 112);
}

TEST(SparseGemm, ZeroMatrix) {
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(4, 16);
  Matrix<std::int8_t> x(16, 3, std::vector<std::int8_t>(48, 1));
  const auto y = sparse_gemm(compress(pack_matrix(w, p)), lift_activations(x, plan_decomposition(p)));
  for (const auto v : y.data) EXPECT_EQ(v, 0);
}

TEST(SparseGemm, SingleWindowGather) {
  CompressedSparseMatrix<int> c;
  c.rows = 1;
  c.windows_per_row = 1;
  c.pattern = SparsityPattern(2, 4);
  c.values = {1, 0};
  c.metadata = {0, 1};
  Matrix<int> lifted(1, 4, {7, 9, 3, 5});
  EXPECT_EQ(sparse_gemm(c, lifted)(0, 0), 7);
}

TEST(SparseGemm, WidthMismatchRejected) {
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(1, 8, {1, 2, 0, 0, 4, 5, 0, 6});
  const auto c = compress(pack_matrix(w, p));
  Matrix<std::int8_t> lifted(1, 8);
  EXPECT_THROW(sparse_gemm(c, lifted), DimensionMismatchError);
}

TEST(DenseGemm, Examples) {
  Matrix<int> w(1, 4, {1, 0, 2, 0});
  Matrix<int> x(4, 1, {1, 1, 1, 1});
  EXPECT_EQ(dense_gemm(w, x)(0, 0), 3);

  Matrix<int> eye(2, 2, {1, 0, 0, 1});
  Matrix<int> any(2, 3, {4, 5, 6, 7, 8, 9});
  const auto y = dense_gemm(eye, any);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(y(i, t), static_cast<long long>(any(i, t)));
  }
}

TEST(DenseGemm, MatchesIndependentOracle) {
  Rng rng(5);
  const auto w = slsp::testing::random_matrix_int8(16, 24, rng);
  const auto x = slsp::testing::random_matrix_int8(24, 7, rng);
  const auto y = dense_gemm(w, x);
  const auto ref = triple_loop_oracle(w, x);
  EXPECT_EQ(y.data, ref.data);
}

TEST(DenseGemm, ShapeMismatchRejected) {
  Matrix<int> w(2, 4);
  Matrix<int> x(5, 2);
  EXPECT_THROW(dense_gemm(w, x), DimensionMismatchError);
}

TEST(CheckEquivalence, Int8Exact) {
  Rng rng(6);
  const SparsityPattern p(6, 8);
  const auto w = slsp::testing::compliant_matrix_int8(p, 8, 2, rng);
  const auto x = slsp::testing::random_matrix_int8(16, 4, rng);
  const auto report = check_equivalence(w, x, p);
  EXPECT_TRUE(report.exact);
  EXPECT_EQ(report.max_abs_diff, 0.0);
}

TEST(CheckEquivalence, ZeroWeightsTriviallyExact) {
  Rng rng(7);
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(4, 16);
  const auto x = slsp::testing::random_matrix_int8(16, 4, rng);
  EXPECT_TRUE(check_equivalence(w, x, p).exact);
}

TEST(CheckEquivalence, RejectsNonCompliantWeights) {
  Rng rng(8);
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(1, 8, {1, 1, 1, 1, 1, 1, 1, 1});
  const auto x = slsp::testing::random_matrix_int8(8, 2, rng);
  EXPECT_THROW(check_equivalence(w, x, p), NotCompliantError);
}

TEST(CheckEquivalence, Fp32ReorderingResidualBounded) {
  Rng rng(9);
  const SparsityPattern p(6, 8);
  Matrix<float> w(64, 128);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  // Compliant rows: zero out two smallest per block via magnitude_prune.
  for (auto& v : w.data) v = dist(rng);
  w = magnitude_prune(w, p);
  Matrix<float> x(128, 32);
  for (auto& v : x.data) v = dist(rng);

  const auto report = check_equivalence(w, x, p);
  double max_row_norm = 0.0, max_col_norm = 0.0;
  for (std::size_t i = 0; i < w.rows; ++i) {
    double s = 0;
    for (const float v : w.row(i)) s += static_cast<double>(v) * v;
    max_row_norm = std::max(max_row_norm, std::sqrt(s));
  }
  for (std::size_t t = 0; t < x.cols; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < x.rows; ++k) s += static_cast<double>(x(k, t)) * x(k, t);
    max_col_norm = std::max(max_col_norm, std::sqrt(s));
  }
  EXPECT_LE(report.max_abs_diff, std::ldexp(max_row_norm * max_col_norm, -18));
}

TEST(SparseGemm, MultisetOfProductsPreserved) {
  Rng rng(10);
  const SparsityPattern p(6, 8);
  const auto w = slsp::testing::compliant_matrix_int8(p, 2, 1, rng);
  const auto x = slsp::testing::random_matrix_int8(8, 2, rng);
  const auto plan = plan_decomposition(p);
  const auto c = compress(pack_matrix(w, p));
  const auto lifted = lift_activations(x, plan);

  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t t = 0; t < x.cols; ++t) {
      std::vector<int> dense_products;
      for (std::size_t k = 0; k < w.cols; ++k) {
        const int prod = static_cast<int>(w(i, k)) * static_cast<int>(x(k, t));
        if (prod != 0) dense_products.push_back(prod);
      }
      std::vector<int> sparse_products;
      const int m = c.hw_m();
      for (std::size_t win = 0; win < c.windows_per_row; ++win) {
        for (int k = 0; k < m; ++k) {
          const std::size_t slot = (i * c.windows_per_row + win) * m + k;
          const int prod = static_cast<int>(c.values[slot]) *
                           static_cast<int>(lifted(t, win * 4 + c.metadata[slot]));
          if (prod != 0) sparse_products.push_back(prod);
        }
      }
      std::sort(dense_products.begin(), dense_products.end());
      std::sort(sparse_products.begin(), sparse_products.end());
      ASSERT_EQ(dense_products, sparse_products);
    }
  }
}

TEST(SparseGemm, DeterministicAcrossThreads) {
  Rng rng(11);
  const SparsityPattern p(8, 10);
  const auto w = slsp::testing::compliant_matrix_int8(p, 32, 4, rng);
  const auto x = slsp::testing::random_matrix_int8(40, 8, rng);
  const auto plan = plan_decomposition(p);
  const auto c = compress(pack_matrix(w, p));
  const auto lifted = lift_activations(x, plan);
  const auto y1 = sparse_gemm(c, lifted, 1);
  const auto y4 = sparse_gemm(c, lifted, 4);
  EXPECT_EQ(y1.data, y4.data);
  EXPECT_EQ(dense_gemm(w, x, 1).data, dense_gemm(w, x, 4).data);
}

TEST(OpCounts, SparseOverDenseRatioMatchesExpansion) {
  Rng rng(12);
  for (const auto& p : slsp::testing::family_patterns()) {
    const auto w = slsp::testing::compliant_matrix_int8(p, 16, 2, rng);
    const auto x = slsp::testing::random_matrix_int8(w.cols, 5, rng);
    OpCounts dense_counts, sparse_counts;
    dense_gemm(w, x, 1, &dense_counts);
    const auto c = compress(pack_matrix(w, p));
    const auto lifted = lift_activations(x, plan_decomposition(p));
    sparse_gemm(c, lifted, 1, &sparse_counts);
    const Ratio ratio(static_cast<std::int64_t>(sparse_counts.multiplies.load()),
                      static_cast<std::int64_t>(dense_counts.multiplies.load()));
    EXPECT_EQ(ratio, expansion_factor(p) * Ratio(p.hw_m, p.hw_n)) << p.label();
  }
}

TEST(SparseGemm, QuantizedWordPathMatchesDense) {
  Rng rng(13);
  const SparsityPattern p(6, 8);
  const auto w = slsp::testing::compliant_matrix_int8(p, 12, 3, rng);
  Matrix<float> x_real(5, w.cols);  // token rows
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  for (auto& v : x_real.data) v = dist(rng);

  const auto fused = fused_quant_slide(x_real, p, QuantKind::int8);
  const auto c = compress(pack_matrix(w, p));
  const auto sparse = sparse_gemm(c, fused);

  // Dense side: quantize each token row (no lifting) and multiply exactly.
  Matrix<std::int8_t> q(w.cols, x_real.rows);
  for (std::size_t t = 0; t < x_real.rows; ++t) {
    const auto qr = quantize_row<float>(x_real.row(t), QuantKind::int8);
    for (std::size_t k = 0; k < w.cols; ++k) {
      q(k, t) = static_cast<std::int8_t>(qr.bytes[k]);
    }
  }
  const auto dense = dense_gemm(w, q);
  ASSERT_EQ(dense.rows, sparse.rows);
  ASSERT_EQ(dense.cols, sparse.cols);
  EXPECT_EQ(dense.data, sparse.data);
}

TEST(SparseGemm, QuantizedPathRejectsPatternMismatch) {
  Rng rng(14);
  const SparsityPattern p68(6, 8);
  const SparsityPattern p46(4, 6);
  const auto w = slsp::testing::compliant_matrix_int8(p68, 2, 3, rng);
  Matrix<float> x(2, 24);
  const auto fused = fused_quant_slide(x, p46, QuantKind::int8);
  const auto c = compress(pack_matrix(w, p68));
  EXPECT_THROW(sparse_gemm(c, fused), DimensionMismatchError);
}

TEST(SparseGemm, Fp8PathWithinTolerance) {
  Rng rng(15);
  const SparsityPattern p(6, 8);
  Matrix<float> w_real(8, 16);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : w_real.data) v = dist(rng);
  const auto w = magnitude_prune(w_real, p);
  Matrix<float> x(4, 16);
  for (auto& v : x.data) v = dist(rng);

  const auto fused = fused_quant_slide(x, p, QuantKind::fp8e4m3);
  // Decode the fp8 activation back to floats and run the float sparse path.
  Matrix<float> lifted(fused.rows, fused.lifted_cols());
  for (std::size_t t = 0; t < fused.rows; ++t) {
    for (std::size_t k = 0; k < fused.lifted_cols(); ++k) {
      lifted(t, k) =
          static_cast<float>(dequant_value(fused.byte_at(t, k), QuantKind::fp8e4m3)) *
          fused.scales[t];
    }
  }
  const auto c = compress(pack_matrix(w, p));
  const auto sparse = sparse_gemm(c, lifted);

  // Reference: dense product against the original activations.
  Matrix<float> xt(x.cols, x.rows);
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t k = 0; k < x.cols; ++k) xt(k, t) = x(t, k);
  }
  const auto dense = dense_gemm(w, xt);
  for (std::size_t i = 0; i < dense.data.size(); ++i) {
    // e4m3 carries ~2 decimal digits; the row dot has 16 terms of order 1.
    ASSERT_NEAR(static_cast<double>(sparse.data[i]), static_cast<double>(dense.data[i]), 0.5);
  }
}

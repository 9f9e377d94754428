#include "slsp/pack.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

using namespace slsp;
using slsp::testing::Rng;

namespace {

// Dense-dot oracle: the packed row against the lifted activation must
// reproduce dot(w, x) for any x.
template <typename T>
long long window_dot(const std::vector<T>& packed, const std::vector<T>& x,
                     const WindowPlan& plan) {
  const auto& p = plan.pattern;
  long long acc = 0;
  const std::size_t groups = x.size() / static_cast<std::size_t>(p.l);
  for (std::size_t g = 0; g < groups; ++g) {
    for (int j = 0; j < plan.window_count; ++j) {
      const std::size_t out = (g * plan.window_count + j) * static_cast<std::size_t>(p.hw_n);
      const std::size_t b = g * p.l + static_cast<std::size_t>(plan.window_starts[j]);
      for (int d = 0; d < p.hw_n; ++d) {
        acc += static_cast<long long>(packed[out + d]) * static_cast<long long>(x[b + d]);
      }
    }
  }
  return acc;
}

template <typename T>
long long dense_dot(const std::vector<T>& w, const std::vector<T>& x) {
  long long acc = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    acc += static_cast<long long>(w[k]) * static_cast<long long>(x[k]);
  }
  return acc;
}

}  // namespace

TEST(PackRow, WorkedExample) {
  const SparsityPattern p(6, 8);
  const auto plan = plan_decomposition(p);
  const std::vector<int> w = {1, 2, 3, 0, 4, 5, 0, 6};
  const auto packed = pack_row<int>(w, plan);
  EXPECT_EQ(packed, (std::vector<int>{1, 2, 0, 0, 3, 0, 4, 0, 0, 5, 0, 6}));

  std::vector<int> x(8);
  std::iota(x.begin(), x.end(), 1);
  EXPECT_EQ(dense_dot(w, x), 112);
  EXPECT_EQ(window_dot(packed, x, plan), 112);
}

TEST(PackRow, IdentityPattern) {
  const auto plan = plan_decomposition(SparsityPattern(2, 4));
  const std::vector<int> w = {1, 0, 2, 0};
  EXPECT_EQ(pack_row<int>(w, plan), w);
}

TEST(PackRow, AllZeros) {
  const auto plan = plan_decomposition(SparsityPattern(6, 8));
  const std::vector<int> w(8, 0);
  EXPECT_EQ(pack_row<int>(w, plan), std::vector<int>(12, 0));
}

TEST(PackRow, ResidualForwardingExample) {
  const auto plan = plan_decomposition(SparsityPattern(6, 8));
  const std::vector<int> w = {1, 1, 1, 1, 1, 1, 0, 0};
  const auto packed = pack_row<int>(w, plan);
  EXPECT_EQ(packed, (std::vector<int>{1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0}));
}

TEST(PackRow, RejectsOverfullBlock) {
  const auto plan = plan_decomposition(SparsityPattern(6, 8));
  const std::vector<int> w = {1, 1, 1, 1, 1, 1, 1, 0};
  EXPECT_THROW(pack_row<int>(w, plan), NotCompliantError);
}

TEST(PackRow, RejectsBadLength) {
  const auto plan = plan_decomposition(SparsityPattern(6, 8));
  const std::vector<int> w(9, 0);
  EXPECT_THROW(pack_row<int>(w, plan), DimensionMismatchError);
}

TEST(PackRow, NegativeZeroIsZero) {
  const auto plan = plan_decomposition(SparsityPattern(6, 8));
  const std::vector<double> w = {-0.0, -0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const auto packed = pack_row<double>(w, plan);
  int nnz = 0;
  for (const double v : packed) nnz += is_nonzero(v) ? 1 : 0;
  EXPECT_EQ(nnz, 6);
}

TEST(PackRow, LosslessDotProperty) {
  Rng rng(11);
  std::uniform_int_distribution<int> xv(-9, 9);
  for (const auto& p : slsp::testing::family_patterns()) {
    const auto plan = plan_decomposition(p);
    for (int trial = 0; trial < 10000; ++trial) {
      const std::size_t groups = 1 + trial % 3;
      std::vector<std::int8_t> w8 = slsp::testing::compliant_row_int8(p, groups, rng);
      std::vector<int> w(w8.begin(), w8.end());
      std::vector<int> x(w.size());
      for (auto& v : x) v = xv(rng);
      const auto packed = pack_row<int>(w, plan);
      ASSERT_EQ(window_dot(packed, x, plan), dense_dot(w, x));
    }
  }
}

TEST(PackRow, UsedOnceAndCapacityAccounting) {
  Rng rng(12);
  const SparsityPattern p(6, 8);
  const auto plan = plan_decomposition(p);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto w = slsp::testing::compliant_row_int8(p, 2, rng);
    const auto packed = pack_row<std::int8_t>(w, plan);
    for (std::size_t g = 0; g < 2; ++g) {
      std::vector<int> src, dst;
      for (int k = 0; k < p.l; ++k) {
        if (is_nonzero(w[g * p.l + k])) src.push_back(w[g * p.l + k]);
      }
      const std::size_t out_group = static_cast<std::size_t>(plan.window_count) * p.hw_n;
      for (std::size_t k = 0; k < out_group; ++k) {
        if (is_nonzero(packed[g * out_group + k])) dst.push_back(packed[g * out_group + k]);
      }
      std::sort(src.begin(), src.end());
      std::sort(dst.begin(), dst.end());
      ASSERT_EQ(src, dst);  // nonzero multiset preserved, each placed exactly once
      for (int j = 0; j < plan.window_count; ++j) {
        int nnz = 0;
        for (int d = 0; d < p.hw_n; ++d) {
          nnz += is_nonzero(packed[g * out_group + j * p.hw_n + d]) ? 1 : 0;
        }
        ASSERT_LE(nnz, p.hw_m);
      }
    }
  }
}

TEST(PackRow, RejectedNonzerosLandInNextWindow) {
  Rng rng(13);
  const SparsityPattern p(6, 8);
  const auto plan = plan_decomposition(p);
  int rejections = 0;
  const detail::RejectionObserver observer = [&](std::size_t g, int window, std::size_t idx) {
    ++rejections;
    ASSERT_LT(window + 1, plan.window_count);
    const std::size_t in_block = idx - g * p.l;
    ASSERT_GE(in_block, static_cast<std::size_t>(plan.window_starts[window + 1]));
  };
  for (int trial = 0; trial < 2000; ++trial) {
    const auto w = slsp::testing::compliant_row_int8(p, 2, rng);
    pack_row<std::int8_t>(w, plan, &observer);
  }
  EXPECT_GT(rejections, 0);
}

TEST(PackRow, WindowCountSharpness) {
  for (const int n : {3, 4, 5, 8}) {
    const SparsityPattern p(2 * n - 2, 2 * n);
    const auto plan = plan_decomposition(p);
    ASSERT_EQ(plan.window_count, n - 1);
    // Maximal block: 2n-2 nonzeros, zeros at the last two positions.
    std::vector<int> w(2 * n, 1);
    w[2 * n - 1] = 0;
    w[2 * n - 2] = 0;
    EXPECT_NO_THROW(pack_row<int>(w, plan));
    // One fewer window leaves a residual nonzero, matching the capacity
    // arithmetic 2(n-2) < 2n-2.
    std::vector<int> out(static_cast<std::size_t>(plan.window_count) * p.hw_n);
    const auto leftover =
        detail::greedy_pack_row<int>(w, plan, out, plan.window_count - 1);
    EXPECT_TRUE(leftover.has_value());
    EXPECT_LT((n - 2) * p.hw_m, p.z);
  }
}

TEST(PackMatrix, SingleRowMatchesPackRow) {
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(1, 8, {1, 2, 3, 0, 4, 5, 0, 6});
  const auto s = pack_matrix(w, p);
  EXPECT_EQ(s.rows, 1u);
  EXPECT_EQ(s.cols_expanded, 12u);
  EXPECT_EQ(s.data, (std::vector<std::int8_t>{1, 2, 0, 0, 3, 0, 4, 0, 0, 5, 0, 6}));
}

TEST(PackMatrix, IdentityPatternRepackUnchanged) {
  Rng rng(21);
  const SparsityPattern p(2, 4);
  const auto w = slsp::testing::compliant_matrix_int8(p, 16, 4, rng);
  const auto s = pack_matrix(w, p);
  EXPECT_EQ(s.cols_expanded, w.cols);
  EXPECT_EQ(s.data, w.data);
}

TEST(PackMatrix, RandomMatrixCompliantAndInvertible) {
  Rng rng(22);
  const SparsityPattern p(6, 8);
  const auto w = slsp::testing::compliant_matrix_int8(p, 128, 512, rng);  // 128 x 4096
  const auto s = pack_matrix(w, p, 2);
  EXPECT_EQ(s.cols_expanded, 6144u);
  EXPECT_TRUE(verify_compliance(s, p.hw_m, p.hw_n).compliant);
  EXPECT_EQ(unslide(s).data, w.data);
}

TEST(PackMatrix, DeterministicAcrossThreadCounts) {
  Rng rng(23);
  const SparsityPattern p(6, 8);
  const auto w = slsp::testing::compliant_matrix_int8(p, 64, 16, rng);
  const auto s1 = pack_matrix(w, p, 1);
  const auto s2 = pack_matrix(w, p, 2);
  const auto s4 = pack_matrix(w, p, 4);
  EXPECT_EQ(s1.data, s2.data);
  EXPECT_EQ(s1.data, s4.data);
}

TEST(PackMatrix, ReportsRowAndBlockOfViolation) {
  const SparsityPattern p(6, 8);
  Matrix<std::int8_t> w(2, 16);
  for (int k = 0; k < 7; ++k) w(1, 8 + k) = 1;  // row 1, block 1 has 7 nonzeros
  try {
    pack_matrix(w, p);
    FAIL() << "expected NotCompliantError";
  } catch (const NotCompliantError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 1"), std::string::npos);
    EXPECT_NE(msg.find("block 1"), std::string::npos);
  }
}

TEST(VerifyCompliance, Examples) {
  const std::vector<int> ok = {1, 2, 0, 0, 3, 0, 4, 0};
  const auto r1 = verify_compliance<int>(1, 8, ok, 2, 4);
  EXPECT_TRUE(r1.compliant);
  EXPECT_FALSE(r1.first_violation.has_value());
  EXPECT_EQ(r1.nonzero_histogram[2], 2u);

  const std::vector<int> bad = {1, 2, 3, 0};
  const auto r2 = verify_compliance<int>(1, 4, bad, 2, 4);
  EXPECT_FALSE(r2.compliant);
  EXPECT_EQ(r2.first_violation, std::make_pair(std::size_t{0}, std::size_t{0}));

  EXPECT_THROW((verify_compliance<int>(1, 6, std::vector<int>(6), 2, 4)),
               DimensionMismatchError);
}

TEST(VerifyCompliance, PackedRowsAlwaysPass) {
  Rng rng(31);
  for (const auto& p : slsp::testing::family_patterns()) {
    const auto w = slsp::testing::compliant_matrix_int8(p, 512, 4, rng);
    const auto s = pack_matrix(w, p);
    EXPECT_TRUE(verify_compliance(s, 2, 4).compliant) << p.label();
  }
}

TEST(MagnitudePrune, WorkedExample) {
  const SparsityPattern p(6, 8);
  Matrix<double> w(1, 8, {5, -1, 3, 2, -4, 6, 0.5, -2});
  const auto pruned = magnitude_prune(w, p);
  EXPECT_EQ(pruned.data, (std::vector<double>{5, 0, 3, 2, -4, 6, 0, -2}));
}

TEST(MagnitudePrune, AllZeroAndAlreadySparseUnchanged) {
  const SparsityPattern p(6, 8);
  Matrix<int> zeros(1, 8);
  EXPECT_EQ(magnitude_prune(zeros, p).data, zeros.data);
  Matrix<int> sparse(1, 8, {1, 2, 3, 0, 4, 5, 0, 6});
  EXPECT_EQ(magnitude_prune(sparse, p).data, sparse.data);
}

TEST(MagnitudePrune, TiesPruneLowerIndexFirst) {
  const SparsityPattern p(6, 8);
  Matrix<int> w(1, 8, {3, 3, 3, 3, 3, 3, 3, 3});
  const auto pruned = magnitude_prune(w, p);
  EXPECT_EQ(pruned.data, (std::vector<int>{0, 0, 3, 3, 3, 3, 3, 3}));
}

TEST(MagnitudePrune, MatchesExhaustiveOracle) {
  Rng rng(41);
  const SparsityPattern p(6, 8);
  std::uniform_int_distribution<int> val(-50, 50);
  for (int trial = 0; trial < 500; ++trial) {
    Matrix<int> w(1, 8);
    for (auto& v : w.data) v = val(rng);
    const auto pruned = magnitude_prune(w, p);
    long long zeroed = 0;
    for (int k = 0; k < 8; ++k) {
      if (pruned.data[k] == 0 && w.data[k] != 0) zeroed += std::abs(w.data[k]);
      if (pruned.data[k] != 0) {
        ASSERT_EQ(pruned.data[k], w.data[k]);
      }
    }
    // Exhaustive oracle: minimum total magnitude over all 2-element prunes.
    long long best = -1;
    for (int a = 0; a < 8; ++a) {
      for (int b = a + 1; b < 8; ++b) {
        const long long cost =
            std::abs(w.data[a]) + std::abs(w.data[b]);
        if (best < 0 || cost < best) best = cost;
      }
    }
    ASSERT_EQ(zeroed, best);
    ASSERT_TRUE(verify_compliance(pruned, p.z, p.l).compliant);
  }
}

TEST(MagnitudePrune, RandomDenseBecomesCompliant) {
  Rng rng(42);
  for (const auto& p : slsp::testing::family_patterns()) {
    auto w = slsp::testing::random_matrix_int8(32, static_cast<std::size_t>(p.l) * 4, rng);
    const auto pruned = magnitude_prune(w, p);
    EXPECT_TRUE(verify_compliance(pruned, p.z, p.l).compliant) << p.label();
    EXPECT_NO_THROW(pack_matrix(pruned, p));
  }
}

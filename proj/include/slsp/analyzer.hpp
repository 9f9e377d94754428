#pragma once

// Analytical layer: pattern case tables, the density-determined speedup
// bound, the efficiency metric over externally measured speedups, and the
// logical I/O model for the fused activation transform. Everything here is a
// calculator over closed forms; nothing measures hardware.

#include "slsp/pattern.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace slsp {

struct CaseRow {
  SparsityPattern pattern;
  Ratio density;
  Ratio gamma;
  Ratio s_eff;
  Ratio bound;          // l/z
  bool achieves_bound;  // s_eff == bound, exact
};

inline std::vector<CaseRow> case_table(int hw_m, int hw_n,
                                       const std::vector<std::pair<int, int>>& family) {
  std::vector<CaseRow> rows;
  rows.reserve(family.size());
  for (const auto& [z, l] : family) {
    SparsityPattern p(z, l, hw_m, hw_n);
    CaseRow row;
    row.pattern = p;
    row.density = p.density();
    row.gamma = expansion_factor(p);
    row.s_eff = p.alpha / row.gamma;
    row.bound = speedup_bound(p);
    row.achieves_bound = row.s_eff == row.bound;
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<std::pair<int, int>> default_case_family() {
  return {{4, 6}, {6, 8}, {8, 10}, {10, 12}, {14, 16}};
}

struct EfficiencyInput {
  double s_baseline_24 = 0.0;  // measured speedup of native 2:4 over dense
  double s_pattern = 0.0;      // measured speedup of the Z:L pattern over dense
  SparsityPattern pattern;
};

// Measured speedup ratio vs the 2:4 baseline, normalized by the theoretical
// ratio R_theory = 0.5 / density. 100 means the transform delivers exactly
// the 2:4-derived expectation; above 100 means it beats it.
inline double efficiency(const EfficiencyInput& in) {
  if (in.s_baseline_24 <= 0.0) throw ZeroBaselineError("2:4 baseline speedup must be positive");
  if (in.s_pattern <= 0.0) throw std::invalid_argument("pattern speedup must be positive");
  const Ratio r_theory(in.pattern.l, 2 * in.pattern.z);
  return (in.s_pattern / in.s_baseline_24) / to_double(r_theory) * 100.0;
}

struct RTheoryRow {
  std::string label;
  Ratio density;
  Ratio s_theory;  // vs dense, 1/density
  Ratio r_theory;  // vs 2:4 baseline, 0.5/density
};

inline std::vector<RTheoryRow> r_theory_table() {
  std::vector<RTheoryRow> rows;
  const auto add = [&rows](std::string label, Ratio density) {
    rows.push_back({std::move(label), density, Ratio(1) / density, Ratio(1, 2) / density});
  };
  add("2:4", Ratio(1, 2));
  add("4:6", Ratio(2, 3));
  add("6:8", Ratio(3, 4));
  add("8:10", Ratio(4, 5));
  add("inf:inf", Ratio(1));  // dense weights carried in slided format
  return rows;
}

struct CostModelReport {
  Ratio gamma;
  Ratio s_eff_theoretical;
  Ratio speedup_bound;
  Ratio memory_ratio;    // stored weight payload vs dense = z/l
  Ratio fused_overhead;  // extra writes vs quantize-only = gamma - 1
  std::uint64_t io_two_step = 0;  // read X, write X', read X', write lifted
  std::uint64_t io_fused = 0;     // read X, write lifted
};

// Logical element transfers per activation matrix for the two-step vs fused
// pipelines. Rows beyond a whole number of blocks are padded, so the lifted
// width is integral.
inline CostModelReport io_cost(std::uint64_t rows, std::uint64_t cols,
                               const SparsityPattern& p) {
  const WindowPlan plan = plan_decomposition(p);
  CostModelReport out;
  out.gamma = expansion_factor(p);
  out.s_eff_theoretical = p.alpha / out.gamma;
  out.speedup_bound = speedup_bound(p);
  out.memory_ratio = p.density();
  out.fused_overhead = out.gamma - Ratio(1);
  const std::uint64_t groups = (cols + p.l - 1) / p.l;
  const std::uint64_t lifted = groups * static_cast<std::uint64_t>(plan.window_count) * p.hw_n;
  out.io_two_step = rows * (3 * cols + lifted);
  out.io_fused = rows * (cols + lifted);
  return out;
}

}  // namespace slsp

#pragma once

// Structured-sparsity pattern geometry.
//
// A SparsityPattern pairs a source Z:L block constraint (at most `z` nonzeros
// per `l` consecutive elements) with an M:N hardware window constraint (at
// most `hw_m` nonzeros per `hw_n` consecutive elements). When the source is
// at least as dense as the hardware pattern, each L-block can be rewritten as
// a sequence of overlapping hardware windows of stride hw_n - hw_m; the
// arithmetic here (window count, expansion factor, effective speedup) is kept
// in exact rational form so that equality claims are decidable.

#include <boost/rational.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slsp {

using Ratio = boost::rational<std::int64_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pattern/plan validity.
struct AlreadyCompliantError : Error {
  using Error::Error;
};
struct NonIntegralWindowCountError : Error {
  using Error::Error;
};
struct InsufficientCapacityError : Error {
  using Error::Error;
};

// Data errors raised by the transform and GEMM layers.
struct NotCompliantError : Error {
  using Error::Error;
};
struct DimensionMismatchError : Error {
  using Error::Error;
};
struct MalformedMetadataError : Error {
  using Error::Error;
};
struct NonFiniteInputError : Error {
  using Error::Error;
};
struct ZeroBaselineError : Error {
  using Error::Error;
};
struct ContainerError : Error {
  using Error::Error;
};

struct SparsityPattern {
  int z = 2;     // nonzeros per source block
  int l = 4;     // source block length
  int hw_m = 2;  // hardware nonzeros per window
  int hw_n = 4;  // hardware window length
  // Hardware speedup of M:N sparse over dense. Defaults to the nominal
  // hw_n/hw_m; overridable with a measured value.
  Ratio alpha = Ratio(2);

  SparsityPattern() = default;

  SparsityPattern(int z_, int l_, int hw_m_ = 2, int hw_n_ = 4)
      : z(z_), l(l_), hw_m(hw_m_), hw_n(hw_n_), alpha(hw_n_, hw_m_ == 0 ? 1 : hw_m_) {
    if (z <= 0 || l <= 0 || z > l) {
      throw std::invalid_argument("SparsityPattern: require 0 < z <= l, got " + label());
    }
    if (hw_m <= 0 || hw_m >= hw_n) {
      throw std::invalid_argument("SparsityPattern: require 0 < hw_m < hw_n, got " + hw_label());
    }
  }

  SparsityPattern with_alpha(Ratio a) const {
    SparsityPattern p = *this;
    p.alpha = a;
    return p;
  }

  Ratio density() const { return Ratio(z, l); }
  Ratio hw_density() const { return Ratio(hw_m, hw_n); }
  int stride() const { return hw_n - hw_m; }

  std::string label() const { return std::to_string(z) + ":" + std::to_string(l); }
  std::string hw_label() const { return std::to_string(hw_m) + ":" + std::to_string(hw_n); }

  friend bool operator==(const SparsityPattern& a, const SparsityPattern& b) {
    return a.z == b.z && a.l == b.l && a.hw_m == b.hw_m && a.hw_n == b.hw_n;
  }
};

enum class PlanStatus {
  ok,
  already_compliant,         // source sparser than hardware pattern: identity path
  non_integral_window_count,
  insufficient_capacity,
};

// Non-throwing validity probe so callers can branch on already_compliant
// without exception plumbing.
inline PlanStatus plan_status(const SparsityPattern& p) {
  if (p.density() < p.hw_density()) return PlanStatus::already_compliant;
  if (p.l < p.hw_n || (p.l - p.hw_n) % p.stride() != 0) {
    return PlanStatus::non_integral_window_count;
  }
  const int window_count = (p.l - p.hw_n) / p.stride() + 1;
  if (static_cast<std::int64_t>(window_count) * p.hw_m < p.z) {
    return PlanStatus::insufficient_capacity;
  }
  return PlanStatus::ok;
}

struct WindowPlan {
  SparsityPattern pattern;
  int window_count = 1;
  std::vector<int> window_starts;  // offsets within the source block, stride apart
  Ratio expansion = Ratio(1);      // gamma = window_count * hw_n / l
  Ratio s_eff = Ratio(1);          // alpha / gamma
};

// Sliding-window decomposition of one source block: window_count windows of
// size hw_n at stride hw_n - hw_m, covering the whole block. Adjacent windows
// overlap by exactly hw_m positions, which is what lets a window at capacity
// forward its residual nonzeros to the next one.
inline WindowPlan plan_decomposition(const SparsityPattern& p) {
  switch (plan_status(p)) {
    case PlanStatus::already_compliant:
      throw AlreadyCompliantError("pattern " + p.label() + " is already " + p.hw_label() +
                                  "-compliant; no decomposition applies");
    case PlanStatus::non_integral_window_count:
      throw NonIntegralWindowCountError("block length " + std::to_string(p.l) +
                                        " does not admit an integral window count for hardware " +
                                        p.hw_label());
    case PlanStatus::insufficient_capacity:
      throw InsufficientCapacityError("window capacity below " + std::to_string(p.z) +
                                      " nonzeros for pattern " + p.label() + " on " + p.hw_label());
    case PlanStatus::ok:
      break;
  }
  WindowPlan plan;
  plan.pattern = p;
  plan.window_count = (p.l - p.hw_n) / p.stride() + 1;
  plan.window_starts.resize(plan.window_count);
  for (int j = 0; j < plan.window_count; ++j) plan.window_starts[j] = j * p.stride();
  plan.expansion = Ratio(static_cast<std::int64_t>(plan.window_count) * p.hw_n, p.l);
  plan.s_eff = p.alpha / plan.expansion;
  return plan;
}

// Expansion factor gamma of the decomposition: expanded width over original
// width. For hw_m >= 2 this is the sliding-window value
// (l - hw_m) * hw_n / (l * (hw_n - hw_m)); for hw_m == 1 each nonzero gets a
// window of its own, so gamma = z * hw_n / l for any Z:L source.
inline Ratio expansion_factor(const SparsityPattern& p) {
  if (p.density() < p.hw_density()) {
    throw AlreadyCompliantError("pattern " + p.label() + " is already " + p.hw_label() +
                                "-compliant; no decomposition applies");
  }
  if (p.hw_m == 1) {
    return Ratio(static_cast<std::int64_t>(p.z) * p.hw_n, p.l);
  }
  switch (plan_status(p)) {
    case PlanStatus::non_integral_window_count:
      throw NonIntegralWindowCountError("block length " + std::to_string(p.l) +
                                        " does not admit an integral window count for hardware " +
                                        p.hw_label());
    case PlanStatus::insufficient_capacity:
      throw InsufficientCapacityError("window capacity below " + std::to_string(p.z) +
                                      " nonzeros for pattern " + p.label() + " on " + p.hw_label());
    default:
      break;
  }
  return Ratio(static_cast<std::int64_t>(p.l - p.hw_m) * p.hw_n,
               static_cast<std::int64_t>(p.l) * p.stride());
}

// Density-determined limit: no decomposition of a Z:L pattern can speed up
// past l/z, whatever the hardware ratio.
inline Ratio speedup_bound(const SparsityPattern& p) { return Ratio(p.l, p.z); }

inline double to_double(const Ratio& r) { return boost::rational_cast<double>(r); }

}  // namespace slsp

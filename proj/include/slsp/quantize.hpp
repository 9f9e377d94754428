#pragma once

// Activation pipeline: per-row symmetric quantization, window lifting, and
// the fused quantize-slide transform.
//
// Lifting duplicates elements so window j of group g sees the hw_n source
// values starting at l*g + stride*j; it performs no arithmetic. The fused
// transform produces, bit for bit, the same bytes as quantize -> lift ->
// word-pack run as separate steps.

#include "slsp/detail/parallel.hpp"
#include "slsp/fp8.hpp"
#include "slsp/matrix.hpp"
#include "slsp/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace slsp {

enum class QuantKind : std::uint8_t { int8, fp8e4m3 };

inline double quant_max(QuantKind kind) { return kind == QuantKind::int8 ? 127.0 : 448.0; }

// Quantizes one scaled value to its byte representation. Rounds to nearest
// even, then clamps to [-qmax, qmax]; int8 never emits -128.
inline std::uint8_t quantize_value(double scaled, QuantKind kind) {
  if (kind == QuantKind::int8) {
    const double q = std::clamp(std::nearbyint(scaled), -127.0, 127.0);
    return static_cast<std::uint8_t>(static_cast<std::int8_t>(q));
  }
  if (scaled == 0.0) return 0;  // canonical zero byte, -0.0 included
  return fp8_e4m3_encode(std::clamp(scaled, -448.0, 448.0));
}

inline double dequant_value(std::uint8_t byte, QuantKind kind) {
  if (kind == QuantKind::int8) return static_cast<double>(static_cast<std::int8_t>(byte));
  return static_cast<double>(fp8_e4m3_decode(byte));
}

struct QuantizedRow {
  std::vector<std::uint8_t> bytes;  // int8 two's complement or e4m3 codes
  float scale = 1.0f;
};

// Dynamic symmetric quantization of one row: a = max|x|, scale = a/qmax,
// q_k = clamp(rne(x_k * qmax/a)). An all-zero row gets scale 1 so the
// reciprocal is well defined; any positive scale represents zero data.
template <typename T>
QuantizedRow quantize_row(std::span<const T> x, QuantKind kind) {
  double absmax = 0.0;
  for (const T v : x) {
    const double d = static_cast<double>(v);
    if (!std::isfinite(d)) throw NonFiniteInputError("non-finite activation value");
    absmax = std::max(absmax, std::fabs(d));
  }
  QuantizedRow out;
  out.bytes.resize(x.size());
  const double r = absmax == 0.0 ? 0.0 : quant_max(kind) / absmax;
  out.scale = absmax == 0.0 ? 1.0f : static_cast<float>(absmax / quant_max(kind));
  for (std::size_t k = 0; k < x.size(); ++k) {
    out.bytes[k] = quantize_value(static_cast<double>(x[k]) * r, kind);
  }
  return out;
}

// Pure index remapping: window j of group g holds x[b .. b+hw_n) with
// b = l*g + stride*j.
template <typename T>
std::vector<T> lift_row(std::span<const T> x, const WindowPlan& plan) {
  const auto& p = plan.pattern;
  if (x.size() % static_cast<std::size_t>(p.l) != 0) {
    throw DimensionMismatchError("row length " + std::to_string(x.size()) +
                                 " not divisible by block length " + std::to_string(p.l));
  }
  const std::size_t groups = x.size() / static_cast<std::size_t>(p.l);
  std::vector<T> out(groups * static_cast<std::size_t>(plan.window_count) * p.hw_n);
  std::size_t o = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (int j = 0; j < plan.window_count; ++j) {
      const std::size_t b = g * p.l + static_cast<std::size_t>(plan.window_starts[j]);
      for (int d = 0; d < p.hw_n; ++d) out[o++] = x[b + d];
    }
  }
  return out;
}

inline std::uint32_t pack_word(std::uint8_t q0, std::uint8_t q1, std::uint8_t q2,
                               std::uint8_t q3) {
  return static_cast<std::uint32_t>(q0) | (static_cast<std::uint32_t>(q1) << 8) |
         (static_cast<std::uint32_t>(q2) << 16) | (static_cast<std::uint32_t>(q3) << 24);
}

inline std::uint8_t unpack_byte(std::uint32_t word, int pos) {
  return static_cast<std::uint8_t>((word >> (8 * pos)) & 0xFFu);
}

struct QuantizedLiftedActivation {
  std::size_t rows = 0;           // tokens
  std::size_t words_per_row = 0;  // ceil(cols/l) * window_count, one word per window
  SparsityPattern pattern;
  QuantKind kind = QuantKind::int8;
  std::vector<std::uint32_t> payload;  // rows * words_per_row
  std::vector<float> scales;           // one per row

  double qmax() const { return quant_max(kind); }
  std::size_t lifted_cols() const { return words_per_row * 4; }

  std::uint8_t byte_at(std::size_t row, std::size_t lifted_index) const {
    const std::uint32_t word = payload[row * words_per_row + lifted_index / 4];
    return unpack_byte(word, static_cast<int>(lifted_index % 4));
  }
};

// Two-pass fused transform over token rows: pass 1 finds the dynamic range,
// pass 2 iterates output windows, quantizing and packing 4 bytes per 32-bit
// word directly from the source row. Rows shorter than a whole number of
// blocks are zero-padded, which leaves every dot product unchanged.
template <typename T>
QuantizedLiftedActivation fused_quant_slide(const Matrix<T>& x, const SparsityPattern& pattern,
                                            QuantKind kind = QuantKind::int8, int threads = 1) {
  if (pattern.hw_n != 4) {
    throw std::invalid_argument("word packing requires hardware window length 4");
  }
  const WindowPlan plan = plan_decomposition(pattern);
  const std::size_t l = static_cast<std::size_t>(pattern.l);
  const std::size_t groups = (x.cols + l - 1) / l;
  QuantizedLiftedActivation out;
  out.rows = x.rows;
  out.words_per_row = groups * static_cast<std::size_t>(plan.window_count);
  out.pattern = pattern;
  out.kind = kind;
  out.payload.assign(out.rows * out.words_per_row, 0);
  out.scales.assign(out.rows, 1.0f);

  std::vector<char> bad_row(x.rows, 0);
  detail::parallel_rows(x.rows, threads, [&](std::size_t i) {
    auto row = x.row(i);
    double absmax = 0.0;
    for (const T v : row) {
      const double d = static_cast<double>(v);
      if (!std::isfinite(d)) {
        bad_row[i] = 1;
        return;
      }
      absmax = std::max(absmax, std::fabs(d));
    }
    const double r = absmax == 0.0 ? 0.0 : quant_max(kind) / absmax;
    out.scales[i] =
        absmax == 0.0 ? 1.0f : static_cast<float>(absmax / quant_max(kind));
    std::uint32_t* words = out.payload.data() + i * out.words_per_row;
    for (std::size_t j = 0; j < out.words_per_row; ++j) {
      const std::size_t g = j / static_cast<std::size_t>(plan.window_count);
      const std::size_t w = j % static_cast<std::size_t>(plan.window_count);
      const std::size_t b = l * g + static_cast<std::size_t>(plan.window_starts[w]);
      std::uint8_t q[4] = {0, 0, 0, 0};
      for (int d = 0; d < 4; ++d) {
        const std::size_t k = b + static_cast<std::size_t>(d);
        const double v = k < x.cols ? static_cast<double>(row[k]) : 0.0;
        q[d] = quantize_value(v * r, kind);
      }
      words[j] = pack_word(q[0], q[1], q[2], q[3]);
    }
  });
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (bad_row[i]) {
      throw NonFiniteInputError("non-finite activation value in row " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace slsp

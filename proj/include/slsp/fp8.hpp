#pragma once

// Minimal FP8 E4M3 codec (finite-max variant): 1 sign, 4 exponent, 3 mantissa
// bits, bias 7. Exponent field 0 encodes subnormals in units of 2^-9; code
// S.1111.111 is NaN, so the largest finite value is S.1111.110 = +-448.
// Encoding rounds to the nearest representable value, ties to even mantissa,
// and saturates at +-448.

#include <cmath>
#include <cstdint>
#include <limits>

namespace slsp {

inline float fp8_e4m3_decode(std::uint8_t code) {
  const bool neg = (code & 0x80) != 0;
  const int exp_field = (code >> 3) & 0xF;
  const int mant = code & 0x7;
  if (exp_field == 15 && mant == 7) return std::numeric_limits<float>::quiet_NaN();
  const double v = exp_field == 0 ? std::ldexp(mant / 8.0, -6)
                                  : std::ldexp(1.0 + mant / 8.0, exp_field - 7);
  return static_cast<float>(neg ? -v : v);
}

inline std::uint8_t fp8_e4m3_encode(double x) {
  if (std::isnan(x)) return 0x7F;
  const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
  const double a = std::fabs(x);
  if (a == 0.0) return sign;
  if (a >= 448.0) return sign | 0x7E;

  int exp2 = 0;
  std::frexp(a, &exp2);
  int e = exp2 - 1;  // a = (1.xxx) * 2^e for normals
  if (e < -6) {
    // subnormal lattice: multiples of 2^-9
    const double m = std::nearbyint(std::ldexp(a, 9));
    if (m >= 8.0) return sign | 0x08;  // rounds up into the smallest normal
    return sign | static_cast<std::uint8_t>(m);
  }
  // mantissa in eighths: q = a / 2^(e-3), in [8, 16)
  double q = std::nearbyint(std::ldexp(a, 3 - e));
  if (q >= 16.0) {
    q = 8.0;
    ++e;
  }
  if (e > 8) return sign | 0x7E;
  const auto exp_field = static_cast<std::uint8_t>(e + 7);
  const auto mant = static_cast<std::uint8_t>(q) & 0x7;
  if (exp_field == 15 && mant == 7) return sign | 0x7E;  // NaN slot; saturate instead
  return sign | static_cast<std::uint8_t>(exp_field << 3) | mant;
}

}  // namespace slsp

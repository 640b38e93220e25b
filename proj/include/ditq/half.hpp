#ifndef DITQ_HALF_HPP
#define DITQ_HALF_HPP

#include <cstdint>
#include <cstring>

namespace ditq {

// IEEE binary16 conversion. Rounding is to nearest, ties to even; subnormals
// are kept; values past the finite range saturate to +-65504 instead of Inf so
// downstream arithmetic stays finite.
inline std::uint16_t float_to_half(float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  std::uint32_t abs = bits & 0x7fffffffu;

  if (abs > 0x7f800000u) return static_cast<std::uint16_t>(sign | 0x7e00u);  // NaN
  if (abs >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7bffu);  // >= 65520

  if (abs >= 0x38800000u) {
    // Normal half. Round the 13 dropped mantissa bits, letting the carry
    // propagate into the exponent.
    abs += 0xfffu + ((abs >> 13) & 1u);
    return static_cast<std::uint16_t>(sign | ((abs - 0x38000000u) >> 13));
  }

  if (abs <= 0x33000000u) return sign;  // <= 2^-25 rounds to signed zero

  // Subnormal half: shift the 24-bit significand into place with RNE.
  int unbiased = static_cast<int>(abs >> 23) - 127;
  std::uint32_t mant = (abs & 0x7fffffu) | 0x800000u;
  int rshift = -unbiased - 1;  // 14..24
  std::uint32_t rem = mant & ((1u << rshift) - 1u);
  std::uint32_t half_bit = 1u << (rshift - 1);
  std::uint32_t h = mant >> rshift;
  if (rem > half_bit || (rem == half_bit && (h & 1u))) ++h;
  return static_cast<std::uint16_t>(sign | h);  // h == 1024 lands on 2^-14 normal
}

inline float half_to_float(std::uint16_t h) {
  std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      int shift = 0;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        ++shift;
      }
      mant &= 0x3ffu;
      bits = sign | (static_cast<std::uint32_t>(113 - shift) << 23) | (mant << 13);
    }
  } else if (exp == 31) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 112) << 23) | (mant << 13);
  }
  float out;
  std::memcpy(&out, &bits, sizeof out);
  return out;
}

// Quantize a float to the nearest binary16 value, returned as float.
inline float round_to_half(float value) { return half_to_float(float_to_half(value)); }

}  // namespace ditq

#endif  // DITQ_HALF_HPP

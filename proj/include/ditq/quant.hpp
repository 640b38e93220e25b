#ifndef DITQ_QUANT_HPP
#define DITQ_QUANT_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ditq/matrix.hpp"

namespace ditq {

enum class BitWidth { W8, W4 };

inline int quant_max(BitWidth bits) { return bits == BitWidth::W8 ? 127 : 7; }

// Channels whose absmax falls below this are clamped so scales stay positive.
inline constexpr float kScaleEpsilon = 1e-5f;

// Symmetric per-channel quantization result. The payload is kept unpacked as
// int8 regardless of bit width; nibble packing happens at serialization time.
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  BitWidth bits = BitWidth::W8;
  ChannelAxis axis = ChannelAxis::OutputChannel;
  std::vector<std::int8_t> payload;  // rows*cols, row-major
  std::vector<float> scales;         // one per channel, all > 0

  std::size_t channel_count() const {
    return axis == ChannelAxis::InputChannel ? rows : cols;
  }
  std::size_t channel_of(std::size_t i, std::size_t j) const {
    return axis == ChannelAxis::InputChannel ? i : j;
  }

  bool operator==(const QuantizedTensor& other) const = default;
};

// absmax -> scale. The extra multiply/divide pins the scale to a fixed point
// of the dequantize->requantize map, which makes fake_quant bit-idempotent
// (the raw quotient absmax/qmax is not always recovered after one round
// trip in float arithmetic).
inline float quant_scale(float absmax, BitWidth bits) {
  float q = static_cast<float>(quant_max(bits));
  float s = std::max(absmax, kScaleEpsilon) / q;
  return (q * s) / q;
}

// Round-half-to-even, clamped to the symmetric integer range.
inline std::int8_t quantize_value(float value, float scale, int qmax) {
  float q = std::nearbyintf(value / scale);
  if (q > static_cast<float>(qmax)) q = static_cast<float>(qmax);
  if (q < static_cast<float>(-qmax)) q = static_cast<float>(-qmax);
  return static_cast<std::int8_t>(q);
}

inline QuantizedTensor quantize(const Matrix& m, BitWidth bits, ChannelAxis axis) {
  QuantizedTensor out;
  out.rows = m.rows();
  out.cols = m.cols();
  out.bits = bits;
  out.axis = axis;
  auto absmax = absmax_per_channel(m, axis);
  out.scales.resize(absmax.size());
  for (std::size_t c = 0; c < absmax.size(); ++c) out.scales[c] = quant_scale(absmax[c], bits);
  out.payload.resize(m.size());
  int qmax = quant_max(bits);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.payload[i * m.cols() + j] =
          quantize_value(m(i, j), out.scales[out.channel_of(i, j)], qmax);
  return out;
}

inline Matrix dequantize(const QuantizedTensor& q) {
  Matrix out(q.rows, q.cols);
  for (std::size_t i = 0; i < q.rows; ++i)
    for (std::size_t j = 0; j < q.cols; ++j)
      out(i, j) = static_cast<float>(q.payload[i * q.cols + j]) * q.scales[q.channel_of(i, j)];
  return out;
}

// Quantize-then-dequantize with scales derived from the input itself.
inline Matrix fake_quant(const Matrix& m, BitWidth bits, ChannelAxis axis) {
  return dequantize(quantize(m, bits, axis));
}

// Quantize-then-dequantize against externally fixed per-channel scales.
inline Matrix fake_quant_fixed(const Matrix& m, ChannelAxis axis, BitWidth bits,
                               std::span<const float> scales) {
  if (scales.size() != channel_count(m, axis))
    throw std::invalid_argument("fake_quant_fixed: scale count does not match channels");
  Matrix out(m.rows(), m.cols());
  int qmax = quant_max(bits);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      float s = scales[axis == ChannelAxis::InputChannel ? i : j];
      out(i, j) = static_cast<float>(quantize_value(m(i, j), s, qmax)) * s;
    }
  }
  return out;
}

// Dynamic quantization with a per-channel correction folded into the
// dequantization scale: payloads come from the input's own grid, values come
// back multiplied by scale*correction.
inline Matrix fake_quant_rescaled(const Matrix& m, ChannelAxis axis, BitWidth bits,
                                  std::span<const float> correction) {
  if (correction.size() != channel_count(m, axis))
    throw std::invalid_argument("fake_quant_rescaled: correction count does not match channels");
  auto absmax = absmax_per_channel(m, axis);
  Matrix out(m.rows(), m.cols());
  int qmax = quant_max(bits);
  std::vector<float> qs(absmax.size()), ds(absmax.size());
  for (std::size_t c = 0; c < absmax.size(); ++c) {
    qs[c] = quant_scale(absmax[c], bits);
    ds[c] = qs[c] * correction[c];
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::size_t c = axis == ChannelAxis::InputChannel ? i : j;
      out(i, j) = static_cast<float>(quantize_value(m(i, j), qs[c], qmax)) * ds[c];
    }
  }
  return out;
}

// Two's-complement nibbles, element 2i in the low nibble of byte i, element
// 2i+1 in the high nibble; an odd tail pads the high nibble with zero.
inline std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> values) {
  std::vector<std::uint8_t> out((values.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    int v = values[i];
    if (v < -7 || v > 7) throw std::invalid_argument("pack_int4: value out of [-7, 7]");
    std::uint8_t nibble = static_cast<std::uint8_t>(v) & 0x0fu;
    if (i % 2 == 0)
      out[i / 2] = nibble;
    else
      out[i / 2] |= static_cast<std::uint8_t>(nibble << 4);
  }
  return out;
}

inline std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> bytes,
                                            std::size_t count) {
  if (bytes.size() != (count + 1) / 2)
    throw std::invalid_argument("unpack_int4: byte count does not match element count");
  std::vector<std::int8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t nibble = i % 2 == 0 ? bytes[i / 2] & 0x0fu : bytes[i / 2] >> 4;
    out[i] = static_cast<std::int8_t>(static_cast<std::int8_t>(nibble << 4) >> 4);
  }
  return out;
}

}  // namespace ditq

#endif  // DITQ_QUANT_HPP

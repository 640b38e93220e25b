#ifndef DITQ_TENSOR_IO_HPP
#define DITQ_TENSOR_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ditq/common.hpp"
#include "ditq/half.hpp"
#include "ditq/matrix.hpp"
#include "ditq/quant.hpp"

namespace ditq {

// Binary tensor container, little-endian:
//   magic "DITQ" | u32 version=1 | u8 dtype | u8 ndim | ndim x u64 dims | payload
// dtype: 0=fp32, 1=fp16, 2=int8, 3=int4 packed two per byte (low nibble first).
// int4 payload length is ceil(elements/2) bytes. Quantized dtypes (2, 3) are
// followed by a u64-length-prefixed fp32 scale array and one axis byte
// (0 = input channels / rows, 1 = output channels / columns).
enum class DType : std::uint8_t { F32 = 0, F16 = 1, I8 = 2, I4 = 3 };

struct TensorFile {
  DType dtype = DType::F32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;        // raw bytes, packed for I4
  std::vector<float> scales;                // quantized dtypes only
  std::uint8_t axis = 1;                    // quantized dtypes only

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  bool operator==(const TensorFile& other) const = default;
};

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(os, b, 8);
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw io_error(std::string("tensor file truncated while reading ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint8_t b[4];
  get_bytes(is, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is, const char* what) {
  std::uint8_t b[8];
  get_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t payload_bytes(DType dtype, std::uint64_t elements) {
  switch (dtype) {
    case DType::F32: return elements * 4;
    case DType::F16: return elements * 2;
    case DType::I8: return elements;
    case DType::I4: return (elements + 1) / 2;
  }
  throw io_error("tensor file has unknown dtype code");
}

}  // namespace detail

inline void write_tensor(const std::filesystem::path& path, const TensorFile& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  static const char magic[4] = {'D', 'I', 'T', 'Q'};
  detail::put_bytes(os, magic, 4);
  detail::put_u32(os, 1);
  std::uint8_t dtype = static_cast<std::uint8_t>(t.dtype);
  std::uint8_t ndim = static_cast<std::uint8_t>(t.dims.size());
  detail::put_bytes(os, &dtype, 1);
  detail::put_bytes(os, &ndim, 1);
  for (auto d : t.dims) detail::put_u64(os, d);
  if (t.payload.size() != detail::payload_bytes(t.dtype, t.element_count()))
    throw io_error("write_tensor: payload length does not match declared shape");
  detail::put_bytes(os, t.payload.data(), t.payload.size());
  if (t.dtype == DType::I8 || t.dtype == DType::I4) {
    detail::put_u64(os, t.scales.size());
    detail::put_bytes(os, t.scales.data(), t.scales.size() * 4);
    detail::put_bytes(os, &t.axis, 1);
  }
  if (!os) throw io_error("write failed: " + path.string());
}

inline TensorFile read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path.string());
  char magic[4];
  detail::get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "DITQ", 4) != 0)
    throw io_error("bad magic in tensor file: " + path.string());
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != 1)
    throw io_error("unsupported tensor file version " + std::to_string(version));
  std::uint8_t dtype_code, ndim;
  detail::get_bytes(is, &dtype_code, 1, "dtype");
  detail::get_bytes(is, &ndim, 1, "ndim");
  if (dtype_code > 3)
    throw io_error("unknown dtype code " + std::to_string(dtype_code));
  TensorFile t;
  t.dtype = static_cast<DType>(dtype_code);
  t.dims.resize(ndim);
  for (auto& d : t.dims) d = detail::get_u64(is, "dims");
  t.payload.resize(detail::payload_bytes(t.dtype, t.element_count()));
  detail::get_bytes(is, t.payload.data(), t.payload.size(), "payload");
  if (t.dtype == DType::I8 || t.dtype == DType::I4) {
    std::uint64_t nscales = detail::get_u64(is, "scale count");
    t.scales.resize(nscales);
    detail::get_bytes(is, t.scales.data(), nscales * 4, "scales");
    detail::get_bytes(is, &t.axis, 1, "axis");
  }
  // Strict framing: anything after the declared content is a length mismatch.
  if (is.peek() != std::char_traits<char>::eof())
    throw io_error("payload length mismatch vs declared shape: " + path.string());
  return t;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  TensorFile t;
  t.dtype = DType::F32;
  t.dims = {m.rows(), m.cols()};
  t.payload.resize(m.size() * 4);
  std::memcpy(t.payload.data(), m.data().data(), t.payload.size());
  write_tensor(path, t);
}

inline Matrix matrix_from_tensor(const TensorFile& t, const std::string& what) {
  if (t.dtype != DType::F32 || t.dims.size() != 2)
    throw io_error("expected 2-D fp32 tensor for " + what);
  std::vector<float> data(t.element_count());
  std::memcpy(data.data(), t.payload.data(), t.payload.size());
  return Matrix(t.dims[0], t.dims[1], std::move(data));
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  return matrix_from_tensor(read_tensor(path), path.string());
}

inline void write_quantized(const std::filesystem::path& path, const QuantizedTensor& q) {
  TensorFile t;
  t.dims = {q.rows, q.cols};
  t.scales = q.scales;
  t.axis = q.axis == ChannelAxis::InputChannel ? 0 : 1;
  if (q.bits == BitWidth::W8) {
    t.dtype = DType::I8;
    t.payload.resize(q.payload.size());
    std::memcpy(t.payload.data(), q.payload.data(), q.payload.size());
  } else {
    t.dtype = DType::I4;
    t.payload = pack_int4(q.payload);
  }
  write_tensor(path, t);
}

inline QuantizedTensor quantized_from_tensor(const TensorFile& t, const std::string& what) {
  if ((t.dtype != DType::I8 && t.dtype != DType::I4) || t.dims.size() != 2)
    throw io_error("expected 2-D quantized tensor for " + what);
  QuantizedTensor q;
  q.rows = t.dims[0];
  q.cols = t.dims[1];
  q.bits = t.dtype == DType::I8 ? BitWidth::W8 : BitWidth::W4;
  q.axis = t.axis == 0 ? ChannelAxis::InputChannel : ChannelAxis::OutputChannel;
  q.scales = t.scales;
  if (t.dtype == DType::I8) {
    q.payload.resize(t.payload.size());
    std::memcpy(q.payload.data(), t.payload.data(), t.payload.size());
  } else {
    q.payload = unpack_int4(t.payload, q.rows * q.cols);
  }
  if (q.scales.size() != q.channel_count())
    throw io_error("scale count does not match channel count in " + what);
  int qmax = quant_max(q.bits);
  for (auto p : q.payload)
    if (p < -qmax || p > qmax)
      throw io_error("payload value outside the symmetric range in " + what);
  for (float s : q.scales)
    if (!(s > 0.0f) || !std::isfinite(s))
      throw io_error("non-positive quantization scale in " + what);
  return q;
}

inline QuantizedTensor read_quantized(const std::filesystem::path& path) {
  return quantized_from_tensor(read_tensor(path), path.string());
}

inline void write_half_matrix(const std::filesystem::path& path, std::size_t rows,
                              std::size_t cols, std::span<const std::uint16_t> values) {
  TensorFile t;
  t.dtype = DType::F16;
  t.dims = {rows, cols};
  t.payload.resize(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    t.payload[2 * i] = static_cast<std::uint8_t>(values[i]);
    t.payload[2 * i + 1] = static_cast<std::uint8_t>(values[i] >> 8);
  }
  write_tensor(path, t);
}

inline std::vector<std::uint16_t> half_payload(const TensorFile& t) {
  std::vector<std::uint16_t> out(t.element_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint16_t>(t.payload[2 * i]) |
             (static_cast<std::uint16_t>(t.payload[2 * i + 1]) << 8);
  return out;
}

}  // namespace ditq

#endif  // DITQ_TENSOR_IO_HPP

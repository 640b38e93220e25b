#ifndef DITQ_MATRIX_HPP
#define DITQ_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ditq {

// Which matrix axis carries the channel being reduced or scaled. Activations
// are stored channels x tokens, weights in_channels x out_channels, so input
// channels always live on rows and output channels on columns.
enum class ChannelAxis { InputChannel, OutputChannel };

// Dense row-major 2-D float tensor. Construction rejects NaN/Inf so every
// derived quantization scale is finite.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {
    check_dims(rows, cols);
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims(rows, cols);
    if (data_.size() != rows * cols)
      throw std::invalid_argument("Matrix: data length does not match rows*cols");
    for (float v : data_)
      if (!std::isfinite(v)) throw std::invalid_argument("Matrix: non-finite element");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_.data() + i * cols_, cols_);
  }
  std::span<float> row(std::size_t i) {
    return std::span<float>(data_.data() + i * cols_, cols_);
  }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  static void check_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Matrix: empty dimension");
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
};

inline std::size_t channel_count(const Matrix& m, ChannelAxis axis) {
  return axis == ChannelAxis::InputChannel ? m.rows() : m.cols();
}

// Per-channel maximum absolute value along the chosen axis.
inline std::vector<float> absmax_per_channel(const Matrix& m, ChannelAxis axis) {
  std::vector<float> out(channel_count(m, axis), 0.0f);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      float a = std::fabs(m(i, j));
      std::size_t c = axis == ChannelAxis::InputChannel ? i : j;
      if (a > out[c]) out[c] = a;
    }
  }
  return out;
}

inline double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (float v : m.data()) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

// a (p x q) * b (q x r) -> p x r, accumulated in float.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      float aik = a(i, k);
      if (aik == 0.0f) continue;
      const auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a^T (m x k)^T * b (k x n) -> m x n; contraction runs over the shared rows.
inline Matrix matmul_ta(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_ta: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      float aki = arow[i];
      if (aki == 0.0f) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

inline void add_inplace(Matrix& target, const Matrix& addend) {
  if (target.rows() != addend.rows() || target.cols() != addend.cols())
    throw std::invalid_argument("add_inplace: shape mismatch");
  auto t = target.data();
  auto s = addend.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += s[i];
}

// Multiply (or divide) every channel slice by its factor.
inline Matrix scale_channels(const Matrix& m, ChannelAxis axis,
                             std::span<const float> factors, bool divide = false) {
  if (factors.size() != channel_count(m, axis))
    throw std::invalid_argument("scale_channels: factor count does not match channels");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      float f = factors[axis == ChannelAxis::InputChannel ? i : j];
      out(i, j) = divide ? m(i, j) / f : m(i, j) * f;
    }
  }
  return out;
}

}  // namespace ditq

#endif  // DITQ_MATRIX_HPP

#ifndef DITQ_TESTS_HELPERS_HPP
#define DITQ_TESTS_HELPERS_HPP

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ditq/matrix.hpp"
#include "ditq/rng.hpp"

namespace ditq::test {

inline Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  Rng rng(mix_seed(seed, 0xBEEF));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(i, j) = static_cast<float>(rng.normal() * scale);
  return m;
}

inline std::vector<float> random_positive(std::uint64_t seed, std::size_t n, double lo = 0.1,
                                          double hi = 10.0) {
  Rng rng(mix_seed(seed, 0xCAFE));
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(std::exp(rng.uniform(std::log(lo), std::log(hi))));
  return out;
}

// Exact rational arithmetic for small-integer oracles.
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n) : num(n), den(1) {}
  Rational(long long n, long long d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) throw std::invalid_argument("Rational: zero denominator");
    if (den < 0) {
      den = -den;
      num = -num;
    }
    long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  friend Rational operator+(Rational a, Rational b) {
    __int128 n = static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den;
    __int128 d = static_cast<__int128>(a.den) * b.den;
    return make(n, d);
  }
  friend Rational operator-(Rational a, Rational b) { return a + Rational(-b.num, b.den); }
  friend Rational operator*(Rational a, Rational b) {
    return make(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
  }
  friend Rational operator/(Rational a, Rational b) {
    if (b.num == 0) throw std::invalid_argument("Rational: division by zero");
    return make(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }

  static Rational make(__int128 n, __int128 d) {
    if (d < 0) {
      d = -d;
      n = -n;
    }
    __int128 an = n < 0 ? -n : n;
    __int128 g = gcd128(an, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX)
      throw std::overflow_error("Rational: overflow");
    Rational r;
    r.num = static_cast<long long>(n);
    r.den = static_cast<long long>(d);
    return r;
  }

  static __int128 gcd128(__int128 a, __int128 b) {
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    return a < 0 ? -a : a;
  }
};

using RationalMatrix = std::vector<std::vector<Rational>>;

inline RationalMatrix rational_from(const Matrix& m) {
  RationalMatrix out(m.rows(), std::vector<Rational>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      long long v = static_cast<long long>(m(i, j));
      if (static_cast<float>(v) != m(i, j))
        throw std::invalid_argument("rational_from: matrix entry is not a small integer");
      out[i][j] = Rational(v);
    }
  return out;
}

// a^T (k x p)^T * b (k x n) in exact arithmetic.
inline RationalMatrix rational_matmul_ta(const RationalMatrix& a, const RationalMatrix& b) {
  std::size_t k = a.size(), p = a[0].size(), n = b[0].size();
  RationalMatrix out(p, std::vector<Rational>(n, Rational(0)));
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i][j] = out[i][j] + a[kk][i] * b[kk][j];
  return out;
}

inline RationalMatrix rational_scale_rows(const RationalMatrix& m,
                                          const std::vector<Rational>& s, bool divide) {
  RationalMatrix out = m;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j)
      out[i][j] = divide ? m[i][j] / s[i] : m[i][j] * s[i];
  return out;
}

// Independent naive product oracle: plain ijk triple loop over w^T x.
inline Matrix naive_forward_oracle(const Matrix& w, const Matrix& x) {
  Matrix out(w.cols(), x.cols());
  for (std::size_t i = 0; i < w.cols(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t kk = 0; kk < w.rows(); ++kk) acc += w(kk, i) * x(kk, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace ditq::test

#endif  // DITQ_TESTS_HELPERS_HPP

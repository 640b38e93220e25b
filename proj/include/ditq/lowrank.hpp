#ifndef DITQ_LOWRANK_HPP
#define DITQ_LOWRANK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ditq/half.hpp"
#include "ditq/matrix.hpp"
#include "ditq/rng.hpp"

namespace ditq {

// Truncated SVD of a real matrix: u (k x r) and v (m x r) with orthonormal
// columns, sigma sorted non-increasing.
struct SvdResult {
  Matrix u{1, 1};
  std::vector<double> sigma;
  Matrix v{1, 1};
};

enum class SvdMethod { Auto, Jacobi, Randomized };

// Dimensions up to this go through the exact one-sided Jacobi path; larger
// matrices use randomized subspace iteration.
inline constexpr std::size_t kExactSvdMaxDim = 128;

inline Matrix residual(const Matrix& w, const Matrix& w_hat) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols())
    throw std::invalid_argument("residual: shape mismatch");
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j) - w_hat(i, j);
  return out;
}

namespace detail {

// Column-major working matrix in double precision.
struct ColMat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;  // column-major
  ColMat() = default;
  ColMat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double* col(std::size_t j) { return a.data() + j * rows; }
  const double* col(std::size_t j) const { return a.data() + j * rows; }
  double& at(std::size_t i, std::size_t j) { return a[j * rows + i]; }
  double at(std::size_t i, std::size_t j) const { return a[j * rows + i]; }
};

inline ColMat to_colmat(const Matrix& m, bool transposed) {
  ColMat out(transposed ? m.cols() : m.rows(), transposed ? m.rows() : m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (transposed)
        out.at(j, i) = m(i, j);
      else
        out.at(i, j) = m(i, j);
    }
  return out;
}

inline double col_dot(const ColMat& m, std::size_t i, std::size_t j) {
  const double* a = m.col(i);
  const double* b = m.col(j);
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) s += a[r] * b[r];
  return s;
}

struct JacobiSvd {
  ColMat u;                   // rows x p, scaled columns before normalization
  ColMat v;                   // p x p rotation accumulator
  std::vector<double> sigma;  // p, sorted non-increasing
  std::vector<std::size_t> order;
};

// One-sided (Hestenes) Jacobi on the columns of a tall matrix. Sweeps rotate
// column pairs until all are mutually orthogonal; singular values are the
// final column norms.
inline JacobiSvd jacobi_svd_tall(ColMat work) {
  const std::size_t p = work.cols;
  ColMat v(p, p);
  for (std::size_t j = 0; j < p; ++j) v.at(j, j) = 1.0;

  const double tol = 1e-15;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        double aii = col_dot(work, i, i);
        double ajj = col_dot(work, j, j);
        double aij = col_dot(work, i, j);
        if (std::fabs(aij) <= tol * std::sqrt(aii * ajj) || aij == 0.0) continue;
        rotated = true;
        double zeta = (ajj - aii) / (2.0 * aij);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        double* ci = work.col(i);
        double* cj = work.col(j);
        for (std::size_t r = 0; r < work.rows; ++r) {
          double x = ci[r], y = cj[r];
          ci[r] = c * x - s * y;
          cj[r] = s * x + c * y;
        }
        double* vi = v.col(i);
        double* vj = v.col(j);
        for (std::size_t r = 0; r < p; ++r) {
          double x = vi[r], y = vj[r];
          vi[r] = c * x - s * y;
          vj[r] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  JacobiSvd out;
  out.sigma.resize(p);
  for (std::size_t j = 0; j < p; ++j) out.sigma[j] = std::sqrt(col_dot(work, j, j));
  out.order.resize(p);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return out.sigma[a] > out.sigma[b]; });
  out.u = std::move(work);
  out.v = std::move(v);
  return out;
}

// Replace near-null columns with an orthonormal completion so u always has
// orthonormal columns even past the numerical rank.
inline void normalize_or_fill(ColMat& u, std::vector<double>& sigma_sorted,
                              const std::vector<std::size_t>& order, ColMat& out,
                              std::size_t rank, double sigma_max) {
  const double tiny = sigma_max > 0.0 ? sigma_max * 1e-13 : 0.0;
  std::size_t basis_probe = 0;
  for (std::size_t c = 0; c < rank; ++c) {
    std::size_t src = order[c];
    double s = sigma_sorted[c];
    if (s > tiny && s > 0.0) {
      const double* col = u.col(src);
      for (std::size_t r = 0; r < u.rows; ++r) out.at(r, c) = col[r] / s;
      continue;
    }
    // Gram-Schmidt a canonical basis vector against everything placed so far.
    while (true) {
      if (basis_probe >= u.rows)
        throw std::runtime_error("svd: failed to complete orthonormal basis");
      std::vector<double> cand(u.rows, 0.0);
      cand[basis_probe++] = 1.0;
      for (std::size_t prev = 0; prev < c; ++prev) {
        double d = 0.0;
        for (std::size_t r = 0; r < u.rows; ++r) d += cand[r] * out.at(r, prev);
        for (std::size_t r = 0; r < u.rows; ++r) cand[r] -= d * out.at(r, prev);
      }
      double n2 = 0.0;
      for (double x : cand) n2 += x * x;
      if (n2 > 0.5) {  // canonical vectors lose at most their projection
        double n = std::sqrt(n2);
        for (std::size_t r = 0; r < u.rows; ++r) out.at(r, c) = cand[r] / n;
        break;
      }
    }
  }
}

inline SvdResult finish_jacobi(JacobiSvd svd, std::size_t rank, bool swapped) {
  std::vector<double> sorted(rank);
  for (std::size_t c = 0; c < rank; ++c) sorted[c] = svd.sigma[svd.order[c]];
  double sigma_max = svd.sigma.empty() ? 0.0 : svd.sigma[svd.order[0]];

  ColMat left(svd.u.rows, rank);
  normalize_or_fill(svd.u, sorted, svd.order, left, rank, sigma_max);
  ColMat right(svd.v.rows, rank);
  for (std::size_t c = 0; c < rank; ++c) {
    const double* col = svd.v.col(svd.order[c]);
    for (std::size_t r = 0; r < svd.v.rows; ++r) right.at(r, c) = col[r];
  }

  SvdResult out;
  out.sigma = std::move(sorted);
  Matrix mu(left.rows, rank), mv(right.rows, rank);
  for (std::size_t r = 0; r < left.rows; ++r)
    for (std::size_t c = 0; c < rank; ++c) mu(r, c) = static_cast<float>(left.at(r, c));
  for (std::size_t r = 0; r < right.rows; ++r)
    for (std::size_t c = 0; c < rank; ++c) mv(r, c) = static_cast<float>(right.at(r, c));
  if (swapped) {
    out.u = std::move(mv);
    out.v = std::move(mu);
  } else {
    out.u = std::move(mu);
    out.v = std::move(mv);
  }
  return out;
}

}  // namespace detail

// Exact truncated SVD via one-sided Jacobi, working on the transpose when the
// input is wide so the rotation loop always runs over the smaller dimension.
inline SvdResult truncated_svd_jacobi(const Matrix& m, std::size_t rank) {
  bool swapped = m.rows() < m.cols();
  detail::ColMat work = detail::to_colmat(m, swapped);
  auto svd = detail::jacobi_svd_tall(std::move(work));
  return detail::finish_jacobi(std::move(svd), rank, swapped);
}

namespace detail {

// Modified Gram-Schmidt orthonormalization of columns (in place).
inline void orthonormalize(ColMat& y) {
  for (std::size_t j = 0; j < y.cols; ++j) {
    double* cj = y.col(j);
    for (std::size_t i = 0; i < j; ++i) {
      const double* ci = y.col(i);
      double d = 0.0;
      for (std::size_t r = 0; r < y.rows; ++r) d += ci[r] * cj[r];
      for (std::size_t r = 0; r < y.rows; ++r) cj[r] -= d * ci[r];
    }
    double n2 = 0.0;
    for (std::size_t r = 0; r < y.rows; ++r) n2 += cj[r] * cj[r];
    double n = std::sqrt(n2);
    if (n > 0.0)
      for (std::size_t r = 0; r < y.rows; ++r) cj[r] /= n;
  }
}

}  // namespace detail

// Randomized subspace iteration (oversampling 8, two power iterations) for
// large matrices; the sketch is reduced with the exact Jacobi kernel. The
// Gaussian test matrix is seeded from the dimensions only, so results are
// reproducible run to run.
inline SvdResult truncated_svd_randomized(const Matrix& m, std::size_t rank) {
  const std::size_t k = m.rows(), n = m.cols();
  const std::size_t oversample = 8;
  const std::size_t l = std::min(std::min(k, n), rank + oversample);

  Rng rng(mix_seed(0x534b4554ull, k, n, l));  // sketch stream
  detail::ColMat omega(n, l);
  for (auto& v : omega.a) v = rng.normal();

  detail::ColMat md = detail::to_colmat(m, false);  // k x n
  auto mul = [](const detail::ColMat& a, bool ta, const detail::ColMat& b) {
    std::size_t ar = ta ? a.cols : a.rows, ac = ta ? a.rows : a.cols;
    if (ac != b.rows) throw std::invalid_argument("svd: sketch dimension mismatch");
    detail::ColMat out(ar, b.cols);
    for (std::size_t j = 0; j < b.cols; ++j)
      for (std::size_t i = 0; i < ar; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < ac; ++t)
          s += (ta ? a.at(t, i) : a.at(i, t)) * b.at(t, j);
        out.at(i, j) = s;
      }
    return out;
  };

  detail::ColMat y = mul(md, false, omega);  // k x l
  detail::orthonormalize(y);
  for (int it = 0; it < 2; ++it) {
    detail::ColMat z = mul(md, true, y);  // n x l
    detail::orthonormalize(z);
    y = mul(md, false, z);
    detail::orthonormalize(y);
  }
  detail::ColMat b = mul(y, true, md);  // l x n, small in the first dimension

  // Exact SVD of the small sketch: b^T is n x l (tall).
  detail::ColMat bt(n, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < n; ++j) bt.at(j, i) = b.at(i, j);
  auto svd = detail::jacobi_svd_tall(std::move(bt));
  // b = ub * sigma * vb^T  with ub = rotations (l x l) and vb = normalized cols.
  SvdResult small = detail::finish_jacobi(std::move(svd), std::min(rank, l), true);

  // Lift: u = y * u_small.
  Matrix u(k, small.sigma.size());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < small.sigma.size(); ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < l; ++t)
        s += y.at(i, t) * static_cast<double>(small.u(t, c));
      u(i, c) = static_cast<float>(s);
    }
  SvdResult out;
  out.u = std::move(u);
  out.sigma = std::move(small.sigma);
  out.v = std::move(small.v);
  return out;
}

inline SvdResult truncated_svd(const Matrix& m, std::size_t rank,
                               SvdMethod method = SvdMethod::Auto) {
  if (rank < 1 || rank > std::min(m.rows(), m.cols()))
    throw std::invalid_argument("truncated_svd: rank out of range");
  if (method == SvdMethod::Auto)
    method = std::min(m.rows(), m.cols()) <= kExactSvdMaxDim ? SvdMethod::Jacobi
                                                             : SvdMethod::Randomized;
  return method == SvdMethod::Jacobi ? truncated_svd_jacobi(m, rank)
                                     : truncated_svd_randomized(m, rank);
}

// Low-rank compensation factors a (k x r) and b (m x r) with binary16 value
// semantics; a * b^T approximates the SVD reconstruction.
struct LowRankAdapter {
  std::size_t rank = 0;
  Matrix a{1, 1};  // binary16-rounded values
  Matrix b{1, 1};
  std::vector<double> sigma;

  std::vector<std::uint16_t> a_bits() const { return to_bits(a); }
  std::vector<std::uint16_t> b_bits() const { return to_bits(b); }

  static std::vector<std::uint16_t> to_bits(const Matrix& m) {
    std::vector<std::uint16_t> out(m.size());
    auto d = m.data();
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = float_to_half(d[i]);
    return out;
  }
};

// a = u * sqrt(sigma), b = v * sqrt(sigma), each entry rounded to binary16.
inline LowRankAdapter factorize(const SvdResult& svd) {
  LowRankAdapter ad;
  ad.rank = svd.sigma.size();
  ad.sigma = svd.sigma;
  ad.a = Matrix(svd.u.rows(), ad.rank);
  ad.b = Matrix(svd.v.rows(), ad.rank);
  for (std::size_t c = 0; c < ad.rank; ++c) {
    double root = std::sqrt(svd.sigma[c]);
    for (std::size_t r = 0; r < svd.u.rows(); ++r)
      ad.a(r, c) = round_to_half(static_cast<float>(svd.u(r, c) * root));
    for (std::size_t r = 0; r < svd.v.rows(); ++r)
      ad.b(r, c) = round_to_half(static_cast<float>(svd.v(r, c) * root));
  }
  return ad;
}

inline LowRankAdapter build_adapter(const Matrix& w, const Matrix& w_hat, std::size_t rank,
                                    SvdMethod method = SvdMethod::Auto) {
  return factorize(truncated_svd(residual(w, w_hat), rank, method));
}

}  // namespace ditq

#endif  // DITQ_LOWRANK_HPP

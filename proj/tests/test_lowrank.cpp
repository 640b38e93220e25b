#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <vector>

#include "ditq/lowrank.hpp"
#include "helpers.hpp"

using namespace ditq;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

// Independent dense full-SVD oracle.
std::vector<double> oracle_singular_values(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  auto sv = svd.singularValues();
  return std::vector<double>(sv.data(), sv.data() + sv.size());
}

Matrix reconstruct(const SvdResult& svd) {
  Matrix scaled(svd.u.rows(), svd.sigma.size());
  for (std::size_t i = 0; i < svd.u.rows(); ++i)
    for (std::size_t c = 0; c < svd.sigma.size(); ++c)
      scaled(i, c) = static_cast<float>(svd.u(i, c) * svd.sigma[c]);
  return matmul(scaled, transpose(svd.v));
}

double tail_energy(const std::vector<double>& sigma, std::size_t rank) {
  double sum = 0.0;
  for (std::size_t i = rank; i < sigma.size(); ++i) sum += sigma[i] * sigma[i];
  return std::sqrt(sum);
}

void check_orthonormal(const Matrix& u) {
  for (std::size_t a = 0; a < u.cols(); ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      double dot = 0.0;
      for (std::size_t r = 0; r < u.rows(); ++r)
        dot += static_cast<double>(u(r, a)) * u(r, b);
      REQUIRE(std::fabs(dot - (a == b ? 1.0 : 0.0)) <= 1e-5);
    }
}

}  // namespace

TEST_CASE("residual subtracts elementwise", "[lowrank]") {
  Matrix w = test::random_matrix(1, 16, 16);
  CHECK(frobenius_norm(residual(w, w)) == 0.0);
  CHECK(residual(Matrix(1, 1, {1.0f}), Matrix(1, 1, {0.75f}))(0, 0) == 0.25f);

  Matrix w2 = test::random_matrix(2, 16, 16);
  Matrix r = residual(w, w2);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      double d = w(i, j) - w2(i, j);  // float subtraction, widened
      oracle += d * d;
    }
  CHECK(frobenius_norm(r) == Catch::Approx(std::sqrt(oracle)).epsilon(1e-12));
  CHECK_THROWS_AS(residual(w, Matrix(16, 15)), std::invalid_argument);
}

TEST_CASE("truncated_svd on a diagonal matrix", "[lowrank]") {
  Matrix d(2, 2, {3, 0, 0, 1});
  SvdResult svd = truncated_svd(d, 1);
  REQUIRE(svd.sigma.size() == 1);
  CHECK(svd.sigma[0] == Catch::Approx(3.0).epsilon(1e-12));
  Matrix recon = reconstruct(svd);
  CHECK(recon(0, 0) == Catch::Approx(3.0).epsilon(1e-6));
  CHECK(std::fabs(recon(0, 1)) < 1e-9);
  CHECK(std::fabs(recon(1, 0)) < 1e-9);
  CHECK(std::fabs(recon(1, 1)) < 1e-9);
  CHECK(frobenius_norm(residual(d, recon)) == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("truncated_svd recovers an exactly low-rank matrix", "[lowrank]") {
  Rng rng(mix_seed(9, 1));
  Matrix u(6, 1), v(4, 1);
  for (auto& x : u.data()) x = static_cast<float>(rng.normal());
  for (auto& x : v.data()) x = static_cast<float>(rng.normal());
  Matrix m = matmul(u, transpose(v));
  for (auto& x : m.data()) x *= 5.0f;
  SvdResult svd = truncated_svd(m, 1);
  CHECK(frobenius_norm(residual(m, reconstruct(svd))) <= 1e-5 * frobenius_norm(m));
}

TEST_CASE("truncated_svd matches the dense oracle", "[lowrank]") {
  Matrix m = test::random_matrix(21, 12, 8);
  SvdResult svd = truncated_svd(m, 3);
  auto oracle = oracle_singular_values(m);
  REQUIRE(svd.sigma.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(svd.sigma[i] == Catch::Approx(oracle[i]).epsilon(1e-6));
  for (std::size_t i = 1; i < 3; ++i) CHECK(svd.sigma[i] <= svd.sigma[i - 1]);
  check_orthonormal(svd.u);
  check_orthonormal(svd.v);
  CHECK_THROWS_AS(truncated_svd(m, 0), std::invalid_argument);
  CHECK_THROWS_AS(truncated_svd(m, 9), std::invalid_argument);
}

TEST_CASE("truncated_svd fills an orthonormal basis past the numerical rank", "[lowrank]") {
  SvdResult svd = truncated_svd(Matrix(5, 4), 3);  // zero matrix
  REQUIRE(svd.sigma.size() == 3);
  for (double s : svd.sigma) CHECK(s == 0.0);
  check_orthonormal(svd.u);
  check_orthonormal(svd.v);
}

TEST_CASE("Eckart-Young: truncation error is the tail energy", "[lowrank]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(seed, 3));
    std::size_t rows = 2 + rng.below(63);
    std::size_t cols = 2 + rng.below(63);
    std::size_t r = 1 + rng.below(std::min(rows, cols));
    Matrix m = test::random_matrix(seed + 40, rows, cols, 1.0);
    SvdResult svd = truncated_svd(m, r);
    auto oracle = oracle_singular_values(m);
    for (std::size_t i = 0; i < r; ++i)
      REQUIRE(svd.sigma[i] == Catch::Approx(oracle[i]).epsilon(1e-6));
    double err = frobenius_norm(residual(m, reconstruct(svd)));
    double tail = tail_energy(oracle, r);
    if (tail > 1e-9)
      REQUIRE(err == Catch::Approx(tail).epsilon(1e-4));
    else
      REQUIRE(err <= 1e-6 * frobenius_norm(m));
  }
}

TEST_CASE("factorize splits sigma across both factors", "[lowrank]") {
  SvdResult svd;
  svd.u = Matrix(3, 1, {1, 0, 0});
  svd.v = Matrix(2, 1, {1, 0});
  svd.sigma = {4.0};
  LowRankAdapter ad = factorize(svd);
  CHECK(ad.a(0, 0) == 2.0f);
  CHECK(ad.a(1, 0) == 0.0f);
  CHECK(ad.b(0, 0) == 2.0f);
  Matrix prod = matmul(ad.a, transpose(ad.b));
  CHECK(prod(0, 0) == 4.0f);
  CHECK(prod(2, 1) == 0.0f);

  svd.sigma = {0.0};
  LowRankAdapter zero = factorize(svd);
  CHECK(frobenius_norm(zero.a) == 0.0);
  CHECK(frobenius_norm(zero.b) == 0.0);
}

TEST_CASE("factorize stays within binary16 rounding of the reconstruction", "[lowrank]") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(mix_seed(seed, 17));
    std::size_t k = 4 + rng.below(20), m = 4 + rng.below(20);
    std::size_t r = 1 + rng.below(4);
    // Random orthonormal factors from the SVD of a random matrix.
    SvdResult svd = truncated_svd(test::random_matrix(seed + 60, k, m, 1.0), r);
    for (auto& s : svd.sigma) s = 0.01 + 3.0 * rng.uniform();
    std::sort(svd.sigma.rbegin(), svd.sigma.rend());
    LowRankAdapter ad = factorize(svd);
    Matrix target = reconstruct(svd);
    Matrix got = matmul(ad.a, transpose(ad.b));
    double err = frobenius_norm(residual(target, got));
    REQUIRE(err <= 2e-3 * frobenius_norm(target));
  }
}

TEST_CASE("build_adapter compensates the residual", "[lowrank]") {
  Matrix w = test::random_matrix(70, 24, 18);

  SECTION("zero residual gives a zero adapter") {
    LowRankAdapter ad = build_adapter(w, w, 4);
    CHECK(frobenius_norm(ad.a) == 0.0);
    CHECK(frobenius_norm(ad.b) == 0.0);
  }

  SECTION("exactly low-rank residuals vanish") {
    Rng rng(mix_seed(3, 31));
    Matrix u(24, 2), v(18, 2);
    for (auto& x : u.data()) x = static_cast<float>(rng.normal());
    for (auto& x : v.data()) x = static_cast<float>(rng.normal());
    Matrix e = matmul(u, transpose(v));
    Matrix w_hat = residual(w, e);  // w - e
    LowRankAdapter ad = build_adapter(w, w_hat, 2);
    Matrix compensated = matmul(ad.a, transpose(ad.b));
    add_inplace(compensated, w_hat);
    CHECK(frobenius_norm(residual(w, compensated)) <= 1e-3 * frobenius_norm(e));
  }

  SECTION("error is non-increasing in rank and matches the tail") {
    Matrix w_hat = test::random_matrix(71, 24, 18);
    Matrix e = residual(w, w_hat);
    auto oracle = oracle_singular_values(e);
    double prev = frobenius_norm(e) * (1.0 + 1e-6);
    for (std::size_t r = 1; r <= 18; r += 4) {
      LowRankAdapter ad = build_adapter(w, w_hat, r);
      Matrix compensated = matmul(ad.a, transpose(ad.b));
      add_inplace(compensated, w_hat);
      double err = frobenius_norm(residual(w, compensated));
      REQUIRE(err <= prev * (1.0 + 1e-3));
      double tail = tail_energy(oracle, r);
      REQUIRE(err == Catch::Approx(tail).margin(1e-3 * frobenius_norm(e)));
      prev = err;
    }
  }
}

TEST_CASE("randomized path tracks the exact kernel", "[lowrank]") {
  // Decaying spectrum: randomized subspace iteration is near-exact.
  {
    SvdResult base = truncated_svd(test::random_matrix(80, 96, 160, 1.0), 12);
    for (std::size_t i = 0; i < base.sigma.size(); ++i) base.sigma[i] = std::pow(0.5, i);
    Matrix m = reconstruct(base);
    SvdResult exact = truncated_svd(m, 6, SvdMethod::Jacobi);
    SvdResult fast = truncated_svd(m, 6, SvdMethod::Randomized);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(fast.sigma[i] == Catch::Approx(exact.sigma[i]).epsilon(1e-4));
    check_orthonormal(fast.u);
    check_orthonormal(fast.v);
  }

  // Flat spectrum: singular values may be slightly underestimated but the
  // reconstruction must stay close to optimal.
  {
    Matrix m = test::random_matrix(81, 96, 160, 1.0);
    SvdResult exact = truncated_svd(m, 8, SvdMethod::Jacobi);
    SvdResult fast = truncated_svd(m, 8, SvdMethod::Randomized);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(fast.sigma[i] <= exact.sigma[i] * (1.0 + 1e-9));
      CHECK(fast.sigma[i] >= exact.sigma[i] * 0.90);
    }
    double err_exact = frobenius_norm(residual(m, reconstruct(exact)));
    double err_fast = frobenius_norm(residual(m, reconstruct(fast)));
    CHECK(err_fast <= err_exact * 1.10);
  }

  // Auto picks the randomized path above the exact-dimension cutoff.
  Matrix big = test::random_matrix(82, 160, 192, 1.0);
  SvdResult fast = truncated_svd(big, 4);
  SvdResult exact = truncated_svd(big, 4, SvdMethod::Jacobi);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fast.sigma[i] >= exact.sigma[i] * 0.90);
}

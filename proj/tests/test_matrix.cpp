#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ditq/matrix.hpp"
#include "helpers.hpp"

using namespace ditq;

TEST_CASE("Matrix construction enforces invariants", "[tensor]") {
  CHECK_THROWS_AS(Matrix(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(3, 0), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(2, 2, {1.0f, 2.0f, 3.0f}), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0f, std::numeric_limits<float>::infinity()}),
                  std::invalid_argument);
  Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6.0f);
}

TEST_CASE("absmax_per_channel examples", "[tensor]") {
  Matrix m(2, 2, {1, -3, 2, 0});
  auto rows = absmax_per_channel(m, ChannelAxis::InputChannel);
  CHECK(rows == std::vector<float>{3.0f, 2.0f});

  Matrix zero(2, 2);
  CHECK(absmax_per_channel(zero, ChannelAxis::InputChannel) == std::vector<float>{0.0f, 0.0f});

  Matrix single(1, 1, {5.0f});
  CHECK(absmax_per_channel(single, ChannelAxis::InputChannel) == std::vector<float>{5.0f});
  CHECK(absmax_per_channel(single, ChannelAxis::OutputChannel) == std::vector<float>{5.0f});
}

TEST_CASE("absmax_per_channel matches brute force on random matrices", "[tensor]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(seed, 77));
    std::size_t rows = 1 + rng.below(64);
    std::size_t cols = 1 + rng.below(64);
    Matrix m = test::random_matrix(seed, rows, cols, 3.0);
    for (ChannelAxis axis : {ChannelAxis::InputChannel, ChannelAxis::OutputChannel}) {
      auto got = absmax_per_channel(m, axis);
      std::size_t n = axis == ChannelAxis::InputChannel ? rows : cols;
      for (std::size_t c = 0; c < n; ++c) {
        float expect = 0.0f;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            if ((axis == ChannelAxis::InputChannel ? i : j) == c)
              expect = std::max(expect, std::fabs(m(i, j)));
        REQUIRE(got[c] == expect);
      }
    }
  }
}

TEST_CASE("absmax is permutation-equivariant", "[tensor]") {
  Matrix m = test::random_matrix(11, 9, 5);
  auto base = absmax_per_channel(m, ChannelAxis::InputChannel);
  std::vector<std::size_t> perm{4, 2, 8, 0, 7, 1, 3, 6, 5};
  Matrix shuffled(9, 5);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 5; ++j) shuffled(i, j) = m(perm[i], j);
  auto got = absmax_per_channel(shuffled, ChannelAxis::InputChannel);
  for (std::size_t i = 0; i < 9; ++i) CHECK(got[i] == base[perm[i]]);
}

TEST_CASE("frobenius_norm examples", "[tensor]") {
  CHECK(frobenius_norm(Matrix(1, 2, {3, 4})) == Catch::Approx(5.0));
  CHECK(frobenius_norm(Matrix(4, 4)) == 0.0);
  CHECK(frobenius_norm(Matrix::identity(2)) == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("matmul and matmul_ta agree with a naive oracle", "[tensor]") {
  Matrix w = test::random_matrix(3, 12, 7);
  Matrix x = test::random_matrix(4, 12, 9);
  Matrix got = matmul_ta(w, x);
  Matrix oracle = test::naive_forward_oracle(w, x);
  REQUIRE(got.rows() == 7);
  REQUIRE(got.cols() == 9);
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j)
      CHECK(got(i, j) == Catch::Approx(oracle(i, j)).margin(1e-5));

  Matrix a = test::random_matrix(5, 4, 6);
  Matrix b = test::random_matrix(6, 6, 3);
  Matrix ab = matmul(a, b);
  Matrix ab_oracle = test::naive_forward_oracle(transpose(a), b);
  for (std::size_t i = 0; i < ab.rows(); ++i)
    for (std::size_t j = 0; j < ab.cols(); ++j)
      CHECK(ab(i, j) == Catch::Approx(ab_oracle(i, j)).margin(1e-5));

  CHECK_THROWS_AS(matmul(a, Matrix(5, 2)), std::invalid_argument);
  CHECK_THROWS_AS(matmul_ta(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("scale_channels multiplies and divides slices", "[tensor]") {
  Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
  std::vector<float> f{2.0f, 0.5f};
  Matrix scaled = scale_channels(m, ChannelAxis::InputChannel, f);
  CHECK(scaled(0, 0) == 2.0f);
  CHECK(scaled(1, 0) == 2.0f);
  Matrix back = scale_channels(scaled, ChannelAxis::InputChannel, f, /*divide=*/true);
  CHECK(back == m);
  CHECK_THROWS_AS(scale_channels(m, ChannelAxis::OutputChannel, f), std::invalid_argument);
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <vector>

#include "ditq/calib.hpp"
#include "helpers.hpp"

using namespace ditq;

TEST_CASE("record folds channel rows into the accumulators", "[calib]") {
  ActivationStats stats(2, 1);
  stats.record(0, Matrix(1, 2, {1.0f, -3.0f}));  // one channel, two elements
  CHECK(stats.absmax()(0, 0) == 3.0f);
  CHECK(stats.run_min()[0] == -3.0f);
  CHECK(stats.run_max()[0] == 1.0f);
  CHECK(stats.samples_seen()[0] == 1);
  CHECK(stats.samples_seen()[1] == 0);
}

TEST_CASE("recording a zero matrix only widens toward zero", "[calib]") {
  ActivationStats stats(1, 2);
  stats.record(0, Matrix(2, 2, {2, 5, 4, 1}));
  stats.record(0, Matrix(2, 2));
  CHECK(stats.absmax()(0, 0) == 5.0f);
  CHECK(stats.absmax()(0, 1) == 4.0f);
  CHECK(stats.run_min()[0] == 0.0f);  // previously positive, pulled down to 0
  CHECK(stats.run_max()[0] == 5.0f);
}

TEST_CASE("record accumulates the max across calls", "[calib]") {
  ActivationStats stats(1, 1);
  stats.record(0, Matrix(1, 1, {2.0f}));
  stats.record(0, Matrix(1, 1, {5.0f}));
  CHECK(stats.absmax()(0, 0) == 5.0f);
  CHECK(stats.samples_seen()[0] == 2);
}

TEST_CASE("record rejects bad shapes and timesteps", "[calib]") {
  ActivationStats stats(2, 3);
  CHECK_THROWS_AS(stats.record(0, Matrix(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(stats.record(2, Matrix(3, 2)), std::out_of_range);
}

TEST_CASE("global_absmax is the column-wise max", "[calib]") {
  ActivationStats stats(2, 2);
  stats.record(0, Matrix(2, 1, {1.0f, 2.0f}));
  stats.record(1, Matrix(2, 1, {3.0f, 1.0f}));
  CHECK(stats.global_absmax() == std::vector<float>{3.0f, 2.0f});

  ActivationStats one(1, 2);
  one.record(0, Matrix(2, 1, {4.0f, -6.0f}));
  CHECK(one.global_absmax() == std::vector<float>{4.0f, 6.0f});

  ActivationStats zeros(2, 2);
  zeros.record(0, Matrix(2, 3));
  CHECK(zeros.global_absmax() == std::vector<float>{0.0f, 0.0f});

  ActivationStats empty(2, 2);
  CHECK_THROWS_AS(empty.global_absmax(), std::invalid_argument);
}

TEST_CASE("global_absmax equals the static min/max range on shared samples", "[calib]") {
  ActivationStats stats(4, 6);
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    stats.record(seed % 4, test::random_matrix(seed, 6, 5, 2.0));
  auto global = stats.global_absmax();
  for (std::size_t j = 0; j < 6; ++j) {
    float range = std::max(std::fabs(stats.run_min()[j]), std::fabs(stats.run_max()[j]));
    CHECK(global[j] == range);
    CHECK(stats.run_min()[j] <= stats.run_max()[j]);
  }
  // ... and dominates every per-timestep row.
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 6; ++j) CHECK(global[j] >= stats.absmax()(t, j));
}

TEST_CASE("merge has an identity and commutes", "[calib]") {
  ActivationStats a(3, 4);
  a.record(1, test::random_matrix(1, 4, 6, 3.0));
  a.record(2, test::random_matrix(2, 4, 6, 1.0));
  ActivationStats empty(3, 4);
  CHECK(ActivationStats::merge(a, empty) == a);
  ActivationStats b(3, 4);
  b.record(0, test::random_matrix(3, 4, 6, 2.0));
  CHECK(ActivationStats::merge(a, b) == ActivationStats::merge(b, a));
  CHECK_THROWS_AS(ActivationStats::merge(a, ActivationStats(2, 4)), std::invalid_argument);
}

TEST_CASE("sharded collectors merge to the single-collector result", "[calib]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ActivationStats whole(3, 5);
    ActivationStats shard_a(3, 5);
    ActivationStats shard_b(3, 5);
    Rng rng(mix_seed(seed, 99));
    for (int i = 0; i < 12; ++i) {
      std::size_t t = rng.below(3);
      Matrix x = test::random_matrix(seed * 100 + i, 5, 4, 2.0);
      whole.record(t, x);
      (rng.below(2) == 0 ? shard_a : shard_b).record(t, x);
    }
    REQUIRE(ActivationStats::merge(shard_a, shard_b) == whole);
  }
}

TEST_CASE("record order does not matter", "[calib]") {
  std::vector<std::pair<std::size_t, Matrix>> events;
  for (int i = 0; i < 10; ++i)
    events.emplace_back(i % 3, test::random_matrix(500 + i, 4, 3, 2.0));
  ActivationStats forward(3, 4), backward(3, 4);
  for (const auto& [t, x] : events) forward.record(t, x);
  for (auto it = events.rbegin(); it != events.rend(); ++it) backward.record(it->first, it->second);
  CHECK(forward == backward);
}

TEST_CASE("stats serialize and reload", "[calib]") {
  ActivationStats stats(3, 4);
  stats.record(0, test::random_matrix(10, 4, 6, 2.0));
  stats.record(2, test::random_matrix(11, 4, 6, 5.0));
  auto prefix = std::filesystem::temp_directory_path() / "ditq_io_tests" / "stats";
  std::filesystem::create_directories(prefix.parent_path());
  write_stats(prefix, stats);
  CHECK(read_stats(prefix) == stats);
}
